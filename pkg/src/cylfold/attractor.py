"""Monte Carlo attractor covers, stripe density, the fold witness, the
distortion diagnostic and the two-component toy example."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import CylinderPoint, wrap01
from .errors import DomainError, EvidenceFailure, PreconditionError
from .skewmap import CylinderMap, SkewParams, apply

MIN_BLOCK = 256      # smallest work unit; streams are keyed per sample, so blocking never changes results
FLUSH_STEPS = 64     # steps buffered between histogram updates
THETA_REFRESH = 2.0 ** -48
MIN_GRID = (64, 32)

# ---------------------------------------------------------------------------
# counter-based random numbers (splitmix64 finalizer)
# ---------------------------------------------------------------------------

_U64 = np.uint64


def _mix(z):
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = z + _U64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> _U64(27))) * _U64(0x94D049BB133111EB)
    return z ^ (z >> _U64(31))


def _uniform(keys, stream: int, step: int):
    """Uniform [0, 1) doubles for per-sample keys at a given (stream, step)."""
    z = _mix(keys ^ _mix(_U64((stream << 48) ^ step)))
    return (z >> _U64(11)).astype(np.float64) * 2.0 ** -53


def _sample_keys(seed: int, idx: np.ndarray):
    return _mix(_mix(_U64(seed & 0xFFFFFFFFFFFFFFFF)) ^ idx.astype(np.uint64))


# ---------------------------------------------------------------------------
# grid cover
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class GridCover:
    """Visit counts on an R_theta x R_y grid; ``hits[iy, itheta]`` with
    row 0 at y = -1."""

    resolution: tuple
    hits: np.ndarray

    @classmethod
    def empty(cls, resolution) -> "GridCover":
        rt, ry = int(resolution[0]), int(resolution[1])
        return cls((rt, ry), np.zeros((ry, rt), dtype=np.int64))

    @property
    def cells(self) -> np.ndarray:
        return self.hits > 0

    @property
    def cell_height(self) -> float:
        return 2.0 / self.resolution[1]

    def count(self) -> int:
        return int(np.count_nonzero(self.hits))

    def cell_of(self, theta, y):
        rt, ry = self.resolution
        it = np.minimum((np.asarray(wrap01(np.asarray(theta, dtype=float))) * rt).astype(np.int64), rt - 1)
        iy = np.clip(np.floor((np.asarray(y, dtype=float) + 1.0) * 0.5 * ry).astype(np.int64), 0, ry - 1)
        return it, iy

    def flat_index(self, theta, y):
        it, iy = self.cell_of(theta, y)
        return iy * self.resolution[0] + it

    def row_interval(self, iy: int):
        h = self.cell_height
        return -1.0 + iy * h, -1.0 + (iy + 1) * h

    def neighbourhood(self, it: int, iy: int):
        """The cell and its 8 neighbours; theta wraps, y clamps."""
        rt, ry = self.resolution
        out = set()
        for dy in (-1, 0, 1):
            for dt in (-1, 0, 1):
                out.add(((it + dt) % rt, min(max(iy + dy, 0), ry - 1)))
        return sorted(out)

    def is_interior(self, it: int, iy: int) -> bool:
        c = self.cells
        return all(c[j, i] for i, j in self.neighbourhood(it, iy))

    def merged(self, other: "GridCover") -> "GridCover":
        if other.resolution != self.resolution:
            raise ValueError("resolution mismatch")
        return GridCover(self.resolution, self.hits + other.hits)

    def to_pgm(self) -> bytes:
        rt, ry = self.resolution
        img = np.where(self.cells[::-1], 255, 0).astype(np.uint8)
        return f"P5\n{rt} {ry}\n255\n".encode("ascii") + img.tobytes()

    def write_pgm(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_pgm())

    @classmethod
    def from_pgm(cls, data: bytes) -> "GridCover":
        parts = data.split(maxsplit=4)
        if len(parts) < 5 or parts[0] != b"P5" or parts[3] != b"255":
            raise ValueError("not a P5 PGM with maxval 255")
        rt, ry = int(parts[1]), int(parts[2])
        img = np.frombuffer(parts[4][: rt * ry], dtype=np.uint8).reshape(ry, rt)
        return cls((rt, ry), (img[::-1] > 0).astype(np.int64))

    @classmethod
    def read_pgm(cls, path) -> "GridCover":
        with open(path, "rb") as fh:
            return cls.from_pgm(fh.read())


# ---------------------------------------------------------------------------
# orbit sampling
# ---------------------------------------------------------------------------


def _run_block(m: CylinderMap, seed: int, lo: int, hi: int, burn_in: int, iters: int,
               resolution) -> np.ndarray:
    rt, ry = resolution
    ncell = rt * ry
    keys = _sample_keys(seed, np.arange(lo, hi))
    theta = _uniform(keys, 0, 0)
    y = 2.0 * _uniform(keys, 1, 0) - 1.0
    hits = np.zeros(ncell, dtype=np.int64)
    buf = []
    total = burn_in + iters
    for step in range(1, total + 1):
        theta, y = m.apply_xy(theta, y)
        # 16*theta mod 1 discards four mantissa bits per step; restore fresh
        # low-order digits as a Lebesgue-typical orbit would carry them
        theta = wrap01(theta + THETA_REFRESH * _uniform(keys, 2, step))
        if step <= burn_in:
            continue
        if not np.all(np.abs(y) < 1.0):
            raise DomainError("orbit left the open cylinder; the map is not trapping")
        it = np.minimum((theta * rt).astype(np.int64), rt - 1)
        iy = np.minimum(((y + 1.0) * (0.5 * ry)).astype(np.int64), ry - 1)
        buf.append(iy * rt + it)
        if len(buf) == FLUSH_STEPS or step == total:
            hits += np.bincount(np.concatenate(buf), minlength=ncell)
            buf = []
    return hits


def estimate_attractor(m: CylinderMap, samples: int = 1000, burn_in: int = 1000,
                       iters: int = 100_000, grid=(512, 128), seed: int = 42,
                       threads: int = 1) -> GridCover:
    """Union of late-orbit cell visits over ``samples`` uniform initial points."""
    if samples < 1:
        raise ValueError("need at least one sample")
    rt, ry = int(grid[0]), int(grid[1])
    if rt < MIN_GRID[0] or ry < MIN_GRID[1]:
        raise ValueError(f"grid must be at least {MIN_GRID[0]}x{MIN_GRID[1]}")
    cover = GridCover.empty((rt, ry))
    if iters <= 0:
        return cover
    size = max(MIN_BLOCK, -(-samples // max(1, threads)))
    blocks = [(lo, min(lo + size, samples)) for lo in range(0, samples, size)]

    def work(b):
        return _run_block(m, seed, b[0], b[1], burn_in, iters, (rt, ry))

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(work, blocks))
    else:
        parts = [work(b) for b in blocks]
    flat = np.zeros(rt * ry, dtype=np.int64)
    for h in parts:  # integer sums commute, so block order is immaterial
        flat += h
    cover.hits = flat.reshape(ry, rt)
    return cover


def stripe_rows(cover: GridCover, params: SkewParams) -> np.ndarray:
    lo, hi = params.J_out
    ry = cover.resolution[1]
    rows = [iy for iy in range(ry) if cover.row_interval(iy)[0] <= hi and cover.row_interval(iy)[1] >= lo]
    return np.array(rows, dtype=np.int64)


def stripe_coverage(cover: GridCover, params: SkewParams) -> float:
    rows = stripe_rows(cover, params)
    if rows.size == 0:
        return 0.0
    return float(np.mean(cover.cells[rows]))


# ---------------------------------------------------------------------------
# fold witness
# ---------------------------------------------------------------------------

MAX_TOL = 1e-12


@dataclass
class WitnessReport:
    p: CylinderPoint
    fp: CylinderPoint
    M: float
    interior: bool
    at_max: bool
    boundary: bool
    fp_cell_set: bool
    highest_set_row_top: float
    cell_height: float
    fold_gap: float

    @property
    def passed(self) -> bool:
        return self.interior and self.at_max and self.boundary

    def to_dict(self) -> dict:
        return {
            "status": "PASS" if self.passed else "FAIL",
            "p": [self.p.theta, self.p.y],
            "fp": [self.fp.theta, self.fp.y],
            "M": self.M,
            "interior": self.interior,
            "at_max": self.at_max,
            "boundary": self.boundary,
            "fp_cell_set": self.fp_cell_set,
            "highest_set_row_top": self.highest_set_row_top,
            "cell_height": self.cell_height,
            "fold_gap": self.fold_gap,
        }


def find_fold_witness(m: CylinderMap, cover: GridCover, report) -> WitnessReport:
    """Check that the fold maximiser p sits inside the cover while f(p) sits
    on its upper boundary."""
    fold = report.get("fold") if report is not None else None
    if fold is None or not fold.passed:
        raise PreconditionError("the fold condition is not certified for this map")
    pt = report.fold_point
    M = float(report.fold_max)
    p = CylinderPoint(pt[0], pt[1])
    fp = apply(m, p)
    it, iy = (int(v) for v in cover.cell_of(p.theta, p.y))
    interior = cover.is_interior(it, iy)
    if not interior:
        raise EvidenceFailure("interior", f"cell ({it}, {iy}) of p or a neighbour is not in the cover")
    at_max = abs(fp.y - M) <= MAX_TOL
    if not at_max:
        raise EvidenceFailure("max", f"y(f(p)) = {fp.y!r} differs from M = {M!r}")
    h = cover.cell_height
    rows = np.flatnonzero(cover.cells.any(axis=1))
    top = float(cover.row_interval(int(rows.max()))[1]) if rows.size else -1.0
    above = [r for r in rows if cover.row_interval(int(r))[0] > M + h]
    ft, fy = (int(v) for v in cover.cell_of(fp.theta, fp.y))
    fp_set = bool(cover.cells[fy, ft])
    boundary = not above and fp_set
    if not boundary:
        why = "f(p)'s cell is not in the cover" if not fp_set else f"cover has cells above y = {M + h}"
        raise EvidenceFailure("boundary", why)
    return WitnessReport(p, fp, M, interior, at_max, boundary, fp_set, top, h,
                         float(report.fold_gap))


# ---------------------------------------------------------------------------
# distortion
# ---------------------------------------------------------------------------


def distortion_ratio(m: CylinderMap, theta0: float, half_width: float, n: int,
                     samples: int = 65, y0: float = 0.0) -> float:
    """max/min over the segment of the n-step tangent stretch J^n."""
    if n <= 0:
        return 1.0
    theta = theta0 + np.linspace(-half_width, half_width, samples)
    y = np.full(samples, float(y0))
    tx, ty = np.ones(samples), np.zeros(samples)
    logJ = np.zeros(samples)
    for _ in range(n):
        A, B, C, D = m.jac(theta, y)
        vx, vy = A * tx + B * ty, C * tx + D * ty
        norm = np.hypot(vx, vy)
        logJ += np.log(norm)
        tx, ty = vx / norm, vy / norm
        theta, y = m.apply_xy(theta, y)
    return float(np.exp(logJ.max() - logJ.min()))


# ---------------------------------------------------------------------------
# two-component toy space: [-1, 1] together with the isolated point 2
# ---------------------------------------------------------------------------


def _toy_f(x: Fraction) -> Fraction:
    if x == 2:
        return Fraction(0)
    if -1 <= x <= 1:
        return Fraction(2)
    raise DomainError(f"{x} is not in [-1, 1] u {{2}}")


def _toy_omega(x: Fraction, max_steps: int = 64) -> frozenset:
    seen = []
    for _ in range(max_steps):
        if x in seen:
            return frozenset(seen[seen.index(x):])
        seen.append(x)
        x = _toy_f(x)
    raise RuntimeError("no cycle found")


def _toy_interior(point: Fraction, A: frozenset, samples) -> bool:
    """Is the ball of radius 1/2 around ``point`` (within the space) inside A?"""
    ball = [x for x in samples if abs(x - point) < Fraction(1, 2)]
    return all(x in A for x in ball)


def appendix_a_demo() -> dict:
    grid = [Fraction(k, 64) for k in range(-64, 65)] + [Fraction(2)]
    omegas = {x: _toy_omega(x) for x in grid}
    A = frozenset().union(*omegas.values())
    alternates = all(_toy_f(_toy_f(x)) == x for x in A) and all(w == A for w in omegas.values())
    interior = {str(x): _toy_interior(x, A, grid) for x in sorted(A)}
    f2 = _toy_f(Fraction(2))
    return {
        "attractor": [int(x) for x in sorted(A)],
        "f_of_2": int(f2),
        "interior": interior,
        "boundary": {k: not v for k, v in interior.items()},
        "orbits_alternate": alternates,
        "interior_to_boundary": interior["2"] and not interior[str(f2)],
    }
