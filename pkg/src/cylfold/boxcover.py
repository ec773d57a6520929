"""Higher-dimensional constructions: a box covered by two affine contractions
of itself, contractions onto an eps/8-net, and the fold map.

The disc D^n is modelled by the max-norm box [-1, 1]^n throughout.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import CoverageFailure, ParamError

MIN_COVER_GRID = 16


@dataclass(frozen=True)
class BoxSpec:
    n: int
    radii: tuple
    lam: float

    def violations(self) -> list[str]:
        r, lam = self.radii, self.lam
        out = []
        if self.n < 2 or len(r) != self.n:
            out.append("need n >= 2 radii")
        if not 0.5 < lam < 1:
            out.append("lambda must lie in (1/2, 1)")
        for j in range(len(r) - 1):
            if not r[j + 1] < lam * r[j]:
                out.append(f"r_{j + 2} < lambda r_{j + 1} fails")
        if r and not lam * r[-1] > r[0] / 2:
            out.append("lambda r_n > r_1 / 2 fails")
        if any(not 0 < v <= 1 for v in r):
            out.append("radii must lie in (0, 1]")
        return out

    def to_dict(self) -> dict:
        return {"n": self.n, "radii": list(self.radii), "lambda": self.lam}


@dataclass(frozen=True, eq=False)
class AffineMap:
    linear: np.ndarray
    translation: np.ndarray

    def __call__(self, x):
        return np.asarray(x, dtype=float) @ self.linear.T + self.translation

    def inverse(self, x):
        return np.linalg.solve(self.linear, (np.asarray(x, dtype=float) - self.translation).T).T

    @property
    def op_norm(self) -> float:
        return float(np.linalg.norm(self.linear, 2))

    def to_dict(self) -> dict:
        return {"linear": self.linear.tolist(), "translation": self.translation.tolist()}


def rotation_matrix(n: int) -> np.ndarray:
    """R(x) = ((-1)^(n+1) x_n, x_1, ..., x_{n-1})."""
    R = np.zeros((n, n))
    R[0, n - 1] = (-1.0) ** (n + 1)
    for j in range(1, n):
        R[j, j - 1] = 1.0
    return R


def build_box_cover(n: int, lam: float, rho: float):
    if n < 2:
        raise ParamError("n must be at least 2")
    if not 0.5 < lam < 1:
        raise ParamError(f"lambda = {lam} not in (1/2, 1)")
    if not 0 < rho < lam:
        raise ParamError(f"need 0 < rho < lambda (rho = {rho}, lambda = {lam})")
    if not lam * rho ** (n - 1) > 0.5:
        raise ParamError(f"need lambda rho^(n-1) > 1/2, got {lam * rho ** (n - 1):.6g}")
    radii = tuple(rho ** j for j in range(1, n + 1))
    spec = BoxSpec(n, radii, lam)
    bad = spec.violations()
    if bad:
        raise ParamError("; ".join(bad))
    L = lam * rotation_matrix(n)
    e1 = np.zeros(n)
    e1[0] = radii[0] / 2
    return spec, AffineMap(L, e1.copy()), AffineMap(L, -e1)


def cover_slack(spec: BoxSpec, grid_per_axis: int) -> float:
    """Max-norm distance from any point of B to the nearest grid node."""
    return max(r / (grid_per_axis - 1) for r in spec.radii)


def _box_margin(spec: BoxSpec, psi: AffineMap, x: np.ndarray) -> np.ndarray:
    """Max-norm distance from x to the complement of psi(B) (negative outside).

    psi = lambda * signed permutation + shift, so distances scale by lambda."""
    r = np.asarray(spec.radii)
    pre = psi.inverse(x)
    return psi.op_norm * np.min(r - np.abs(pre), axis=-1)


def verify_box_cover(spec: BoxSpec, psi1: AffineMap, psi2: AffineMap, grid_per_axis: int = 33) -> float:
    """Smallest over grid nodes x of B of max_i dist(x, complement of psi_i(B)).

    Raises CoverageFailure at the first node outside both open images.  The
    inclusion holds for all of B once the margin exceeds ``cover_slack``.
    """
    if grid_per_axis < MIN_COVER_GRID:
        raise ValueError(f"grid_per_axis must be >= {MIN_COVER_GRID}")
    axes = [np.linspace(-r, r, grid_per_axis) for r in spec.radii]
    worst = math.inf
    # iterate over the first axis to keep memory bounded in higher n
    rest = np.array(list(itertools.product(*axes[1:])))
    for x1 in axes[0]:
        pts = np.column_stack([np.full(rest.shape[0], x1), rest])
        marg = np.maximum(_box_margin(spec, psi1, pts), _box_margin(spec, psi2, pts))
        i = int(np.argmin(marg))
        if marg[i] <= 0:
            raise CoverageFailure(pts[i].tolist(), "grid point not in int psi1(B) or int psi2(B)")
        worst = min(worst, float(marg[i]))
    return worst


@dataclass(eq=False)
class EpsNet:
    """Product lattice given by its per-axis coordinates; the points
    themselves are only built on request."""

    axes: tuple
    eps: float
    step: float

    @property
    def scale(self) -> float:
        return self.eps / 16

    @property
    def counts(self) -> tuple:
        return tuple(ax.size for ax in self.axes)

    @property
    def spacing(self) -> tuple:
        return tuple(self.step for _ in self.axes)

    @property
    def N(self) -> int:
        return math.prod(self.counts)

    @property
    def points(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1).reshape(-1, len(self.axes))

    def maps(self) -> list[AffineMap]:
        L = self.scale * np.eye(len(self.axes))
        return [AffineMap(L, p.copy()) for p in self.points]

    def nearest(self, x) -> np.ndarray:
        """Nearest net point; for a product lattice this is the nearest value per axis."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.empty_like(x)
        for j, ax in enumerate(self.axes):
            if ax.size == 1:
                out[:, j] = ax[0]
                continue
            i = np.clip(np.searchsorted(ax, x[:, j]), 1, ax.size - 1)
            lo, hi = ax[i - 1], ax[i]
            out[:, j] = np.where(x[:, j] - lo <= hi - x[:, j], lo, hi)
        return out

    def max_gap(self, spec: BoxSpec, samples: int = 10_000, seed: int = 0) -> float:
        """Largest distance from random points of B to the nearest net point."""
        rng = np.random.default_rng(seed)
        r = np.asarray(spec.radii)
        x = rng.uniform(-r, r, size=(samples, spec.n))
        return float(np.max(np.linalg.norm(x - self.nearest(x), axis=1)))

    def to_dict(self) -> dict:
        return {"eps": self.eps, "N": self.N, "counts": list(self.counts),
                "spacing": list(self.spacing), "contraction": self.scale}


def build_eps_net_contractions(spec: BoxSpec, eps: float) -> EpsNet:
    """Lattice anchored at -r_j with spacing h per axis.

    Every coordinate is within h/2 of a lattice value (an end point is added
    when the leftover exceeds h/2), so the Euclidean covering radius is at
    most h sqrt(n) / 2 <= eps/8.
    """
    if not eps > 0:
        raise ParamError("eps must be positive")
    s = eps / 8
    h = min(s, 2 * s / math.sqrt(spec.n))
    axes = []
    for r in spec.radii:
        k = math.floor(2 * r / h + 1e-9)
        ax = -r + h * np.arange(k + 1)
        if r - ax[-1] > h / 2:
            ax = np.append(ax, r)
        axes.append(ax)
    return EpsNet(tuple(axes), float(eps), h)


@dataclass
class FoldReport:
    n: int
    alpha: float
    beta_prime: float
    shrink: float
    fold_meets_interior: bool
    boundary_distance: float
    near_boundary: bool
    image_in_interior: bool
    strict_fold: bool

    @property
    def passed(self) -> bool:
        return self.fold_meets_interior and self.near_boundary and self.image_in_interior and self.strict_fold

    def to_dict(self) -> dict:
        return {
            "status": "PASS" if self.passed else "FAIL",
            "n": self.n, "alpha": self.alpha, "beta_prime": self.beta_prime, "shrink": self.shrink,
            "fold_meets_interior": self.fold_meets_interior,
            "boundary_distance": self.boundary_distance,
            "near_boundary": self.near_boundary,
            "image_in_interior": self.image_in_interior,
            "strict_fold": self.strict_fold,
            "disc_model": "max-norm box [-1,1]^n",
        }


class FoldMap:
    """x -> (alpha x_1^2 + beta', shrink x_2, ..., shrink x_n)."""

    def __init__(self, n, alpha, beta_prime, shrink):
        self.n, self.alpha, self.beta_prime, self.shrink = n, alpha, beta_prime, shrink

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = self.shrink * x
        out[..., 0] = self.alpha * x[..., 0] ** 2 + self.beta_prime
        return out


def build_fold_map(n: int, alpha: float, beta_prime: float, shrink: float,
                   box: BoxSpec | None = None):
    if n < 1:
        raise ParamError("n must be positive")
    if alpha > 0:
        raise ParamError("alpha must not be positive")
    if not beta_prime + abs(alpha) < 1:
        raise ParamError("need beta' + |alpha| < 1")
    if not beta_prime + alpha > -1:
        raise ParamError("need beta' + alpha > -1")
    if not 0 < shrink < 1:
        raise ParamError("shrink must lie in (0, 1)")
    psi = FoldMap(n, alpha, beta_prime, shrink)
    r1 = box.radii[0] if box is not None else 1.0
    # image of D^n: x_1 in [beta' + alpha, beta'], others in shrink*[-1, 1]
    x1_lo, x1_hi = beta_prime + alpha, beta_prime
    image_in = x1_hi < 1 and x1_lo > -1 and shrink < 1
    # image of the fold {x_1 = 0} is {beta'} x shrink*[-1, 1]^(n-1)
    dist = min(1 - beta_prime, 1 + beta_prime, 1 - shrink) if n > 1 else min(1 - beta_prime, 1 + beta_prime)
    report = FoldReport(n, alpha, beta_prime, shrink, fold_meets_interior=-r1 < 0 < r1,
                        boundary_distance=float(dist), near_boundary=dist <= 1 - beta_prime,
                        image_in_interior=bool(image_in), strict_fold=alpha < 0)
    return psi, report
