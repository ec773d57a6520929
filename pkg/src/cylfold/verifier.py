"""Grid-plus-slack certification of the defining conditions of the map class.

Every quantity is evaluated at cell centres of a grid aligned with the arc
and fiber-piece breaks, and bounded over the whole cell with second-order
Taylor enclosures whose second-derivative bounds come from the analytic
structure of the map (per arc/gap region and fiber piece).  Arithmetic is
plain floating point, so the certificates are semi-rigorous: rounding is not
directed, but it is ~1e-12 against margins of order 1e-3.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .core import ConeConfig
from .errors import GridTooCoarse
from .skewmap import CylinderMap, SkewParams, branch_domain, branch_target, inverse_branch_many

PASS = "PASS"
FAIL = "FAIL"
LAMBDA_MIN = 2.0
MIN_GRID = (256, 64)
DEFAULT_GRID = (2048, 512)
WINDOW_GRID = 256
INV_LIP_SAFETY = 1.05  # inflation of sampled inverse-Jacobian entries

# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def _clean(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_clean(x) for x in v]
    return v


@dataclass
class Fragment:
    condition: str
    status: str
    margin: float
    constants: dict = field(default_factory=dict)
    witness: dict | None = None
    message: str = ""

    @property
    def passed(self) -> bool:
        return self.status == PASS

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "status": self.status,
            "margin": _clean(self.margin),
            "constants": _clean(self.constants),
            "witness": _clean(self.witness),
            "message": self.message,
        }


def _fragment(condition, ok, margin, constants, witness=None, message=""):
    ok = bool(ok) and math.isfinite(margin) and margin > 0
    return Fragment(condition, PASS if ok else FAIL, float(margin), constants,
                    None if ok else witness, message)


@dataclass
class CheckReport:
    fragments: list

    @property
    def status(self) -> str:
        return PASS if self.fragments and all(f.passed for f in self.fragments) else FAIL

    @property
    def passed(self) -> bool:
        return self.status == PASS

    @property
    def margin(self) -> float:
        return min((f.margin for f in self.fragments), default=float("nan"))

    def get(self, condition: str) -> Fragment | None:
        for f in self.fragments:
            if f.condition == condition:
                return f
        return None

    def _const(self, cond, key):
        f = self.get(cond)
        return None if f is None else f.constants.get(key)

    @property
    def lambda_h(self):
        return self._const("cone", "lambda_h")

    @property
    def sigma(self) -> dict:
        f = self.get("cone")
        return {} if f is None else dict(f.constants.get("sigma", {}))

    @property
    def fold_gap(self):
        return self._const("fold", "gap")

    @property
    def fold_max(self):
        return self._const("fold", "M")

    @property
    def fold_point(self):
        return self._const("fold", "p")

    def to_dict(self) -> dict:
        pi = self._const("fold", "Pi")
        return {
            "status": self.status,
            "margin": _clean(self.margin),
            "lambda_h": _clean(self.lambda_h),
            "sigma": _clean(self.sigma),
            "fold_gap": _clean(self.fold_gap),
            "fold_max": _clean(self.fold_max),
            "fold_point": _clean(self.fold_point),
            "windows": _clean(self._const("window", "windows")),
            "pi": _clean(pi),
            "conditions": [f.to_dict() for f in self.fragments],
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


# ---------------------------------------------------------------------------
# grids and enclosures
# ---------------------------------------------------------------------------


def _edges(lo: float, hi: float, n: int, breaks=()) -> np.ndarray:
    e = np.linspace(lo, hi, n + 1)
    extra = [b for b in breaks if lo < b < hi]
    return np.unique(np.concatenate([e, extra]))


def _theta_breaks(p: SkewParams):
    return [v for a in p.arcs for v in a] + list(p.pi_theta)


def _y_breaks(p: SkewParams):
    return [-2 * p.a, 2 * p.a, -p.a, p.a, -p.b, p.b]


class _BlockBounds:
    """Second-derivative bounds on each (theta region, y piece) block."""

    def __init__(self, m: CylinderMap):
        p = m.params
        self.tb = np.array([v for a in p.arcs for v in a])
        t_edges = np.concatenate([[0.0], self.tb, [1.0]])
        self.yb = np.array([-2 * p.a, 2 * p.a])
        y_edges = [-1.0, -2 * p.a, 2 * p.a, 1.0]
        tab = np.zeros((9, 3, 6))
        for r in range(9):
            for q in range(3):
                X2, Y2 = m.second_bounds(t_edges[r], t_edges[r + 1], y_edges[q], y_edges[q + 1])
                tab[r, q] = list(X2) + list(Y2)
        self.tab = tab

    def lookup(self, tc, yc):
        r = np.searchsorted(self.tb, tc, side="right")
        q = np.searchsorted(self.yb, yc, side="right")
        return self.tab[r, q]  # (..., 6)


def _cells(t_edges, y_edges):
    tc = 0.5 * (t_edges[1:] + t_edges[:-1])
    ht = 0.5 * np.diff(t_edges)
    yc = 0.5 * (y_edges[1:] + y_edges[:-1])
    hy = 0.5 * np.diff(y_edges)
    return tc, ht, yc, hy


def _sweep(m: CylinderMap, t_edges, y_edges, rows_per_chunk: int | None = None):
    """Yield per-cell data for row chunks: centres, half widths, values,
    Jacobian entries and the variation bounds of those entries."""
    bb = _BlockBounds(m)
    tc, ht, yc, hy = _cells(t_edges, y_edges)
    nt = tc.size
    if rows_per_chunk is None:
        rows_per_chunk = max(1, 262_144 // nt)
    for s in range(0, yc.size, rows_per_chunk):
        T = np.broadcast_to(tc, (min(rows_per_chunk, yc.size - s), nt))
        Yc = np.broadcast_to(yc[s:s + rows_per_chunk, None], T.shape)
        HT = np.broadcast_to(ht, T.shape)
        HY = np.broadcast_to(hy[s:s + rows_per_chunk, None], T.shape)
        T, Yc, HT, HY = (np.ascontiguousarray(v).ravel() for v in (T, Yc, HT, HY))
        X, Y = m.lift_xy(T, Yc)
        A, B, C, D = m.jac(T, Yc)
        M = bb.lookup(T, Yc)
        xtt, xty, xyy, ytt, yty, yyy = (M[:, i] for i in range(6))
        dA = xtt * HT + xty * HY
        dB = xty * HT + xyy * HY
        dC = ytt * HT + yty * HY
        dD = yty * HT + yyy * HY
        quad_y = 0.5 * (ytt * HT**2 + 2 * yty * HT * HY + yyy * HY**2)
        Y_dev = np.abs(C) * HT + np.abs(D) * HY + quad_y  # |Y - Y(c)| on the cell
        yield dict(t=T, y=Yc, X=X, Y=Y, A=A, B=B, C=C, D=D, dA=dA, dB=dB, dC=dC, dD=dD, Ydev=Y_dev)


class _Min:
    """Running minimum with its location."""

    def __init__(self):
        self.value = math.inf
        self.where = None

    def update(self, vals, t, y):
        if vals.size == 0:
            return
        i = int(np.argmin(vals))
        if vals[i] < self.value:
            self.value = float(vals[i])
            self.where = {"theta": float(t[i]), "y": float(y[i])}


class _Max(_Min):
    def update(self, vals, t, y):
        if vals.size == 0:
            return
        i = int(np.argmax(vals))
        if -vals[i] < self.value:
            self.value = -float(vals[i])
            self.where = {"theta": float(t[i]), "y": float(y[i])}

    @property
    def max(self):
        return -self.value


def _det_bounds(c):
    A, B, C, D = c["A"], c["B"], c["C"], c["D"]
    dA, dB, dC, dD = c["dA"], c["dB"], c["dC"], c["dD"]
    det = A * D - B * C
    ddet = dA * (np.abs(D) + dD) + np.abs(A) * dD + dB * (np.abs(C) + dC) + np.abs(B) * dC
    return det - ddet, det + ddet


# ---------------------------------------------------------------------------
# interval inclusions
# ---------------------------------------------------------------------------


def check_segment_inclusions(params: SkewParams) -> Fragment:
    a, b = params.a, params.b
    slacks = {
        "1>3a": 1 - 3 * a,
        "3a>b": 3 * a - b,
        "b>2a": b - 2 * a,
        "2a>0": 2 * a,
        "J_in<J1&J2": a - a / 2,
        "J1&J2<J_out": 2 * a - a,
        "J_out<J1|J2": b - 2 * a,
    }
    worst = min(slacks, key=slacks.get)
    margin = slacks[worst]
    consts = {
        "J1": list(params.J1), "J2": list(params.J2), "J_out": list(params.J_out), "J_in": list(params.J_in),
        "J1_and_J2": [max(-a, -b), min(b, a)], "slacks": slacks, "tightest": worst,
    }
    msg = "" if margin > 0 else f"inequality {worst} violated"
    return _fragment("inclusions", margin > 0, margin, consts, {"inequality": worst}, msg)


# ---------------------------------------------------------------------------
# cone hyperbolicity, including the inverse-branch cone clauses
# ---------------------------------------------------------------------------


def _check_grid(grid):
    gt, gy = int(grid[0]), int(grid[1])
    if gt < MIN_GRID[0] or gy < MIN_GRID[1]:
        raise GridTooCoarse(f"grid {gt}x{gy} below the minimum {MIN_GRID[0]}x{MIN_GRID[1]}")
    return gt, gy


def check_cone_hyperbolicity(m: CylinderMap, cone: ConeConfig | None = None,
                             grid=DEFAULT_GRID) -> Fragment:
    cone = cone or m.params.cone
    gt, gy = _check_grid(grid)
    p = m.params
    kap, eta = cone.kappa, cone.eta
    t_edges = _edges(0.0, 1.0, gt, _theta_breaks(p))
    y_edges = _edges(-1.0, 1.0, gy, _y_breaks(p))

    cone_h, lam, image = _Min(), _Min(), _Max()
    for c in _sweep(m, t_edges, y_edges):
        A, B, C, D = c["A"], c["B"], c["C"], c["D"]
        dA, dB, dC, dD = c["dA"], c["dB"], c["dC"], c["dD"]
        theta_gain = A - kap * np.abs(B) - dA - kap * dB
        cone_h.update(kap * theta_gain - (np.abs(C) + dC) - kap * (np.abs(D) + dD), c["t"], c["y"])
        lam.update(theta_gain, c["t"], c["y"])
        image.update(np.abs(c["Y"]) + c["Ydev"], c["t"], c["y"])

    sigma, v_margin, det_min = {}, {}, {}
    worst_branch = None
    for br in (1, 2, 3):
        (alo, ahi), (ylo, yhi) = branch_domain(p, br)
        te = _edges(alo, ahi, 256)
        ye = _edges(ylo, yhi, 256, _y_breaks(p))
        sg, vm, dm = _Min(), _Min(), _Min()
        for c in _sweep(m, te, ye):
            A, B, C, D = c["A"], c["B"], c["C"], c["D"]
            dA, dB, dC, dD = c["dA"], c["dB"], c["dC"], c["dD"]
            vm.update(eta * (A - dA - eta * (np.abs(C) + dC)) - eta * (np.abs(D) + dD) - (np.abs(B) + dB),
                      c["t"], c["y"])
            det_lo, det_hi = _det_bounds(c)
            dm.update(det_lo, c["t"], c["y"])
            with np.errstate(divide="ignore", invalid="ignore"):
                s = np.where(det_lo > 0, (A - dA - eta * (np.abs(C) + dC)) / det_hi, -np.inf)
            sg.update(s, c["t"], c["y"])
        sigma[str(br)], v_margin[str(br)], det_min[str(br)] = sg.value, vm.value, dm.value
        for val, w in ((sg.value - 1, sg.where), (vm.value, vm.where), (dm.value, dm.where)):
            if worst_branch is None or val < worst_branch[0]:
                worst_branch = (val, w)

    checks = {
        "horizontal_cone": (cone_h.value, cone_h.where),
        "expansion": (lam.value - LAMBDA_MIN, lam.where),
        "image_in_open_cylinder": (1.0 - image.max, image.where),
        "inverse_branches": worst_branch,
    }
    worst = min(checks, key=lambda k: checks[k][0])
    margin, where = checks[worst]
    consts = {
        "lambda_h": lam.value, "horizontal_cone_margin": cone_h.value, "sup_abs_y_image": image.max,
        "sigma": sigma, "vertical_cone_margin": v_margin, "det_min": det_min,
        "kappa": kap, "eta": eta, "grid": [gt, gy],
    }
    msg = "" if margin > 0 else f"{worst} clause fails"
    return _fragment("cone", True, margin, consts, where, msg)


# ---------------------------------------------------------------------------
# covering of the windows
# ---------------------------------------------------------------------------


def check_covering_condition(m: CylinderMap, j: int, n: int = WINDOW_GRID) -> Fragment:
    if j not in (1, 2):
        raise ValueError("covering condition is stated for branches 1 and 2")
    p = m.params
    (wlo, whi), (tlo, thi) = branch_target(p, j)
    (alo, ahi), (ylo, yhi) = branch_domain(p, j)
    Xs = np.linspace(wlo, whi, n)
    Ys = np.linspace(tlo, thi, n)
    XX, YY = (v.ravel() for v in np.meshgrid(Xs, Ys))
    th, yy, ok = inverse_branch_many(m, j, XX, YY, check=False)
    cond = f"covering_{j}"
    if not ok.all():
        i = int(np.argmax(~ok))
        return _fragment(cond, False, -math.inf, {}, {"X": float(XX[i]), "Y": float(YY[i])},
                         "inverse branch did not converge")
    A, B, C, D = m.jac(th, yy)
    det = A * D - B * C
    inv = np.abs(np.stack([D, -B, -C, A]) / det)
    hX, hY = 0.5 * (Xs[1] - Xs[0]), 0.5 * (Ys[1] - Ys[0])
    inv_max = INV_LIP_SAFETY * inv.max(axis=1)
    slack_t = inv_max[0] * hX + inv_max[1] * hY
    slack_y = inv_max[2] * hX + inv_max[3] * hY
    dist_t = np.minimum(th - alo, ahi - th) - slack_t
    dist_y = np.minimum(yy - ylo, yhi - yy) - slack_y
    dist = np.minimum(dist_t, dist_y)
    i = int(np.argmin(dist))
    margin = float(dist[i])
    det_min = float(det.min())
    consts = {
        "window": [wlo, whi], "target": [tlo, thi],
        "preimage_box": [[float(th.min()), float(th.max())], [float(yy.min()), float(yy.max())]],
        "theta_margin": float(dist_t.min()), "y_margin": float(dist_y.min()),
        "slack": [float(slack_t), float(slack_y)], "det_min": det_min,
    }
    where = {"X": float(XX[i]), "Y": float(YY[i]), "theta": float(th[i]), "y": float(yy[i])}
    if det_min <= 0:
        return _fragment(cond, False, min(margin, det_min), consts, where, "orientation reversed")
    return _fragment(cond, True, margin, consts, where, "" if margin > 0 else "pullback leaves A_j x int J_out")


# ---------------------------------------------------------------------------
# the third window lands inside J_in
# ---------------------------------------------------------------------------


def check_window_condition(m: CylinderMap, grid=(256, 512)) -> Fragment:
    p = m.params
    delta = p.cone.delta
    k3 = p.windows[2]
    P = m.theta_shift_bound()
    s_lo, s_hi = (k3 - delta - P) / p.d, (k3 + 1 + delta + P) / p.d
    alo, ahi = p.arcs[2]
    arc_margin = min(s_lo - alo, ahi - s_hi)
    t_edges = _edges(s_lo, s_hi, grid[0], _theta_breaks(p))
    y_edges = _edges(-1.0, 1.0, grid[1], _y_breaks(p))
    sup, lo_det = _Max(), _Min()
    for c in _sweep(m, t_edges, y_edges):
        sup.update(np.abs(c["Y"]) + c["Ydev"], c["t"], c["y"])
        lo_det.update(_det_bounds(c)[0], c["t"], c["y"])
    fiber_margin = p.a / 2 - sup.max
    consts = {
        "strip": [s_lo, s_hi], "arc": [alo, ahi], "arc_margin": arc_margin,
        "sup_abs_fiber": sup.max, "fiber_margin": fiber_margin, "det_min": lo_det.value,
        "windows": list(p.windows),
    }
    margin = min(arc_margin, fiber_margin, lo_det.value)
    if arc_margin <= 0:
        where, msg = {"theta": s_lo if s_lo - alo < ahi - s_hi else s_hi}, "strip escapes the arc"
    elif fiber_margin <= 0:
        where, msg = sup.where, "fiber range not inside int J_in"
    else:
        where, msg = lo_det.where, "" if lo_det.value > 0 else "orientation reversed"
    return _fragment("window", True, margin, consts, where, msg)


# ---------------------------------------------------------------------------
# the fold
# ---------------------------------------------------------------------------


def _fold_argmax(m: CylinderMap, n: int = 257):
    """Grid maximiser of y o f over Pi (odd lattice, ties toward the centre),
    refined by bounded quasi-Newton."""
    p = m.params
    (B, D), (ylo, yhi) = p.pi_theta, p.J_out
    ts = np.linspace(B, D, n)[1:-1]
    ys = np.linspace(ylo, yhi, n)[1:-1]
    T, Yg = np.meshgrid(ts, ys)
    vals = m.fiber(T, Yg)
    best = vals.max()
    cand = np.flatnonzero(vals.ravel() == best)
    tc, yc = 0.5 * (B + D), 0.5 * (ylo + yhi)
    dist = (T.ravel()[cand] - tc) ** 2 + (Yg.ravel()[cand] - yc) ** 2
    i = cand[int(np.argmin(dist))]
    x0 = np.array([T.ravel()[i], Yg.ravel()[i]])

    def neg(v):
        return -float(m.fiber(v[0], v[1]))

    def grad(v):
        _, _, C, Dd = m.jac(v[0], v[1])
        return -np.array([float(C), float(Dd)])

    res = optimize.minimize(neg, x0, jac=grad, method="L-BFGS-B",
                            bounds=[(B, D), (ylo, yhi)])
    if res.success and -res.fun > best and B < res.x[0] < D and ylo < res.x[1] < yhi:
        return (float(res.x[0]), float(res.x[1])), float(-res.fun)
    return (float(x0[0]), float(x0[1])), float(best)


def check_fold_condition(m: CylinderMap, grid=DEFAULT_GRID) -> Fragment:
    p = m.params
    gt, gy = _check_grid(grid)
    (B, D), (ylo, yhi) = p.pi_theta, p.J_out
    t_edges = _edges(0.0, 1.0, gt, _theta_breaks(p))
    y_edges = _edges(-1.0, 1.0, gy, _y_breaks(p))
    upper = _Max()
    for c in _sweep(m, t_edges, y_edges):
        # cells are aligned to the edges of Pi, so each lies inside its closure
        # or meets it only on the boundary (which belongs to X \ Pi)
        inside = (c["t"] > B) & (c["t"] < D) & (c["y"] > ylo) & (c["y"] < yhi)
        out = ~inside
        upper.update((c["Y"] + c["Ydev"])[out], c["t"][out], c["y"][out])
    pt, M = _fold_argmax(m)
    U = upper.max
    gap = M - U
    consts = {
        "M": M, "p": [pt[0], pt[1]], "U_outside": U, "gap": gap,
        "Pi": [[B, D], [ylo, yhi]], "grid": [gt, gy],
    }
    msg = "" if gap > 0 else "maximum of y o f is not strictly confined to Pi"
    return _fragment("fold", True, gap, consts, upper.where, msg)


# ---------------------------------------------------------------------------
# aggregate
# ---------------------------------------------------------------------------


def _safe(condition, fn, *args, **kw) -> Fragment:
    try:
        return fn(*args, **kw)
    except (ValueError, RuntimeError, ArithmeticError) as exc:
        return Fragment(condition, FAIL, -math.inf, {}, None, f"{type(exc).__name__}: {exc}")


def check_parameters(params: SkewParams) -> Fragment:
    v = params.violations()
    return Fragment("parameters", PASS if not v else FAIL, 1.0 if not v else -math.inf,
                    {"violations": v}, None, "; ".join(v))


def certify_all(m: CylinderMap, grid=DEFAULT_GRID, window_grid: int = WINDOW_GRID) -> CheckReport:
    p = m.params
    frags = [
        _safe("parameters", check_parameters, p),
        _safe("inclusions", check_segment_inclusions, p),
        _safe("cone", check_cone_hyperbolicity, m, p.cone, grid),
        _safe("covering_1", check_covering_condition, m, 1, window_grid),
        _safe("covering_2", check_covering_condition, m, 2, window_grid),
        _safe("window", check_window_condition, m),
        _safe("fold", check_fold_condition, m, grid),
    ]
    return CheckReport(frags)
