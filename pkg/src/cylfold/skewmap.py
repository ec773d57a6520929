"""The skew product family over theta -> d*theta, its lift, derivatives,
inverse branches, trigonometric C^1 perturbations and the torus embedding.

Fiber maps are piecewise polynomials in ``y`` (tabulated coefficients, so
evaluation vectorizes over arbitrary point clouds).  On the gaps between the
four arcs the fiber map is the convex blend ``(1 - s) psi_i + s psi_j`` with
the C-infinity step ``s``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import optimize
from scipy.special import expit

from .core import ConeConfig, CylinderPoint, LiftPoint, circle_delta, wrap01
from .errors import DomainError, NoConvergence, OutOfBranch

# ---------------------------------------------------------------------------
# smooth step s(t) = sigma(t) / (sigma(t) + sigma(1 - t)),  sigma(t) = exp(-1/t)
# ---------------------------------------------------------------------------

_T_CLIP = 1e-4  # s and its derivatives underflow to exactly 0 / 1 well before this


def smooth_step(t, derivs: bool = False):
    """C-infinity monotone step, 0 for t <= 0 and 1 for t >= 1.

    With ``derivs=True`` returns ``(s, s', s'')``.
    """
    t = np.asarray(t, dtype=float)
    inside = (t > 0.0) & (t < 1.0)
    ti = np.clip(np.where(inside, t, 0.5), _T_CLIP, 1.0 - _T_CLIP)
    u = 1.0 / ti - 1.0 / (1.0 - ti)
    s_in = expit(-u)
    s = np.where(inside, s_in, np.where(t >= 1.0, 1.0, 0.0))
    if not derivs:
        return s
    q = s_in * expit(u)  # s (1 - s)
    w = 1.0 / ti**2 + 1.0 / (1.0 - ti) ** 2
    s1 = q * w
    s2 = s1 * (1.0 - 2.0 * s_in) * w + q * (-2.0 / ti**3 + 2.0 / (1.0 - ti) ** 3)
    return s, np.where(inside, s1, 0.0), np.where(inside, s2, 0.0)


def _step_bounds() -> tuple[float, float]:
    t = np.linspace(0.0, 1.0, 400_001)
    _, s1, s2 = smooth_step(t, derivs=True)
    # dense sampling of a fixed analytic function; 1% inflation covers the
    # inter-sample variation (|s'''| is bounded by a few hundred)
    return 1.01 * float(np.max(np.abs(s1))), 1.01 * float(np.max(np.abs(s2)))


STEP_D1, STEP_D2 = _step_bounds()

# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SkewParams:
    a: float = 0.1
    b: float = 0.25
    d: int = 16
    arcs: tuple = ((0.05, 0.20), (0.30, 0.45), (0.55, 0.70), (0.80, 0.95))
    eps_arc: float = 0.05
    alpha: float = -0.04
    beta: float = 0.95
    psi1: tuple = (0.925, 0.075)  # (slope, offset) of the affine core on J_out
    psi2: tuple = (0.925, -0.075)
    psi3_slope: float = 0.04
    saturation: float = 0.85
    cone: ConeConfig = field(default_factory=ConeConfig)
    windows: tuple = (1, 5, 9, 13)

    def __post_init__(self):
        object.__setattr__(self, "arcs", tuple(tuple(float(v) for v in a) for a in self.arcs))
        object.__setattr__(self, "psi1", tuple(float(v) for v in self.psi1))
        object.__setattr__(self, "psi2", tuple(float(v) for v in self.psi2))
        object.__setattr__(self, "windows", tuple(int(k) for k in self.windows))
        object.__setattr__(self, "d", int(self.d))

    @property
    def J1(self):
        return (-self.a, self.b)

    @property
    def J2(self):
        return (-self.b, self.a)

    @property
    def J_out(self):
        return (-2 * self.a, 2 * self.a)

    @property
    def J_in(self):
        return (-self.a / 2, self.a / 2)

    @property
    def pi_theta(self):
        """(B, D): the theta-extent of the fold rectangle, A4 padded by eps_arc."""
        lo, hi = self.arcs[3]
        return (lo - self.eps_arc, hi + self.eps_arc)

    def window(self, i: int) -> tuple[float, float]:
        k = self.windows[i - 1]
        return (k - self.cone.delta, k + 1 + self.cone.delta)

    def violations(self) -> list[str]:
        """Every structural invariant the parameter set breaks (empty if valid)."""
        out = []
        a, b = self.a, self.b
        if not (1 > 3 * a > b > 2 * a > 0):
            out.append("need 1 > 3a > b > 2a > 0")
        if self.d < 2:
            out.append("degree must be >= 2")
        arcs = self.arcs
        if len(arcs) != 4:
            out.append("exactly four arcs required")
            return out
        for i, (lo, hi) in enumerate(arcs):
            if not 0 <= lo < hi < 1:
                out.append(f"arc A{i + 1} must satisfy 0 <= lo < hi < 1")
        for i in range(4):
            nxt_lo = arcs[(i + 1) % 4][0] + (1.0 if i == 3 else 0.0)
            if not nxt_lo - arcs[i][1] > self.eps_arc:
                out.append(f"gap after A{i + 1} not larger than eps_arc")
        delta = self.cone.delta
        for i, ((lo, hi), k) in enumerate(zip(arcs, self.windows)):
            if not (self.d * lo <= k - delta and self.d * hi >= k + 1 + delta):
                out.append(f"d*A{i + 1} does not contain [k{i + 1}-delta, k{i + 1}+1+delta]")
        if not self.alpha < 0:
            out.append("alpha must be negative")
        if not self.beta + self.alpha > -1:
            out.append("need beta + alpha > -1")
        if not self.beta < 1:
            out.append("need beta < 1")
        tab = _psi_tables(self)
        top = max(tab.absmax(0, 0, -1, 1), tab.absmax(1, 0, -1, 1))
        if not self.beta > top:
            out.append("beta must exceed max of psi1, psi2 over I")
        for j in (0, 1):
            if tab.min_value(j, 1, -1, 1) < -1e-9:
                out.append(f"psi{j + 1} is not monotone on I")
        return out


def build_default() -> SkewParams:
    return SkewParams()


# ---------------------------------------------------------------------------
# fiber polynomials
# ---------------------------------------------------------------------------


def _hermite5(x0, x1, v0, v1, m0, m1, c0=0.0, c1=0.0) -> np.ndarray:
    """Quintic with prescribed value, slope and curvature at both ends."""
    rows, rhs = [], []
    for x, v, m, c in ((x0, v0, m0, c0), (x1, v1, m1, c1)):
        rows.append([x**k for k in range(6)])
        rows.append([k * x ** (k - 1) if k else 0.0 for k in range(6)])
        rows.append([k * (k - 1) * x ** (k - 2) if k > 1 else 0.0 for k in range(6)])
        rhs += [v, m, c]
    return np.linalg.solve(np.array(rows), np.array(rhs))


def _pad(c) -> np.ndarray:
    out = np.zeros(6)
    c = np.atleast_1d(np.asarray(c, dtype=float))
    out[: c.size] = c
    return out


class _PsiTables:
    """Coefficients of psi_1..psi_4 on the five y-pieces
    (-inf,-1), [-1,-2a), [-2a,2a), [2a,1), [1,inf)."""

    def __init__(self, p: SkewParams):
        two_a = 2 * p.a
        self.ybreaks = np.array([-1.0, -two_a, two_a, 1.0])
        self.piece_bounds = [(-np.inf, -1.0), (-1.0, -two_a), (-two_a, two_a), (two_a, 1.0), (1.0, np.inf)]
        sat = p.saturation
        coefs = np.zeros((3, 4, 5, 6))
        for j, (m, c) in enumerate((p.psi1, p.psi2)):
            lo_v, hi_v = c - m * two_a, c + m * two_a
            coefs[0, j, 0] = _pad([-sat])
            coefs[0, j, 1] = _hermite5(-1.0, -two_a, -sat, lo_v, 0.0, m)
            coefs[0, j, 2] = _pad([c, m])
            coefs[0, j, 3] = _hermite5(two_a, 1.0, hi_v, sat, m, 0.0)
            coefs[0, j, 4] = _pad([sat])
        coefs[0, 2, :] = _pad([0.0, p.psi3_slope])
        coefs[0, 3, :] = _pad([p.beta, 0.0, p.alpha])
        for order in (1, 2):
            for j in range(4):
                for q in range(5):
                    coefs[order, j, q] = _pad(P.polyder(coefs[0, j, q], order))
        self.coefs = coefs

    def piece(self, y):
        return np.searchsorted(self.ybreaks, y, side="right")

    def eval(self, j, y, order=0, piece=None):
        """Evaluate psi_{j+1}^{(order)} at y; ``j`` may be an index array."""
        if piece is None:
            piece = self.piece(y)
        c = self.coefs[order][j, piece]
        val = c[..., 5]
        for k in range(4, -1, -1):
            val = val * y + c[..., k]
        return val

    def _poly_on(self, lo, hi):
        """Yield (piece index, clipped lo, clipped hi) for pieces meeting [lo, hi]."""
        for q, (plo, phi) in enumerate(self.piece_bounds):
            a, b = max(lo, plo), min(hi, phi)
            if a <= b:
                yield q, a, b

    @staticmethod
    def _extremes(c, lo, hi):
        pts = [lo, hi]
        dc = P.polyder(c)
        if np.any(dc != 0):
            dc = np.trim_zeros(dc, "b")
            if dc.size > 1:
                r = P.polyroots(dc)
                r = r[np.abs(r.imag) < 1e-12].real
                pts += [x for x in r if lo < x < hi]
        return P.polyval(np.array(pts), c)

    def absmax(self, j, order, lo, hi, minus=None) -> float:
        """max |psi_j^{(order)} - psi_minus^{(order)}| over [lo, hi] (exact)."""
        best = 0.0
        for q, a, b in self._poly_on(lo, hi):
            c = self.coefs[order, j, q].copy()
            if minus is not None:
                c = c - self.coefs[order, minus, q]
            best = max(best, float(np.max(np.abs(self._extremes(c, a, b)))))
        return best

    def min_value(self, j, order, lo, hi) -> float:
        return min(float(np.min(self._extremes(self.coefs[order, j, q], a, b)))
                   for q, a, b in self._poly_on(lo, hi))


_TABLE_CACHE: dict = {}


def _psi_tables(p: SkewParams) -> _PsiTables:
    t = _TABLE_CACHE.get(p)
    if t is None:
        t = _TABLE_CACHE[p] = _PsiTables(p)
    return t


class _ThetaRegions:
    """Arc/gap lookup: region r = searchsorted(breaks, theta) in 0..8, odd = arc."""

    def __init__(self, p: SkewParams):
        arcs = p.arcs
        self.breaks = np.array([v for a in arcs for v in a])
        lo_idx = np.zeros(9, dtype=np.intp)
        hi_idx = np.zeros(9, dtype=np.intp)
        start = np.zeros(9)
        width = np.full(9, np.inf)
        wrap_w = 1.0 - arcs[3][1] + arcs[0][0]
        for r in range(9):
            if r % 2 == 1:
                lo_idx[r] = hi_idx[r] = (r - 1) // 2
            elif r in (0, 8):
                lo_idx[r], hi_idx[r], start[r], width[r] = 3, 0, arcs[3][1], wrap_w
            else:
                i = r // 2 - 1
                lo_idx[r], hi_idx[r] = i, i + 1
                start[r], width[r] = arcs[i][1], arcs[i + 1][0] - arcs[i][1]
        self.lo, self.hi, self.start, self.width = lo_idx, hi_idx, start, width

    def region(self, theta):
        return np.searchsorted(self.breaks, wrap01(theta), side="right")

    def intervals(self):
        """Region r covers [bounds[r], bounds[r+1]) in [0, 1)."""
        return np.concatenate([[0.0], self.breaks, [1.0]])


# ---------------------------------------------------------------------------
# perturbations
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TrigPerturbation:
    """Displacement field sum_k amp_k cos(2 pi m_k theta + pi n_k y + phase_k),
    each term acting on one component (0 = theta, 1 = y)."""

    comp: np.ndarray
    m: np.ndarray
    n: np.ndarray
    amp: np.ndarray
    phase: np.ndarray

    def __post_init__(self):
        for name, dt in (("comp", np.intp), ("m", float), ("n", float), ("amp", float), ("phase", float)):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=dt)))

    @classmethod
    def zero(cls):
        return cls([], [], [], [], [])

    @classmethod
    def from_terms(cls, terms):
        terms = list(terms)
        if not terms:
            return cls.zero()
        cols = list(zip(*terms))
        comp = [0 if str(c) in ("0", "theta") else 1 for c in cols[0]]
        return cls(comp, cols[1], cols[2], cols[3], cols[4])

    def terms(self) -> list[tuple]:
        return [("theta" if c == 0 else "y", int(m), int(n), float(a), float(ph))
                for c, m, n, a, ph in zip(self.comp, self.m, self.n, self.amp, self.phase)]

    def __add__(self, other: "TrigPerturbation") -> "TrigPerturbation":
        return TrigPerturbation(*(np.concatenate([getattr(self, k), getattr(other, k)])
                                  for k in ("comp", "m", "n", "amp", "phase")))

    def __len__(self):
        return self.amp.size

    def scaled(self, factor: float) -> "TrigPerturbation":
        return replace(self, amp=self.amp * factor)

    def _freqs(self):
        return 2 * np.pi * self.m, np.pi * self.n

    def value(self, theta, y):
        theta = np.asarray(theta, dtype=float)
        y = np.asarray(y, dtype=float)
        out = [np.zeros(np.broadcast(theta, y).shape), np.zeros(np.broadcast(theta, y).shape)]
        wt, wy = self._freqs()
        for k in range(len(self)):
            out[self.comp[k]] = out[self.comp[k]] + self.amp[k] * np.cos(wt[k] * theta + wy[k] * y + self.phase[k])
        return out[0], out[1]

    def grad(self, theta, y):
        """Returns (dp_theta/dtheta, dp_theta/dy, dp_y/dtheta, dp_y/dy)."""
        shape = np.broadcast(np.asarray(theta), np.asarray(y)).shape
        g = [np.zeros(shape) for _ in range(4)]
        wt, wy = self._freqs()
        for k in range(len(self)):
            s = -self.amp[k] * np.sin(wt[k] * theta + wy[k] * y + self.phase[k])
            c = 2 * self.comp[k]
            g[c] = g[c] + wt[k] * s
            g[c + 1] = g[c + 1] + wy[k] * s
        return tuple(g)

    def _comp_sum(self, c, w) -> float:
        sel = self.comp == c
        return float(np.sum(np.abs(self.amp[sel]) * w[sel])) if np.any(sel) else 0.0

    def sup_abs(self, comp: int) -> float:
        return self._comp_sum(comp, np.ones_like(self.amp))

    def c1_bound(self) -> float:
        """Upper bound for max(sup|p|, sup|dp|) over both components."""
        wt, wy = self._freqs()
        one = np.ones_like(self.amp)
        return max(self._comp_sum(c, w) for c in (0, 1) for w in (one, wt, wy))

    def second_bounds(self):
        """Bounds on |second partials|, ((tt, ty, yy) for theta, same for y)."""
        wt, wy = self._freqs()
        return tuple(tuple(self._comp_sum(c, w) for w in (wt * wt, wt * wy, wy * wy)) for c in (0, 1))


def random_perturbation(rng: np.random.Generator, norm: float, n_terms: int = 8,
                        max_freq: int = 3) -> TrigPerturbation:
    """Random trigonometric field rescaled so its C^1 bound equals ``norm``."""
    pert = TrigPerturbation(
        comp=rng.integers(0, 2, n_terms),
        m=rng.integers(0, max_freq + 1, n_terms),
        n=rng.integers(0, max_freq + 1, n_terms),
        amp=rng.standard_normal(n_terms),
        phase=rng.uniform(0, 2 * np.pi, n_terms),
    )
    return pert.scaled(norm / pert.c1_bound())


# ---------------------------------------------------------------------------
# map handles
# ---------------------------------------------------------------------------


class CylinderMap:
    """Interface shared by the skew family and ad-hoc maps used as negative
    controls.  Subclasses provide vectorized ``lift_xy``, ``jac`` and
    ``second_bounds``."""

    params: SkewParams

    @property
    def d(self) -> int:
        return self.params.d

    def lift_xy(self, theta, y):
        raise NotImplementedError

    def jac(self, theta, y):
        raise NotImplementedError

    def second_bounds(self, t_lo, t_hi, y_lo, y_hi):
        raise NotImplementedError

    def theta_shift_bound(self) -> float:
        """Bound on |X(theta, y) - d*theta| (zero for exact skew products)."""
        return 0.0

    def apply_xy(self, theta, y):
        X, Y = self.lift_xy(theta, y)
        return wrap01(X), Y

    def fiber(self, theta, y):
        return self.lift_xy(theta, y)[1]


class SkewMap(CylinderMap):
    """(theta, y) -> (d theta + p_theta, f_theta(y) + p_y)."""

    def __init__(self, params: SkewParams, perturbation: TrigPerturbation | None = None):
        self.params = params
        self.perturbation = perturbation if perturbation is not None and len(perturbation) else None
        self._tab = _psi_tables(params)
        self._reg = _ThetaRegions(params)

    def __repr__(self):
        k = 0 if self.perturbation is None else len(self.perturbation)
        return f"SkewMap(d={self.d}, perturbation_terms={k})"

    # -- unperturbed pieces -------------------------------------------------
    def _blend(self, theta, y):
        reg = self._reg
        r = reg.region(theta)
        t = wrap01(theta - reg.start[r]) / reg.width[r]
        return r, t

    def _fiber0(self, theta, y):
        r, t = self._blend(theta, y)
        s = smooth_step(t)
        tab = self._tab
        q = tab.piece(y)
        lo = tab.eval(self._reg.lo[r], y, 0, q)
        hi = tab.eval(self._reg.hi[r], y, 0, q)
        return lo + s * (hi - lo)

    def _fiber0_derivs(self, theta, y):
        """(f, f_theta, f_y) of the unperturbed fiber family."""
        reg, tab = self._reg, self._tab
        r, t = self._blend(theta, y)
        s, s1, _ = smooth_step(t, derivs=True)
        q = tab.piece(y)
        lo, hi = reg.lo[r], reg.hi[r]
        p_lo, p_hi = tab.eval(lo, y, 0, q), tab.eval(hi, y, 0, q)
        d_lo, d_hi = tab.eval(lo, y, 1, q), tab.eval(hi, y, 1, q)
        f = p_lo + s * (p_hi - p_lo)
        f_t = np.where(np.isfinite(reg.width[r]), s1 / reg.width[r], 0.0) * (p_hi - p_lo)
        f_y = d_lo + s * (d_hi - d_lo)
        return f, f_t, f_y

    # -- interface -----------------------------------------------------------
    def lift_xy(self, theta, y):
        theta = np.asarray(theta, dtype=float)
        y = np.asarray(y, dtype=float)
        X = self.d * theta
        Y = self._fiber0(theta, y)
        if self.perturbation is not None:
            pt, py = self.perturbation.value(theta, y)
            X, Y = X + pt, Y + py
        return X, Y

    def jac(self, theta, y):
        theta = np.asarray(theta, dtype=float)
        y = np.asarray(y, dtype=float)
        _, f_t, f_y = self._fiber0_derivs(theta, y)
        A = np.full(np.broadcast(theta, y).shape, float(self.d))
        B = np.zeros_like(A)
        C, D = f_t, f_y
        if self.perturbation is not None:
            g = self.perturbation.grad(theta, y)
            A, B, C, D = A + g[0], B + g[1], C + g[2], D + g[3]
        return A, B, C, D

    def theta_shift_bound(self) -> float:
        return 0.0 if self.perturbation is None else self.perturbation.sup_abs(0)

    def fiber_second_bounds(self, t_lo, t_hi, y_lo, y_hi):
        """(tt, ty, yy) bounds for the unperturbed fiber on a rectangle."""
        reg, tab = self._reg, self._tab
        edges = reg.intervals()
        # the rectangle may straddle theta = 0; treat it modulo 1 in pieces
        spans = []
        a, b = t_lo, t_hi
        if b - a >= 1:
            spans = [(0.0, 1.0)]
        else:
            a0 = math.floor(a)
            a, b = a - a0, b - a0
            spans = [(a, min(b, 1.0))] + ([(0.0, b - 1.0)] if b > 1.0 else [])
        tt = ty = yy = 0.0
        for sa, sb in spans:
            for r in range(9):
                if sa < sb and (edges[r + 1] <= sa or edges[r] >= sb):
                    continue
                if sa == sb and (edges[r + 1] < sa or edges[r] > sb):
                    continue
                lo, hi = int(reg.lo[r]), int(reg.hi[r])
                yy = max(yy, tab.absmax(lo, 2, y_lo, y_hi), tab.absmax(hi, 2, y_lo, y_hi))
                if r % 2 == 0:
                    w = reg.width[r]
                    tt = max(tt, STEP_D2 / w**2 * tab.absmax(hi, 0, y_lo, y_hi, minus=lo))
                    ty = max(ty, STEP_D1 / w * tab.absmax(hi, 1, y_lo, y_hi, minus=lo))
        return tt, ty, yy

    def second_bounds(self, t_lo, t_hi, y_lo, y_hi):
        X2 = (0.0, 0.0, 0.0)
        Y2 = self.fiber_second_bounds(t_lo, t_hi, y_lo, y_hi)
        if self.perturbation is not None:
            px, py = self.perturbation.second_bounds()
            X2 = px
            Y2 = tuple(u + v for u, v in zip(Y2, py))
        return X2, Y2


class FunctionalMap(CylinderMap):
    """Map given by explicit callables; used for degenerate comparison maps."""

    def __init__(self, params, lift, jac, second=((0.0,) * 3, (0.0,) * 3), name="custom"):
        self.params = params
        self._lift, self._jac, self._second = lift, jac, second
        self.name = name

    def __repr__(self):
        return f"FunctionalMap({self.name})"

    def lift_xy(self, theta, y):
        theta = np.asarray(theta, dtype=float)
        y = np.asarray(y, dtype=float)
        X, Y = self._lift(theta, y)
        shape = np.broadcast(theta, y).shape
        return np.broadcast_to(X, shape).astype(float), np.broadcast_to(Y, shape).astype(float)

    def jac(self, theta, y):
        shape = np.broadcast(np.asarray(theta), np.asarray(y)).shape
        return tuple(np.broadcast_to(np.asarray(v, dtype=float), shape).copy() for v in self._jac(theta, y))

    def second_bounds(self, t_lo, t_hi, y_lo, y_hi):
        return self._second


def identity_map(params: SkewParams | None = None) -> FunctionalMap:
    return FunctionalMap(params or build_default(), lambda t, y: (t, y),
                         lambda t, y: (1.0, 0.0, 0.0, 1.0), name="identity")


def zero_fiber_map(params: SkewParams | None = None) -> FunctionalMap:
    p = params or build_default()
    return FunctionalMap(p, lambda t, y: (p.d * t, 0.0 * y),
                         lambda t, y: (float(p.d), 0.0, 0.0, 0.0), name="zero-fiber")


def make_map(params: SkewParams | None = None, perturbation: TrigPerturbation | None = None) -> SkewMap:
    return SkewMap(params or build_default(), perturbation)


# ---------------------------------------------------------------------------
# point-level operations
# ---------------------------------------------------------------------------


def fiber_map(m: CylinderMap, theta: float, y: float) -> float:
    if not abs(y) <= 1.0:
        raise DomainError(f"fiber coordinate {y} outside I = [-1, 1]")
    return float(m.fiber(float(theta), float(y)))


def apply(m: CylinderMap, p: CylinderPoint) -> CylinderPoint:
    t, y = m.apply_xy(p.theta, p.y)
    return CylinderPoint(float(t), float(y))


def lift_apply(m: CylinderMap, p: CylinderPoint) -> LiftPoint:
    X, Y = m.lift_xy(p.theta, p.y)
    return LiftPoint(float(X), float(Y), m.d)


def jacobian(m: CylinderMap, p: CylinderPoint) -> np.ndarray:
    A, B, C, D = m.jac(p.theta, p.y)
    return np.array([[float(A), float(B)], [float(C), float(D)]])


def perturb(m: CylinderMap, spec: TrigPerturbation) -> SkewMap:
    if not isinstance(m, SkewMap):
        raise TypeError("only skew maps can be perturbed")
    base = m.perturbation
    return SkewMap(m.params, spec if base is None else base + spec)


# ---------------------------------------------------------------------------
# inverse branches
# ---------------------------------------------------------------------------

NEWTON_TOL = 1e-12
NEWTON_MAXIT = 100


def branch_domain(params: SkewParams, branch: int):
    """(theta interval, y interval) of the domain on which a branch is inverted."""
    if branch in (1, 2):
        return params.arcs[branch - 1], params.J_out
    if branch == 3:
        return params.arcs[2], (-1.0, 1.0)
    raise ValueError(f"unknown branch {branch}")


def branch_target(params: SkewParams, branch: int):
    """(X window, Y interval) the branch accepts as targets."""
    win = params.window(branch)
    if branch == 1:
        return win, params.J1
    if branch == 2:
        return win, params.J2
    if branch == 3:
        return win, params.J_in
    raise ValueError(f"unknown branch {branch}")


def _newton(m: CylinderMap, X, Y, theta, y):
    ok = np.zeros(X.shape, dtype=bool)
    for _ in range(NEWTON_MAXIT):
        FX, FY = m.lift_xy(theta, y)
        rx, ry = FX - X, FY - Y
        ok = (np.abs(rx) <= NEWTON_TOL) & (np.abs(ry) <= NEWTON_TOL)
        if ok.all():
            break
        A, B, C, D = m.jac(theta, y)
        det = A * D - B * C
        with np.errstate(divide="ignore", invalid="ignore"):
            dt = -(D * rx - B * ry) / det
            dy = -(-C * rx + A * ry) / det
        bad = ~np.isfinite(dt) | ~np.isfinite(dy)
        dt = np.clip(np.where(bad, 0.0, dt), -0.05, 0.05)
        dy = np.clip(np.where(bad, 0.0, dy), -0.5, 0.5)
        theta = np.where(ok, theta, theta + dt)
        y = np.where(ok, y, y + dy)
    return theta, y, ok


def _fallback(m: CylinderMap, X, Y, theta, y):
    """Per-point hybrid solve, then bisection on the fiber coordinate."""
    def F(v, x_t, y_t):
        fx, fy = m.lift_xy(v[0], v[1])
        return [float(fx) - x_t, float(fy) - y_t]

    def J(v, *_):
        a, b, c, d = m.jac(v[0], v[1])
        return [[float(a), float(b)], [float(c), float(d)]]

    th, yy = float(theta), float(y)
    sol = optimize.root(F, [th, yy], args=(X, Y), jac=J, method="hybr", tol=1e-15)
    th, yy = sol.x
    for _ in range(60):
        fx, fy = m.lift_xy(th, yy)
        if abs(fx - X) <= NEWTON_TOL and abs(fy - Y) <= NEWTON_TOL:
            return th, yy, True
        a, *_ = m.jac(th, yy)
        th -= (float(fx) - X) / float(a)
        g = lambda v: float(m.lift_xy(th, v)[1]) - Y  # noqa: E731
        lo, hi = yy - 0.5, yy + 0.5
        if g(lo) * g(hi) < 0:
            yy = optimize.brentq(g, lo, hi, xtol=1e-15, rtol=1e-15)
    return th, yy, False


def inverse_branch_many(m: CylinderMap, branch: int, X, Y, check: bool = True):
    """Vectorized inverse of the lift on branch ``branch`` (1, 2 or 3).

    Returns ``(theta, y, converged)``.  With ``check=True`` targets and
    solutions are validated against the branch windows and domains and
    failures raise; with ``check=False`` non-converged entries are NaN.
    """
    p = m.params
    X = np.atleast_1d(np.asarray(X, dtype=float))
    Y = np.atleast_1d(np.asarray(Y, dtype=float))
    (wlo, whi), (tlo, thi) = branch_target(p, branch)
    if check:
        bad = (X < wlo) | (X > whi) | (Y < tlo) | (Y > thi)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise OutOfBranch(f"target ({X[i]}, {Y[i]}) outside branch {branch} window")
    theta0 = (X - 0.0) / m.d
    y0 = np.zeros_like(Y)
    theta, y, ok = _newton(m, X, Y, theta0, y0)
    for i in np.flatnonzero(~ok):
        theta[i], y[i], ok[i] = _fallback(m, X[i], Y[i], theta[i], y[i])
    if check:
        if not ok.all():
            i = int(np.argmax(~ok))
            raise NoConvergence(f"branch {branch} inverse failed at target ({X[i]}, {Y[i]})")
        (alo, ahi), (ylo, yhi) = branch_domain(p, branch)
        eps = 1e-12
        out = (theta < alo - eps) | (theta > ahi + eps) | (y < ylo - eps) | (y > yhi + eps)
        if np.any(out):
            i = int(np.argmax(out))
            raise OutOfBranch(f"preimage ({theta[i]}, {y[i]}) leaves the branch {branch} domain")
    else:
        theta = np.where(ok, theta, np.nan)
        y = np.where(ok, y, np.nan)
    return theta, y, ok


def inverse_branch(m: CylinderMap, branch: int, target: LiftPoint) -> CylinderPoint:
    th, y, _ = inverse_branch_many(m, branch, [target.theta_lift], [target.y])
    return CylinderPoint(float(th[0]), float(np.clip(y[0], -1.0, 1.0)))


# ---------------------------------------------------------------------------
# torus embedding
# ---------------------------------------------------------------------------


class TorusMap:
    """Self-map of the flat torus [0,1)^2 that contains the cylinder map.

    The cylinder sits in the disk chart centred at (1/2, 1/2) as the annulus
    r in [r0 - w, r0 + w] with r = r0 + w*y and polar angle 2 pi theta.  On
    the annulus the map is the conjugated cylinder map; across the collar it
    is the planar blend phi*fbar + (1 - phi)*id; outside it is the identity.
    """

    CENTER = 0.5
    R0 = 0.25
    RW = 0.05

    def __init__(self, m: CylinderMap, collar: float):
        if not 0 < collar < self.R0 - self.RW:
            raise DomainError(f"collar must lie in (0, {self.R0 - self.RW})")
        self.m = m
        self.collar = float(collar)
        self.r_in = self.R0 - self.RW
        self.r_out = self.R0 + self.RW

    def to_torus(self, theta, y):
        r = self.R0 + self.RW * np.asarray(y, dtype=float)
        ang = 2 * np.pi * np.asarray(theta, dtype=float)
        return self.CENTER + r * np.cos(ang), self.CENTER + r * np.sin(ang)

    def from_torus(self, u, v):
        du = np.asarray(u, dtype=float) - self.CENTER
        dv = np.asarray(v, dtype=float) - self.CENTER
        theta = wrap01(np.arctan2(dv, du) / (2 * np.pi))
        return theta, (np.hypot(du, dv) - self.R0) / self.RW

    def radius(self, u, v):
        return np.hypot(np.asarray(u, dtype=float) - self.CENTER, np.asarray(v, dtype=float) - self.CENTER)

    def bump(self, r):
        r = np.asarray(r, dtype=float)
        c = self.collar
        inner = smooth_step((r - (self.r_in - c)) / c)
        outer = smooth_step(((self.r_out + c) - r) / c)
        return np.where(r < self.r_in, inner, np.where(r > self.r_out, outer, 1.0))

    def in_band(self, u, v):
        r = self.radius(u, v)
        return (r >= self.r_in) & (r <= self.r_out)

    def apply(self, u, v):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        v = np.atleast_1d(np.asarray(v, dtype=float))
        r = self.radius(u, v)
        phi = self.bump(r)
        act = phi > 0
        out_u, out_v = u.copy(), v.copy()
        if np.any(act):
            th, yy = self.from_torus(u[act], v[act])
            th2, yy2 = self.m.apply_xy(th, yy)
            fu, fv = self.to_torus(th2, yy2)
            ph = phi[act]
            out_u[act] = ph * fu + (1 - ph) * u[act]
            out_v[act] = ph * fv + (1 - ph) * v[act]
        return wrap01(out_u), wrap01(out_v)


def embed_torus(m: CylinderMap, collar: float) -> TorusMap:
    return TorusMap(m, collar)


def check_torus_embedding(m: CylinderMap, collar: float = 0.1, points: int = 10_000,
                          iters: int = 1000, seed: int = 0) -> dict:
    """Agreement of the torus map with the cylinder map on the band, and
    trapping of band points under iteration."""
    T = embed_torus(m, collar)
    rng = np.random.default_rng(seed)
    th = rng.random(points)
    yy = rng.uniform(-1.0, 1.0, points)
    u, v = T.to_torus(th, yy)
    fu, fv = T.apply(u, v)
    th2, yy2 = m.apply_xy(th, yy)
    gu, gv = T.to_torus(th2, yy2)
    err = float(np.max(np.maximum(np.abs(circle_delta(fu, gu)), np.abs(circle_delta(fv, gv)))))
    trapped = True
    worst_r = [np.inf, -np.inf]
    for _ in range(iters):
        u, v = T.apply(u, v)
        r = T.radius(u, v)
        worst_r = [min(worst_r[0], float(r.min())), max(worst_r[1], float(r.max()))]
        if not np.all(T.in_band(u, v)):
            trapped = False
            break
    return {
        "collar": collar, "points": points, "iters": iters,
        "restriction_error": err, "restriction_ok": err <= 1e-12,
        "band_radii": [T.r_in, T.r_out], "orbit_radius_range": worst_r,
        "trapped": trapped,
    }
