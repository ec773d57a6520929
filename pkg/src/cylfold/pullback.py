"""Backward iteration of almost vertical curves through the inverse branches
until a curve crossing the whole cylinder is produced."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import optimize

from .core import SHORT, VerticalCurve, circle_delta, curve_cuts, distance_to_polyline, lift_curve
from .errors import IterationCap, PreconditionError, Unclassifiable
from .skewmap import CylinderMap, SkewParams, branch_domain, inverse_branch_many

CURVE_POINTS = 257
GAP_FRACTION = 1.0 / 256
STEP_CAP = 10_000
PLAN_NODE_BUDGET = 200_000


class CurveClass(str, Enum):
    CUTS_JIN = "CUTS_JIN"
    BRANCH_1 = "BRANCH_1"
    BRANCH_2 = "BRANCH_2"


def _inside(lo, hi, interval) -> bool:
    return interval[0] <= lo and hi <= interval[1]


def _require_jout(c: VerticalCurve, params: SkewParams):
    if not _inside(c.y_min, c.y_max, params.J_out):
        raise PreconditionError(f"curve y-range [{c.y_min}, {c.y_max}] not inside J_out")


def classify_range(lo: float, hi: float, params: SkewParams) -> CurveClass:
    j_in = params.J_in
    if lo <= j_in[0] and hi >= j_in[1]:
        return CurveClass.CUTS_JIN
    if _inside(lo, hi, params.J1):
        return CurveClass.BRANCH_1
    if _inside(lo, hi, params.J2):
        return CurveClass.BRANCH_2
    raise Unclassifiable(f"y-range [{lo}, {hi}] fits neither J1 nor J2")


def classify_curve(c: VerticalCurve, params: SkewParams) -> CurveClass:
    _require_jout(c, params)
    if curve_cuts(c, *params.J_in):
        return CurveClass.CUTS_JIN
    return classify_range(c.y_min, c.y_max, params)


# ---------------------------------------------------------------------------
# single steps
# ---------------------------------------------------------------------------


def _invert_points(m: CylinderMap, branch: int, curve: VerticalCurve, ys: np.ndarray):
    """Preimages under ``branch`` of the points of ``curve`` at heights ``ys``."""
    p = m.params
    k = p.windows[branch - 1]
    src = curve.resampled(ys) if curve.space == SHORT else curve
    lifted = lift_curve(src, k, p.cone.delta)
    th, y, _ = inverse_branch_many(m, branch, lifted.theta, lifted.y)
    return th, y


def _refined_inverse(m: CylinderMap, branch: int, c: VerticalCurve, s_lo: float, s_hi: float,
                     n: int = CURVE_POINTS):
    """Invert the sub-polyline of ``c`` over [s_lo, s_hi]; source heights are
    uniform and then refined until preimage y-gaps are <= extent / 256."""
    s = np.linspace(s_lo, s_hi, n)
    th, y = _invert_points(m, branch, c, s)
    for _ in range(20):
        gaps = np.diff(y)
        extent = y[-1] - y[0]
        bad = np.flatnonzero(gaps > extent * GAP_FRACTION * (1 + 1e-9))
        if bad.size == 0:
            break
        mids = 0.5 * (s[bad] + s[bad + 1])
        th_m, y_m = _invert_points(m, branch, c, mids)
        s = np.insert(s, bad + 1, mids)
        th = np.insert(th, bad + 1, th_m)
        y = np.insert(y, bad + 1, y_m)
    return th, y


def pull_back_step(m: CylinderMap, c: VerticalCurve, branch: int) -> VerticalCurve:
    """Preimage of ``c`` under the inverse of branch 1 or 2.

    Requires the y-range of ``c`` to lie in J_branch (and J_out)."""
    p = m.params
    if branch not in (1, 2):
        raise ValueError("pull_back_step handles branches 1 and 2")
    _require_jout(c, p)
    target = p.J1 if branch == 1 else p.J2
    if not _inside(c.y_min, c.y_max, target):
        raise PreconditionError(f"curve y-range [{c.y_min}, {c.y_max}] not inside J{branch}")
    th, y = _refined_inverse(m, branch, c, c.y_min, c.y_max)
    return VerticalCurve(th, y, SHORT, c.cone)


# ---------------------------------------------------------------------------
# planning
# ---------------------------------------------------------------------------


def _sigma_max(m: CylinderMap, n: int = 64) -> float:
    """Sampled estimate of the largest backward vertical stretch on branches 1 and 2
    (used only to prune the plan search, never for certification)."""
    p = m.params
    eta = p.cone.eta
    best = 0.0
    for br in (1, 2):
        (alo, ahi), (ylo, yhi) = branch_domain(p, br)
        T, Y = np.meshgrid(np.linspace(alo, ahi, n), np.linspace(ylo, yhi, n))
        A, B, C, D = m.jac(T, Y)
        det = A * D - B * C
        best = max(best, float(np.max((np.abs(A) + eta * np.abs(C)) / det)))
    return best * (1 + 1e-9)


class _Planner:
    """Search for a shortest branch word taking the curve's endpoints to a
    pair that straddles J_in.  Endpoints determine the curve's y-range
    because every step preserves monotonicity in y."""

    def __init__(self, m: CylinderMap):
        self.m = m
        self.p = m.params
        self.sig = _sigma_max(m)
        self.nodes = 0

    def _children(self, state):
        (t0, y0), (t1, y1) = state
        out = []
        for br, J in ((1, self.p.J1), (2, self.p.J2)):
            if not _inside(y0, y1, J):
                continue
            k = self.p.windows[br - 1]
            ref = 0.5 * (t0 + t1)
            shift = math.floor(k + 0.5 - ref + 0.5)
            X = np.array([t0 + shift, t0 + shift + circle_delta(t1, t0)])
            th, yy, ok = inverse_branch_many(self.m, br, X, [y0, y1], check=False)
            if not ok.all() or not (yy[0] < yy[1]):
                continue
            out.append((br, ((float(th[0]), float(yy[0])), (float(th[1]), float(yy[1])))))
        # prefer the child whose y-range is best centred on 0
        out.sort(key=lambda c: abs(c[1][0][1] + c[1][1][1]))
        return out

    def _done(self, state):
        return classify_safe(state[0][1], state[1][1], self.p) == CurveClass.CUTS_JIN

    def _need(self, state) -> int:
        extent = state[1][1] - state[0][1]
        goal = self.p.J_in[1] - self.p.J_in[0]
        if self.sig <= 1:
            return 0 if extent >= goal else STEP_CAP
        return max(0, math.ceil(math.log(goal / extent) / math.log(self.sig)))

    def greedy(self, state, cap=STEP_CAP):
        cap = min(cap, 4 * self._need(state) + 16)
        word = []
        while not self._done(state):
            kids = self._children(state)
            if not kids or len(word) >= cap:
                return None
            br, state = kids[0]
            word.append(br)
        return word

    def plan(self, state):
        best = self.greedy(state)
        if best is None:
            return None
        stack = [(state, [])]
        while stack and self.nodes < PLAN_NODE_BUDGET:
            st, word = stack.pop()
            self.nodes += 1
            if self._done(st):
                if len(word) < len(best):
                    best = word
                continue
            if len(word) + max(1, self._need(st)) >= len(best):
                continue
            for br, child in reversed(self._children(st)):
                stack.append((child, word + [br]))
        return best


def classify_safe(lo, hi, params):
    try:
        return classify_range(lo, hi, params)
    except Unclassifiable:
        return None


# ---------------------------------------------------------------------------
# the full search
# ---------------------------------------------------------------------------


@dataclass
class PullbackTrace:
    curves: list
    branches: list
    n: int
    clipped: VerticalCurve | None = None
    plan_nodes: int = 0
    extents: list = field(default_factory=list)

    def summary(self) -> dict:
        s = self.curves[-1]
        return {
            "n": self.n,
            "branches": "".join(str(b) for b in self.branches),
            "initial_extent": self.curves[0].extent,
            "final_y_range": [s.y_min, s.y_max],
            "plan_nodes": self.plan_nodes,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["curve", "branch", "theta", "y"])
        labels = [f"L{i}" for i in range(len(self.curves) - 1)] + ["S"]
        for idx, (lab, c) in enumerate(zip(labels, self.curves)):
            br = self.branches[idx - 1] if idx > 0 else ""
            for t, y in zip(c.theta, c.y):
                w.writerow([lab, br, repr(float(t)), repr(float(y))])
        return buf.getvalue()


def _endpoints(c: VerticalCurve):
    return ((float(c.theta[0]), float(c.y[0])), (float(c.theta[-1]), float(c.y[-1])))


def _final_step(m: CylinderMap, c: VerticalCurve):
    """Clip ``c`` to the heights whose branch-3 preimages lie in I, then invert."""
    p = m.params
    k3 = p.windows[2]
    lo = max(c.y_min, p.J_in[0])
    hi = min(c.y_max, p.J_in[1])

    def pre_y(s):
        t = float(c.theta_at(s))
        shift = math.floor(k3 + 0.5 - t + 0.5)
        _, yy, ok = inverse_branch_many(m, 3, [t + shift], [s], check=False)
        return float(yy[0]) if ok[0] else math.nan

    def root(target):
        g = lambda s: pre_y(s) - target  # noqa: E731
        g_lo, g_hi = g(lo), g(hi)
        if g_lo == 0:
            return lo
        if g_hi == 0:
            return hi
        if not (g_lo < 0 < g_hi):
            raise PreconditionError("curve does not span the branch-3 image band")
        return optimize.brentq(g, lo, hi, xtol=1e-15, rtol=1e-15)

    s_lo, s_hi = root(-1.0), root(1.0)
    ys = np.linspace(s_lo, s_hi, CURVE_POINTS)
    clipped = c.resampled(ys)
    th, y = _refined_inverse(m, 3, clipped, s_lo, s_hi)
    y = np.clip(y, -1.0, 1.0)
    y[0], y[-1] = -1.0, 1.0
    return clipped, VerticalCurve(th, y, SHORT, c.cone)


def _normalize(c: VerticalCurve) -> VerticalCurve:
    if c.space != SHORT:
        raise PreconditionError("pullback starts from a short-cylinder curve")
    if len(c) < CURVE_POINTS:
        c = c.resampled(np.linspace(c.y_min, c.y_max, CURVE_POINTS))
    return c


def find_cutting_curve(m: CylinderMap, L: VerticalCurve, cap: int = STEP_CAP) -> PullbackTrace:
    p = m.params
    _require_jout(L, p)
    c = _normalize(L)
    curves, branches = [c], []
    planner = _Planner(m)
    plan = None
    can_plan = planner.sig > 1
    while True:
        cls = classify_curve(c, p)
        if cls == CurveClass.CUTS_JIN:
            break
        if len(branches) >= cap:
            raise IterationCap(f"no cutting curve after {cap} backward steps")
        if not plan:
            plan = planner.plan(_endpoints(c)) if can_plan else None
            if not plan:
                # no word reaches J_in: fall back to the plain rule for good
                can_plan = False
                plan = [1 if cls == CurveClass.BRANCH_1 else 2]
        br = plan.pop(0)
        target = p.J1 if br == 1 else p.J2
        if not _inside(c.y_min, c.y_max, target):
            plan = None
            br = 1 if cls == CurveClass.BRANCH_1 else 2
        nxt = pull_back_step(m, c, br)
        if not _inside(nxt.y_min, nxt.y_max, p.J_out):
            raise PreconditionError("pulled-back curve left J_out; the map is not certified")
        c = nxt
        curves.append(c)
        branches.append(br)
    clipped, S = _final_step(m, c)
    curves.append(S)
    branches.append(3)
    return PullbackTrace(curves, branches, len(branches), clipped, planner.nodes,
                         [cv.extent for cv in curves])


def validate_forward(m: CylinderMap, trace: PullbackTrace, tol: float = 1e-9) -> float:
    """Largest distance from the image of a vertex of curve i+1 to curve i.

    Links are checked one at a time: composing n forward steps would
    amplify theta round-off by d^n and says nothing about the construction.
    """
    worst = 0.0
    cs = trace.curves
    for i in range(len(cs) - 1):
        nxt = cs[i + 1]
        t, y = m.apply_xy(nxt.theta, nxt.y)
        worst = max(worst, float(np.max(distance_to_polyline(t, y, cs[i]))))
    return worst
