"""Phase-space geometry on the short cylinder S^1 x I and its d-fold cover.

Coordinates: ``theta`` lives on R/Z (short cylinder) or R/dZ (long cylinder),
``y`` lives in I = [-1, 1].  Almost vertical curves are stored as polylines
that are strictly monotone in ``y``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CurveError, DiameterExceeded, WindowMiss

SHORT = "short"
LONG = "long"


def wrap01(x):
    """Reduce to [0, 1); guards the ``(-tiny) % 1.0 == 1.0`` rounding case."""
    r = np.mod(x, 1.0)
    if np.ndim(r) == 0:
        r = float(r)
        return 0.0 if r >= 1.0 else r
    return np.where(r >= 1.0, 0.0, r)


def circle_delta(a, b):
    """Signed shortest displacement from ``b`` to ``a`` on R/Z, in [-1/2, 1/2)."""
    return np.mod(np.asarray(a) - np.asarray(b) + 0.5, 1.0) - 0.5


def circle_dist(a, b):
    return np.abs(circle_delta(a, b))


@dataclass(frozen=True)
class CylinderPoint:
    theta: float
    y: float

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap01(float(self.theta)))
        if not abs(self.y) <= 1.0:
            raise ValueError(f"fiber coordinate {self.y} outside [-1, 1]")

    def as_tuple(self) -> tuple[float, float]:
        return (self.theta, self.y)


@dataclass(frozen=True)
class LiftPoint:
    theta_lift: float
    y: float
    d: int = 16

    def __post_init__(self):
        t = float(np.mod(self.theta_lift, self.d))
        if t >= self.d:
            t = 0.0
        object.__setattr__(self, "theta_lift", t)


@dataclass(frozen=True)
class ConeConfig:
    """Constant-aperture cone fields.

    eta: vertical cone |v_theta| <= eta |v_y|; kappa: horizontal cone
    |v_y| <= kappa |v_theta|; delta: bound on horizontal projections of
    almost vertical curves.
    """

    eta: float = 0.05
    kappa: float = 4.0
    delta: float = 0.1

    def __post_init__(self):
        if not (self.eta > 0 and self.kappa > 0):
            raise ValueError("cone apertures must be positive")
        if not 0 < self.delta < 0.5:
            raise ValueError("delta must lie in (0, 1/2)")
        if 2 * self.eta > self.delta:
            raise ValueError("need 2*eta <= delta so full-height curves fit the delta bound")


def project(p: LiftPoint) -> CylinderPoint:
    return CylinderPoint(wrap01(p.theta_lift), p.y)


def _unwrap(theta: np.ndarray) -> np.ndarray:
    """Unwrap circle values relative to the first one (valid for diameters < 1/2)."""
    return theta[0] + circle_delta(theta, theta[0])


@dataclass(frozen=True, eq=False)
class VerticalCurve:
    """Polyline (theta_i, y_i) with y strictly increasing.

    On the short cylinder theta is taken mod 1; on the long cylinder the
    values are window coordinates and are kept as given.
    """

    theta: np.ndarray
    y: np.ndarray
    space: str = SHORT
    cone: ConeConfig = field(default_factory=ConeConfig)

    def __post_init__(self):
        th = np.array(self.theta, dtype=float)
        yy = np.array(self.y, dtype=float)
        if th.ndim != 1 or th.shape != yy.shape or th.size < 2:
            raise CurveError("a curve needs at least two (theta, y) points")
        if self.space not in (SHORT, LONG):
            raise CurveError(f"unknown space {self.space!r}")
        if self.space == SHORT:
            th = wrap01(th)
        dy = np.diff(yy)
        if not np.all(dy > 0):
            raise CurveError("y must be strictly increasing along the curve")
        dth = self._dtheta(th)
        slope = np.max(np.abs(dth) / dy)
        if slope > self.cone.eta:
            raise CurveError(f"segment slope {slope:.3g} exceeds eta={self.cone.eta}")
        diam = self._diameter(th)
        if diam > self.cone.delta:
            raise DiameterExceeded(f"horizontal diameter {diam:.3g} exceeds delta={self.cone.delta}")
        th.setflags(write=False)
        yy.setflags(write=False)
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "y", yy)

    def _dtheta(self, th):
        d = np.diff(th)
        return circle_delta(th[1:], th[:-1]) if self.space == SHORT else d

    def _diameter(self, th):
        u = _unwrap(th) if self.space == SHORT else th
        return float(u.max() - u.min())

    @property
    def diameter(self) -> float:
        return self._diameter(self.theta)

    @property
    def y_min(self) -> float:
        return float(self.y[0])

    @property
    def y_max(self) -> float:
        return float(self.y[-1])

    @property
    def extent(self) -> float:
        return float(self.y[-1] - self.y[0])

    def unwrapped_theta(self) -> np.ndarray:
        return _unwrap(self.theta) if self.space == SHORT else self.theta.copy()

    def __len__(self):
        return self.y.size

    def points(self) -> np.ndarray:
        return np.column_stack([self.theta, self.y])

    def theta_at(self, y) -> np.ndarray:
        """Linear interpolation of theta along the polyline (unwrapped)."""
        return np.interp(y, self.y, self.unwrapped_theta())

    def resampled(self, y_new) -> "VerticalCurve":
        y_new = np.asarray(y_new, dtype=float)
        return VerticalCurve(self.theta_at(y_new), y_new, self.space, self.cone)


def vertical_segment(theta0: float, y_lo: float, y_hi: float, n: int = 257,
                     cone: ConeConfig | None = None) -> VerticalCurve:
    """Straight vertical curve {theta0} x [y_lo, y_hi] with ``n`` points."""
    y = np.linspace(y_lo, y_hi, n)
    return VerticalCurve(np.full(n, float(theta0)), y, SHORT, cone or ConeConfig())


def lift_curve(c: VerticalCurve, window_k: int, delta: float) -> VerticalCurve:
    """Lift a short-cylinder curve into the window [k - delta, k + 1 + delta].

    Among admissible integer shifts the one whose lifted midpoint is closest
    to the window center k + 1/2 wins; exact ties go to the smaller shift.
    """
    if c.space != SHORT:
        raise CurveError("lift_curve expects a short-cylinder curve")
    u = c.unwrapped_theta()
    lo, hi = float(u.min()), float(u.max())
    if hi - lo > delta:
        raise DiameterExceeded(f"horizontal diameter {hi - lo:.3g} exceeds delta={delta}")
    n_min = math.ceil(window_k - delta - lo)
    n_max = math.floor(window_k + 1 + delta - hi)
    if n_min > n_max:
        raise WindowMiss(f"no integer shift places the curve inside window {window_k}")
    mid = 0.5 * (lo + hi)
    center = window_k + 0.5
    shift = min(range(n_min, n_max + 1), key=lambda n: (abs(mid + n - center), n))
    return VerticalCurve(u + shift, c.y.copy(), LONG, c.cone)


def project_curve(c: VerticalCurve) -> VerticalCurve:
    if c.space == SHORT:
        return c
    return VerticalCurve(wrap01(c.theta), c.y.copy(), SHORT, c.cone)


def curve_cuts(c: VerticalCurve, y_bottom: float, y_top: float) -> bool:
    """True iff the curve meets both horizontal boundaries of the stripe."""
    if not y_bottom < y_top:
        raise ValueError("need y_bottom < y_top")
    return bool(c.y_min <= y_bottom and c.y_max >= y_top)


def distance_to_polyline(theta, y, curve: VerticalCurve) -> np.ndarray:
    """Euclidean distance from points to a polyline, theta measured on the circle
    for short-cylinder curves."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    ct = curve.unwrapped_theta()
    cy = curve.y
    if curve.space == SHORT:
        ref = 0.5 * (ct.min() + ct.max())
        theta = ref + circle_delta(theta, ref)
    p0 = np.stack([ct[:-1], cy[:-1]], axis=1)
    seg = np.stack([np.diff(ct), np.diff(cy)], axis=1)
    seg_len2 = np.sum(seg * seg, axis=1)
    pts = np.stack([theta, y], axis=1)
    nseg = seg.shape[0]

    def seg_dist(q_pts, idx):
        q = q_pts[:, None, :] - p0[idx]
        t = np.clip(np.sum(q * seg[idx], axis=2) / seg_len2[idx], 0.0, 1.0)
        diff = q - t[..., None] * seg[idx]
        return np.sqrt(np.min(np.sum(diff * diff, axis=2), axis=1))

    # y is monotone, so only segments whose y-span comes within the distance
    # found near the point's own height can be closer
    w = min(nseg, 8)
    start = np.clip(np.searchsorted(cy, y) - 1 - w // 2, 0, nseg - w)
    idx = start[:, None] + np.arange(w)[None, :]
    out = seg_dist(pts, idx)
    lo_y = cy[start]
    hi_y = cy[start + w]
    covered = ((y - out >= lo_y) | (start == 0)) & ((y + out <= hi_y) | (start + w == nseg))
    rest = np.flatnonzero(~covered)
    chunk = 1024
    all_idx = np.arange(nseg)[None, :]
    for s in range(0, rest.size, chunk):
        sel = rest[s:s + chunk]
        out[sel] = seg_dist(pts[sel], np.broadcast_to(all_idx, (sel.size, nseg)))
    return out
