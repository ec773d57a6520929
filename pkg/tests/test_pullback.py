import math
from dataclasses import replace

import numpy as np
import pytest

from cylfold.core import VerticalCurve, curve_cuts, vertical_segment
from cylfold.errors import IterationCap, PreconditionError, Unclassifiable
from cylfold.pullback import (CurveClass, PullbackTrace, classify_curve, classify_range, find_cutting_curve,
                              pull_back_step, validate_forward)
from cylfold.skewmap import make_map

SIGMA = 1 / 0.925
N_BOUND = math.ceil(math.log(0.1 / 1e-3) / math.log(SIGMA)) + 2


def test_bound_value():
    assert N_BOUND == 62


@pytest.mark.parametrize("lo,hi,cls", [
    (-0.06, 0.06, CurveClass.CUTS_JIN),
    (0.0, 0.2, CurveClass.BRANCH_1),
    (-0.2, 0.0, CurveClass.BRANCH_2),
    (-0.04, 0.04, CurveClass.BRANCH_1),  # fits both J1 and J2
])
def test_classify_examples(params, lo, hi, cls):
    assert classify_curve(vertical_segment(0.3, lo, hi), params) == cls


def test_classify_rejects(params):
    with pytest.raises(PreconditionError):
        classify_curve(vertical_segment(0.3, 0.0, 0.3), params)
    with pytest.raises(Unclassifiable):
        classify_range(-0.3, 0.04, params)


def test_pull_back_step_closed_form(d0):
    out = pull_back_step(d0, vertical_segment(0.0, 0.0, 0.1), 1)
    assert out.y_min == pytest.approx(-0.075 / 0.925, abs=1e-12)
    assert out.y_max == pytest.approx(0.025 / 0.925, abs=1e-12)
    assert out.extent == pytest.approx(0.1 / 0.925, abs=1e-12)
    assert np.allclose(out.theta, 1 / 16, atol=1e-12)


def test_pull_back_step_branch2_closed_form(d0):
    out = pull_back_step(d0, vertical_segment(0.4, -0.1, 0.0), 2)
    assert out.y_min == pytest.approx((-0.1 + 0.075) / 0.925, abs=1e-12)
    assert out.y_max == pytest.approx(0.075 / 0.925, abs=1e-12)


def test_pull_back_step_preconditions(d0):
    with pytest.raises(PreconditionError):
        pull_back_step(d0, vertical_segment(0.0, 0.0, 0.3), 1)
    with pytest.raises(PreconditionError):
        pull_back_step(d0, vertical_segment(0.0, -0.2, 0.0), 1)


def test_pullback_expands_by_sigma(d0, rng):
    for _ in range(10):
        y0 = rng.uniform(-0.2, -0.05)
        c = vertical_segment(rng.uniform(), y0, y0 + 0.01)
        out = pull_back_step(d0, c, 2)
        assert out.extent >= SIGMA * c.extent * (1 - 1e-12)


def test_n_equals_one(d0):
    tr = find_cutting_curve(d0, vertical_segment(0.2, -0.06, 0.06))
    assert tr.n == 1 and tr.branches == [3]
    S = tr.curves[-1]
    assert abs(S.y_min + 1) <= 1e-9 and abs(S.y_max - 1) <= 1e-9
    assert validate_forward(d0, tr) < 1e-12


def test_d0_trace(d0):
    L = vertical_segment(0.0, 0.0, 1e-3)
    tr = find_cutting_curve(d0, L)
    assert tr.n <= N_BOUND
    assert curve_cuts(tr.curves[-1], -1 + 1e-9, 1 - 1e-9)
    assert validate_forward(d0, tr) < 1e-9
    p = d0.params
    for c in tr.curves[:-1]:
        assert p.J_out[0] <= c.y_min and c.y_max <= p.J_out[1]
    ext = tr.extents[:-1]
    assert all(b >= SIGMA * a * (1 - 1e-9) for a, b in zip(ext, ext[1:]))
    rows = tr.to_csv().splitlines()
    assert rows[0] == "curve,branch,theta,y"
    assert rows[-1].startswith("S,3,")


def test_corrupted_trace_detected(d0):
    tr = find_cutting_curve(d0, vertical_segment(0.7, -0.02, -0.019))
    k = len(tr.curves) // 2
    c = tr.curves[k]
    shifted = VerticalCurve(c.theta + 0.01, c.y, c.space, c.cone)
    bad = PullbackTrace(tr.curves[:k] + [shifted] + tr.curves[k + 1:], tr.branches, tr.n)
    assert validate_forward(d0, bad) > 1e-3


def test_start_outside_jout(d0):
    with pytest.raises(PreconditionError):
        find_cutting_curve(d0, vertical_segment(0.0, 0.2, 0.3))


def test_non_expanding_map_hits_cap(params):
    m = make_map(replace(params, psi1=(1.0, 0.0)))
    with pytest.raises(IterationCap):
        find_cutting_curve(m, vertical_segment(0.3, 0.0, 1e-3), cap=50)
