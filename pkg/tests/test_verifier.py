import json
from dataclasses import replace

import numpy as np
import pytest

from cylfold.core import ConeConfig
from cylfold.errors import GridTooCoarse
from cylfold.skewmap import identity_map, make_map, random_perturbation, zero_fiber_map
from cylfold.verifier import (FAIL, PASS, certify_all, check_cone_hyperbolicity, check_covering_condition,
                              check_fold_condition, check_segment_inclusions, check_window_condition)

# closed-form D0 oracles
SIGMA_12 = 1 / 0.925
SIGMA_3 = 16 / (16 * 0.04)
FOLD_GAP_EXACT = 0.04 * 0.2**2  # -alpha (2a)^2


def test_inclusions_d0(params):
    f = check_segment_inclusions(params)
    assert f.status == PASS
    assert f.constants["J1_and_J2"] == [-0.1, 0.1]
    assert f.constants["slacks"]["J_in<J1&J2"] == pytest.approx(0.05)
    assert f.margin == pytest.approx(0.05)


@pytest.mark.parametrize("b", [0.19, 0.35])
def test_inclusions_fail(params, b):
    f = check_segment_inclusions(replace(params, b=b))
    assert f.status == FAIL and f.witness is not None


def test_cone_d0_constants(d0_report):
    cone = d0_report.get("cone")
    assert cone.status == PASS
    assert cone.constants["lambda_h"] >= 12
    assert cone.constants["sigma"]["1"] == pytest.approx(SIGMA_12, abs=1e-12)
    assert cone.constants["sigma"]["2"] == pytest.approx(SIGMA_12, abs=1e-12)
    assert cone.constants["sigma"]["3"] == pytest.approx(SIGMA_3, abs=1e-9)
    assert cone.constants["sup_abs_y_image"] == pytest.approx(0.95, abs=1e-3)


def test_cone_fails_for_narrow_cone_and_identity(d0):
    assert check_cone_hyperbolicity(d0, ConeConfig(kappa=0.01), grid=(256, 64)).status == FAIL
    ident = check_cone_hyperbolicity(identity_map(), grid=(256, 64))
    assert ident.status == FAIL and ident.constants["lambda_h"] <= 1.0


def test_cone_grid_floor(d0):
    with pytest.raises(GridTooCoarse):
        check_cone_hyperbolicity(d0, grid=(128, 64))


@pytest.mark.parametrize("j", [1, 2])
def test_covering_d0(d0, j):
    f = check_covering_condition(d0, j)
    assert f.status == PASS
    (t0, t1), (y0, y1) = f.constants["preimage_box"]
    k = (1, 5)[j - 1]
    assert t0 == pytest.approx((k - 0.1) / 16, abs=1e-13)
    assert t1 == pytest.approx((k + 1.1) / 16, abs=1e-13)
    y_lo = ((-0.1 - 0.075) / 0.925) if j == 1 else ((-0.25 + 0.075) / 0.925)
    y_hi = ((0.25 - 0.075) / 0.925) if j == 1 else ((0.1 + 0.075) / 0.925)
    assert y0 == pytest.approx(y_lo, abs=1e-12) and y1 == pytest.approx(y_hi, abs=1e-12)
    assert f.margin > 0


def test_covering_fails_for_flat_psi1(params):
    m = make_map(replace(params, psi1=(0.6, 0.075)))
    f = check_covering_condition(m, 1)
    assert f.status == FAIL
    # the linear part only reaches 0.075 + 0.6 * 0.2 < 0.25, so the preimage leaves [-0.2, 0.2]
    assert f.constants["preimage_box"][1][1] > 0.2


def test_steep_psi1_fails_through_sigma(params):
    m = make_map(replace(params, psi1=(1.2, 0.075)))
    rep = certify_all(m, grid=(512, 128))
    assert rep.status == FAIL
    assert rep.sigma["1"] < 1


def test_window_d0(d0):
    f = check_window_condition(d0)
    assert f.status == PASS
    assert f.constants["strip"] == pytest.approx([8.9 / 16, 10.1 / 16])
    assert f.constants["arc_margin"] == pytest.approx(0.00625)
    assert f.constants["fiber_margin"] == pytest.approx(0.01, abs=1e-12)


def test_window_failures(params):
    shrunk = replace(params, arcs=(params.arcs[0], params.arcs[1], (0.57, 0.70), params.arcs[3]))
    assert check_window_condition(make_map(shrunk)).status == FAIL
    steep = check_window_condition(make_map(replace(params, psi3_slope=0.06)))
    assert steep.status == FAIL and steep.constants["sup_abs_fiber"] == pytest.approx(0.06)


def test_fold_d0(d0_report):
    f = d0_report.get("fold")
    assert f.status == PASS
    assert f.constants["M"] == 0.95
    assert f.constants["p"] == [0.875, 0.0]
    assert f.constants["Pi"] == [[0.75, 1.0], [-0.2, 0.2]]
    assert 1.5e-3 <= f.constants["gap"] <= FOLD_GAP_EXACT


def test_fold_failures(params):
    assert check_fold_condition(make_map(replace(params, alpha=0.0)), grid=(512, 128)).status == FAIL
    assert check_fold_condition(zero_fiber_map(), grid=(512, 128)).status == FAIL


def test_fold_gap_tightens_with_resolution(d0):
    gaps = [check_fold_condition(d0, grid=g).margin for g in [(256, 64), (512, 128), (1024, 256)]]
    assert gaps == sorted(gaps)
    assert all(g <= FOLD_GAP_EXACT for g in gaps)


def test_certify_d0_passes(d0_report):
    assert d0_report.status == PASS
    assert d0_report.fold_gap >= 1.5e-3


def test_certify_identity_fails():
    assert certify_all(identity_map(), grid=(256, 64)).status == FAIL


def test_certify_small_perturbation_passes(d0):
    rng = np.random.default_rng(7)
    m = make_map(d0.params, random_perturbation(rng, 1e-3))
    assert certify_all(m, grid=(1024, 256)).status == PASS


def test_report_json_is_stable(d0_report):
    doc = json.loads(d0_report.to_json())
    assert list(doc) == ["status", "margin", "lambda_h", "sigma", "fold_gap", "fold_max", "fold_point",
                         "windows", "pi", "conditions"]
    assert [c["condition"] for c in doc["conditions"]] == [
        "parameters", "inclusions", "cone", "covering_1", "covering_2", "window", "fold"]
    assert d0_report.to_json() == d0_report.to_json()
    for c in doc["conditions"]:
        assert list(c) == ["condition", "status", "margin", "constants", "witness", "message"]


def test_fail_reports_carry_witness(params):
    f = check_fold_condition(make_map(replace(params, alpha=0.0)), grid=(512, 128))
    assert f.witness is not None and "theta" in f.witness
