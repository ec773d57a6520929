import numpy as np
import pytest
from scipy.spatial import cKDTree

from cylfold.boxcover import (BoxSpec, build_box_cover, build_eps_net_contractions, build_fold_map,
                              cover_slack, rotation_matrix, verify_box_cover)
from cylfold.errors import CoverageFailure, ParamError

INSTANCES = [(2, 0.95, 0.8), (3, 0.95, 0.9), (4, 0.98, 0.93)]


def test_n3_construction():
    spec, p1, p2 = build_box_cover(3, 0.95, 0.9)
    assert spec.radii == pytest.approx((0.9, 0.81, 0.729))
    assert spec.lam * spec.radii[1] == pytest.approx(0.7695)  # lam rho^2
    assert p1.translation == pytest.approx([0.45, 0, 0])
    assert p2.translation == pytest.approx([-0.45, 0, 0])


@pytest.mark.parametrize("n,lam,rho", [(3, 0.95, 0.7), (2, 0.95, 0.96), (1, 0.9, 0.8), (2, 0.4, 0.3)])
def test_bad_parameters(n, lam, rho):
    with pytest.raises(ParamError):
        build_box_cover(n, lam, rho)


@pytest.mark.parametrize("n,lam,rho", INSTANCES)
def test_cover_verifies(n, lam, rho):
    spec, p1, p2 = build_box_cover(n, lam, rho)
    assert spec.violations() == []
    grid = 33
    margin = verify_box_cover(spec, p1, p2, grid)
    assert margin > cover_slack(spec, grid)
    assert p1.op_norm == pytest.approx(lam) and p1.op_norm < 1


def test_single_translate_fails():
    spec, p1, _ = build_box_cover(3, 0.95, 0.9)
    with pytest.raises(CoverageFailure) as exc:
        verify_box_cover(spec, p1, p1, 17)
    assert exc.value.point[0] < -0.45


def test_grid_floor():
    spec, p1, p2 = build_box_cover(2, 0.95, 0.8)
    with pytest.raises(ValueError):
        verify_box_cover(spec, p1, p2, 8)


@pytest.mark.parametrize("rho", [0.9, 0.85, 0.8, 0.75, 0.73])
def test_margin_closed_form(rho):
    # fibre axes leave r_{n-1}(lam - rho); the first axis leaves lam r_n - r_1/2
    n, lam = 3, 0.95
    spec, p1, p2 = build_box_cover(n, lam, rho)
    exact = min(rho ** (n - 1) * (lam - rho), rho * (lam * rho ** (n - 1) - 0.5))
    assert verify_box_cover(spec, p1, p2, 17) == pytest.approx(exact, abs=1e-12)


def test_rotation_is_isometry(rng):
    for n in (2, 3, 4):
        R = rotation_matrix(n)
        x = rng.normal(size=(1000, n))
        assert np.allclose(np.linalg.norm(x @ R.T, axis=1), np.linalg.norm(x, axis=1), rtol=0, atol=1e-15)
    assert rotation_matrix(3) @ np.array([1.0, 2.0, 3.0]) == pytest.approx([3.0, 1.0, 2.0])
    assert rotation_matrix(2) @ np.array([1.0, 2.0]) == pytest.approx([-2.0, 1.0])


def test_eps_net_example():
    spec = BoxSpec(2, (0.8, 0.64), 0.95)
    net = build_eps_net_contractions(spec, 0.2)
    assert net.counts == (65, 52) and net.N == 3380
    assert max(net.spacing) <= 0.025
    assert net.max_gap(spec, 10_000) <= 0.2 / 8
    assert all(f.op_norm == pytest.approx(0.2 / 16) for f in net.maps()[:10])


def test_nearest_matches_brute_force(rng):
    spec, _, _ = build_box_cover(3, 0.95, 0.9)
    net = build_eps_net_contractions(spec, 0.4)
    x = rng.uniform(-np.array(spec.radii), spec.radii, size=(2000, 3))
    d, _ = cKDTree(net.points).query(x)
    assert np.allclose(np.linalg.norm(x - net.nearest(x), axis=1), d)


@pytest.mark.parametrize("n,lam,rho", INSTANCES)
def test_eps_net_property(n, lam, rho):
    spec, _, _ = build_box_cover(n, lam, rho)
    assert build_eps_net_contractions(spec, 0.2).max_gap(spec, 10_000) <= 0.2 / 8


def test_eps_must_be_positive():
    spec, _, _ = build_box_cover(2, 0.95, 0.8)
    with pytest.raises(ParamError):
        build_eps_net_contractions(spec, 0.0)


def test_fold_map_example():
    psi, rep = build_fold_map(3, -0.04, 0.95, 0.5)
    assert rep.passed
    assert rep.boundary_distance == pytest.approx(0.05)
    assert psi(np.array([0.0, 1.0, -1.0])) == pytest.approx([0.95, 0.5, -0.5])
    assert psi(np.array([1.0, 0.0, 0.0]))[0] == pytest.approx(0.91)


def test_fold_map_failures():
    with pytest.raises(ParamError):
        build_fold_map(3, -0.04, 1.0, 0.5)
    _, rep = build_fold_map(3, 0.0, 0.95, 0.5)
    assert not rep.passed and not rep.strict_fold
