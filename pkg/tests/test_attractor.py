from dataclasses import replace

import numpy as np
import pytest

from cylfold.attractor import (GridCover, appendix_a_demo, distortion_ratio, estimate_attractor,
                               find_fold_witness, stripe_coverage)
from cylfold.errors import EvidenceFailure, PreconditionError
from cylfold.skewmap import make_map
from cylfold.verifier import certify_all

SMALL = dict(samples=256, burn_in=1000, iters=20_000, grid=(512, 128), seed=42)


@pytest.fixture(scope="module")
def small_cover(d0):
    return estimate_attractor(d0, **SMALL)


def test_zero_iterations_gives_empty_cover(d0):
    cov = estimate_attractor(d0, samples=10, burn_in=5, iters=0, grid=(64, 32))
    assert cov.count() == 0
    assert stripe_coverage(cov, d0.params) == 0.0


def test_full_cover_has_unit_coverage(params):
    cov = GridCover.empty((64, 32))
    cov.hits[:] = 1
    assert stripe_coverage(cov, params) == 1.0


def test_grid_floor(d0):
    with pytest.raises(ValueError):
        estimate_attractor(d0, samples=4, iters=10, grid=(32, 32))


def test_determinism_and_threads(d0):
    kw = dict(samples=600, burn_in=50, iters=300, grid=(128, 64), seed=9)
    a = estimate_attractor(d0, threads=1, **kw)
    b = estimate_attractor(d0, threads=3, **kw)
    c = estimate_attractor(d0, threads=1, **kw)
    assert np.array_equal(a.hits, b.hits) and np.array_equal(a.hits, c.hits)
    assert a.to_pgm() == b.to_pgm()
    other = estimate_attractor(d0, threads=1, **{**kw, "seed": 10})
    assert not np.array_equal(a.hits, other.hits)


def test_monotone_in_iterations(d0):
    kw = dict(samples=64, burn_in=20, grid=(128, 64), seed=3)
    short = estimate_attractor(d0, iters=200, **kw).cells
    long = estimate_attractor(d0, iters=2000, **kw).cells
    assert not np.any(short & ~long)
    assert stripe_coverage(estimate_attractor(d0, iters=200, **kw), d0.params) <= \
        stripe_coverage(estimate_attractor(d0, iters=2000, **kw), d0.params)


def test_orbits_stay_in_open_cylinder(d0, small_cover):
    # rows touching y = -1 and y = +1 hold nothing (|y| stays below 0.95 + one cell)
    assert not small_cover.cells[0].any() and not small_cover.cells[-1].any()


def test_pgm_format_and_round_trip(tmp_path):
    cov = GridCover.empty((64, 32))
    cov.hits[0, 3] = 5  # bottom row, y near -1
    data = cov.to_pgm()
    assert data.startswith(b"P5\n64 32\n255\n")
    body = data[len(b"P5\n64 32\n255\n"):]
    assert len(body) == 64 * 32
    img = np.frombuffer(body, dtype=np.uint8).reshape(32, 64)
    assert img[-1, 3] == 255 and img.sum() == 255  # file row 0 is y = +1
    path = tmp_path / "c.pgm"
    cov.write_pgm(path)
    back = GridCover.read_pgm(path)
    assert np.array_equal(back.cells, cov.cells)


def test_pgm_rejects_garbage():
    with pytest.raises(ValueError):
        GridCover.from_pgm(b"P2\n1 1\n255\n0")


def test_cell_indexing():
    cov = GridCover.empty((64, 32))
    assert cov.cell_of(0.0, -1.0) == (0, 0)
    assert cov.cell_of(0.999999, 1.0) == (63, 31)
    assert len(cov.neighbourhood(0, 5)) == 9
    assert (63, 4) in cov.neighbourhood(0, 5)


def test_small_cover_stripe(d0, small_cover):
    assert stripe_coverage(small_cover, d0.params) >= 0.99


def test_witness_d0(d0, d0_report, small_cover):
    w = find_fold_witness(d0, small_cover, d0_report)
    assert w.passed
    assert (w.p.theta, w.p.y) == (0.875, 0.0)
    assert w.fp.theta == pytest.approx(0.0, abs=1e-12) and w.fp.y == pytest.approx(0.95, abs=1e-12)


def test_witness_interior_fault(d0, d0_report, small_cover):
    cov = GridCover(small_cover.resolution, small_cover.hits.copy())
    it, iy = cov.cell_of(0.875, 0.0)
    cov.hits[iy + 1, it] = 0
    with pytest.raises(EvidenceFailure) as exc:
        find_fold_witness(d0, cov, d0_report)
    assert exc.value.clause == "interior"


def test_witness_boundary_fault(d0, d0_report, small_cover):
    cov = GridCover(small_cover.resolution, small_cover.hits.copy())
    cov.hits[-2, 10] = 1  # a stray cell well above M
    with pytest.raises(EvidenceFailure) as exc:
        find_fold_witness(d0, cov, d0_report)
    assert exc.value.clause == "boundary"


def test_witness_needs_certified_fold(params, small_cover):
    m = make_map(replace(params, alpha=0.0))
    rep = certify_all(m, grid=(512, 128))
    with pytest.raises(PreconditionError):
        find_fold_witness(m, small_cover, rep)


def test_distortion_trivial_cases(d0):
    assert distortion_ratio(d0, 0.3, 0.01, 0) == 1.0
    # inside arc A2 the Jacobian does not depend on theta
    assert distortion_ratio(d0, 0.375, 0.01, 1) == pytest.approx(1.0, abs=1e-12)


def test_distortion_bounded(d0, rng):
    ratios = [distortion_ratio(d0, rng.uniform(), 16.0 ** -8, 8, y0=rng.uniform(-0.2, 0.2)) for _ in range(10)]
    assert max(ratios) < 10


def test_two_component_toy():
    doc = appendix_a_demo()
    assert doc["attractor"] == [0, 2]
    assert doc["f_of_2"] == 0
    assert doc["interior"] == {"0": False, "2": True}
    assert doc["boundary"] == {"0": True, "2": False}
    assert doc["orbits_alternate"] and doc["interior_to_boundary"]
