"""Tests for the finite-difference Riemann oracle and the engine cross-check."""

import json
import math

import numpy as np
import pytest

from capdeform.curvature import warped_curvature
from capdeform.deform import double, glue_interpolate
from capdeform.errors import MetricError, PreconditionError
from capdeform.metrics import BandMetric, RadialGrid, WarpedBallMetric, flat_ball, perturbed_ball, round_cap
from capdeform.oracle import (
    COMPONENTS,
    DEFAULT_STEP,
    band_sampler,
    crosscheck,
    euclidean_sampler,
    fd_riemann,
    oracle_warped_point,
    reference_metric,
    round_sphere_sampler,
    warped_sampler,
)

E1, E2, E3 = np.eye(3)


# --- fd_riemann ---


def test_euclidean_sampler_is_flat():
    res = fd_riemann(euclidean_sampler(), [0.3, -0.2, 0.5])
    assert np.max(np.abs(res.riemann)) < 1e-9
    assert np.max(np.abs(res.ricci)) < 1e-9


def test_round_sphere_constant_curvature():
    res = fd_riemann(round_sphere_sampler(), [0.1, 0.2, 0.3])
    for x, y in ((E1, E2), (E1, E3), (E2 + E3, E1 - E2)):
        assert res.sectional(x, y) == pytest.approx(1.0, abs=1e-6)
    assert res.ricci_unit(E1 + 2 * E3) == pytest.approx(2.0, abs=1e-6)
    assert res.scalar() == pytest.approx(6.0, abs=1e-5)


def test_first_bianchi_identity():
    for sampler in (round_sphere_sampler(), warped_sampler(round_cap(1.0, 257))[0]):
        assert fd_riemann(sampler, [0.05, 0.1, 0.15]).bianchi_residual() < 1e-7


def test_oracle_error_is_second_order_in_step():
    p = [0.2, 0.1, -0.3]
    errs = [abs(fd_riemann(round_sphere_sampler(), p, h).sectional(E1, E2) - 1.0) for h in (1e-2, 5e-3)]
    assert 3.0 < errs[0] / errs[1] < 5.0


def test_nonpositive_step():
    with pytest.raises(PreconditionError, match="step must be positive"):
        fd_riemann(euclidean_sampler(), [0.0, 0.0, 0.0], h=0.0)


def test_asymmetric_sample_rejected():
    with pytest.raises(MetricError, match="not a symmetric matrix"):
        fd_riemann(lambda p: np.array([[1.0, 0.5, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]), [0.1, 0.1, 0.1])


def test_indefinite_sample_rejected():
    with pytest.raises(MetricError, match="not positive definite"):
        fd_riemann(lambda p: np.diag([1.0, -1.0, 1.0]), [0.1, 0.1, 0.1])


def test_band_sampler_hyperbolic_type():
    sampler = band_sampler(lambda r, x, y: math.exp(2 * r) * np.eye(2))
    res = fd_riemann(sampler, [-0.3, 0.2, 0.4])
    assert res.sectional(E1, E2) == pytest.approx(-1.0, abs=1e-6)
    assert res.sectional(E2, E3) == pytest.approx(-1.0, abs=1e-6)


# --- warped charts ---


def test_oracle_matches_engine_on_perturbed_ball():
    m = perturbed_ball(1.0, 0.05, 513)
    engine = warped_curvature(m)
    for i in (64, 200, 333, 480):
        values = oracle_warped_point(m, i)
        for c in COMPONENTS:
            assert values[c] == pytest.approx(float(getattr(engine, c)[i]), abs=1e-6)


def test_oracle_matches_engine_on_random_profiles():
    rng = np.random.default_rng(20240917)
    grid = RadialGrid(-1.0, 0.0, 513)
    s = grid.r + 1.0
    tol = max(1e-6, 10 * DEFAULT_STEP ** 2)
    for _ in range(10):
        a3, a5 = rng.uniform(-0.1, 0.05), rng.uniform(-0.02, 0.02)
        m = WarpedBallMetric(grid, s + a3 * s ** 3 + a5 * s ** 5, label=f"odd:{a3:.4f},{a5:.4f}")
        engine = warped_curvature(m)
        for i in rng.integers(4, grid.n_points - 1, size=10):
            values = oracle_warped_point(m, int(i))
            for c in COMPONENTS:
                assert values[c] == pytest.approx(float(getattr(engine, c)[i]), abs=tol), (m.label, int(i), c)


def test_warped_sampler_right_center():
    grid = RadialGrid(-math.pi / 2, math.pi / 2, 513)
    w = np.cos(grid.r)
    w[0] = w[-1] = 0.0
    m = WarpedBallMetric(grid, w, doubled=True)
    values = oracle_warped_point(m, 450)
    assert values["k_mixed"] == pytest.approx(1.0, abs=1e-6)
    assert values["k_tan"] == pytest.approx(1.0, abs=1e-6)


def test_warped_sampler_unknown_center():
    with pytest.raises(PreconditionError, match="unknown chart center"):
        warped_sampler(flat_ball(1.0, 33), "middle")


# --- reference metrics ---


def test_reference_hemisphere():
    m, exact = reference_metric("hemisphere", 257)
    assert np.all(exact.k_mixed == 1.0)
    assert abs(exact.slice_ii[-1]) < 1e-15
    assert m.label == "hemisphere"


def test_reference_flat_ball():
    _, exact = reference_metric("flat_ball", 257)
    assert np.all(exact.scalar == 0.0)
    assert exact.slice_ii[-1] == -1.0


def test_reference_round_cap():
    a = math.pi / 3
    _, exact = reference_metric(f"round_cap:{a!r}", 257)
    assert exact.slice_ii[-1] == pytest.approx(-math.sin(a) * math.cos(a))
    assert np.all(exact.ricci_radial == 2.0)


def test_reference_unknown_name():
    with pytest.raises(PreconditionError, match="unknown reference metric"):
        reference_metric("perturbed_ball", 257)


def test_engine_matches_references():
    for name in ("flat_ball", "hemisphere", "round_cap:0.7853981633974483"):
        m, exact = reference_metric(name, 1025)
        field_ = warped_curvature(m)
        for c in ("k_mixed", "k_tan", "ricci_radial", "ricci_tangential", "slice_ii"):
            assert np.max(np.abs(getattr(field_, c) - getattr(exact, c))) < 1e-7, (name, c)


# --- crosscheck ---


def test_crosscheck_flat_ball_passes():
    # flat charts carry no truncation error; the step only sets the roundoff floor
    rep = crosscheck(flat_ball(1.0, 257), tol=1e-7, h=1e-3, stride=8)
    assert rep.passed
    assert rep.n_checked > 0
    assert {e["component"] for e in rep.entries} == set(COMPONENTS)
    assert all(e["max_dev"] < 1e-7 for e in rep.entries)


def test_crosscheck_flat_ball_next_to_pole():
    m = flat_ball(1.0, 257)
    values = oracle_warped_point(m, 3)
    for c in COMPONENTS:
        assert abs(values[c]) < 1e-7, c


def test_crosscheck_glued_flat_ball_skips_interfaces():
    glued, _ = glue_interpolate(double(flat_ball(1.0, 257)), 0.1)
    rep = crosscheck(glued, tol=1e-5, stride=4)
    assert rep.passed
    assert rep.n_excluded >= 2 * 7


def test_crosscheck_reports_corruption():
    m = round_cap(1.0, 129)
    w = np.array(m.warp)
    w[64] += 1e-3
    bad = m.with_warp(w)
    rep = crosscheck(bad, tol=1e-5)
    assert not rep.passed
    worst = max(rep.entries, key=lambda e: e["max_dev"])
    assert abs(worst["location"] - float(m.r[64])) <= 4 * m.spacing


def test_crosscheck_report_json():
    rep = crosscheck(flat_ball(1.0, 65), tol=1e-6, stride=4)
    entries = json.loads(rep.to_json())
    assert sorted(entries[0]) == ["component", "location", "max_dev", "pass"]


def test_crosscheck_rejects_bands():
    band = BandMetric.from_warped(WarpedBallMetric(RadialGrid(-1.0, 0.0, 17), np.linspace(1.0, 2.0, 17)))
    with pytest.raises(PreconditionError, match="needs a warped metric"):
        crosscheck(band, tol=1e-6)
