"""Tests for the rotationally symmetric Ricci flow on S³."""

import math
from dataclasses import replace

import numpy as np
import pytest

from capdeform.curvature import warped_curvature
from capdeform.deform import double, glue_interpolate, smooth_c1
from capdeform.errors import FlowError, PreconditionError
import capdeform.flow as flow_module
from capdeform.flow import (
    FlowOptions,
    FlowState,
    asymmetry,
    cfl_limit,
    flow_step,
    geometry,
    pinching,
    resolving_points,
    restrict_half,
    run_flow,
)
from capdeform.metrics import flat_ball, hemisphere
from capdeform.stencils import MIN_POINTS


def _even_state(n=65):
    x = np.linspace(-1.0, 1.0, n)
    w = np.cos(0.5 * math.pi * x) * (1.0 + 0.1 * np.cos(0.5 * math.pi * x) ** 2)
    w[0] = w[-1] = 0.0
    return FlowState(x, np.full(n, 0.5 * math.pi), w)


@pytest.fixture(scope="module")
def smoothed_glued():
    glued, _ = glue_interpolate(double(flat_ball(1.0, 513)), 0.1)
    smoothed, _ = smooth_c1(glued, 0.025)
    return smoothed


# --- states ---


def test_round_sphere_state():
    s = FlowState.round_sphere(65)
    assert s.n_points == 65
    assert s.dx == pytest.approx(2.0 / 64)
    assert s.arclength()[-1] == pytest.approx(math.pi)


def test_state_must_close_up():
    x = np.linspace(-1.0, 1.0, 33)
    with pytest.raises(PreconditionError, match="close up at both poles"):
        FlowState(x, np.ones(33), np.full(33, 0.5))


def test_state_needs_odd_grid():
    x = np.linspace(-1.0, 1.0, 32)
    w = np.cos(0.5 * math.pi * x)
    with pytest.raises(PreconditionError, match="odd number of points"):
        FlowState(x, np.full(32, 0.5 * math.pi), w)


def test_state_pole_must_be_smooth():
    x = np.linspace(-1.0, 1.0, 33)
    w = 2.0 * np.cos(0.5 * math.pi * x)
    w[0] = w[-1] = 0.0
    with pytest.raises(PreconditionError, match="pole is not smooth"):
        FlowState(x, np.full(33, 0.5 * math.pi), w)


def test_from_metric_needs_smooth_doubled_metric():
    with pytest.raises(PreconditionError, match="flow needs a doubled metric"):
        FlowState.from_metric(flat_ball(1.0, 65))
    glued, _ = glue_interpolate(double(flat_ball(1.0, 257)), 0.1)
    with pytest.raises(PreconditionError, match="smooth_c1 first"):
        FlowState.from_metric(glued)


def test_from_metric_subsamples_nested_grid():
    m = double(hemisphere(257))
    s = FlowState.from_metric(m, 129)
    assert np.array_equal(s.w[1:-1], m.warp[::4][1:-1])
    assert s.h[0] == pytest.approx(math.pi / 2)


def test_to_metric_round_sphere():
    m = FlowState.round_sphere(129).to_metric()
    assert m.doubled
    assert m.grid.r_min == pytest.approx(-math.pi / 2)
    np.testing.assert_allclose(m.warp[1:-1], np.cos(m.r[1:-1]), atol=1e-9)


# --- single steps ---


def test_round_sphere_step_scales_metric():
    s0 = FlowState.round_sphere(65)
    dt = 1e-5
    s1 = flow_step(s0, dt)
    factor = math.sqrt(1.0 - 4.0 * dt)
    np.testing.assert_allclose(s1.w, factor * s0.w, atol=1e-9)
    np.testing.assert_allclose(s1.h, factor * s0.h, atol=1e-9)
    assert s1.t == dt


def test_step_preserves_parity():
    s = _even_state()
    assert asymmetry(flow_step(s, 1e-5)) < 1e-13
    assert asymmetry(flow_step(s, 1e-5, mode="normalized", gauge="arclength")) < 1e-13


def test_step_cfl_violation():
    s = FlowState.round_sphere(65)
    with pytest.raises(FlowError, match="CFL"):
        flow_step(s, 2.0 * cfl_limit(s))


def test_unknown_mode():
    with pytest.raises(PreconditionError, match="unknown flow mode"):
        flow_step(FlowState.round_sphere(65), 1e-6, mode="fast")


def test_arclength_gauge_needs_uniform_h():
    s = FlowState.round_sphere(65)
    bumped = replace(s, h=s.h * (1.0 + 0.01 * np.cos(0.5 * math.pi * s.x) ** 2))
    with pytest.raises(PreconditionError, match="uniform h"):
        flow_step(bumped, 1e-6, gauge="arclength")


def _random_even_state(rng, n=65):
    x = np.linspace(-1.0, 1.0, n)
    c = np.cos(0.5 * math.pi * x)
    w = c * (1.0 + rng.uniform(-0.1, 0.1) * c ** 2 + rng.uniform(-0.05, 0.05) * c ** 4)
    w[0] = w[-1] = 0.0
    return FlowState(x, np.full(n, 0.5 * math.pi), w)


def _ricci_flow_residual(s, dt):
    geo = geometry(s)
    s1 = flow_step(s, dt)
    res_h = (s1.h ** 2 - s.h ** 2) / dt + 4.0 * geo.k_mixed * s.h ** 2
    res_w = (s1.w ** 2 - s.w ** 2) / dt + 2.0 * (geo.k_mixed + geo.k_tan) * s.w ** 2
    return float(max(np.max(np.abs(res_h)), np.max(np.abs(res_w))))


def test_step_is_consistent_with_ricci_flow():
    rng = np.random.default_rng(7)
    for _ in range(5):
        s = _random_even_state(rng)
        coarse, fine = _ricci_flow_residual(s, 2e-5), _ricci_flow_residual(s, 1e-5)
        assert coarse < 1e-2
        assert 1.8 < coarse / fine < 2.2


def test_normalized_round_sphere_is_fixed():
    s0 = FlowState.round_sphere(65)
    s1 = flow_step(s0, 1e-5, mode="normalized", gauge="arclength")
    assert np.max(np.abs(s1.w - s0.w)) < 1e-10
    assert np.max(np.abs(s1.h - s0.h)) < 1e-10


def _roughen_pole(monkeypatch):
    real = flow_module._heun

    def rough(*args, **kwargs):
        h, w = real(*args, **kwargs)
        w[1] *= 1.1
        return h, w

    monkeypatch.setattr(flow_module, "_heun", rough)


def test_step_with_rough_pole_is_a_flow_error(monkeypatch):
    _roughen_pole(monkeypatch)
    with pytest.raises(FlowError, match="pole is not smooth"):
        flow_step(FlowState.round_sphere(65), 1e-5)


# --- pinching ---


def test_round_sphere_pinching_is_zero():
    assert pinching(FlowState.round_sphere(257)) < 1e-8


def test_glued_ball_starts_far_from_round(smoothed_glued):
    assert pinching(FlowState.from_metric(smoothed_glued, 257)) >= 1.0


def test_resolved_flow_grid_starts_with_positive_ricci(smoothed_glued):
    assert resolving_points(smoothed_glued, 0.025) == 1025
    assert geometry(FlowState.from_metric(smoothed_glued, 1025)).min_ricci >= -1e-6


def test_resolving_points_halves_while_width_stays_resolved():
    m = double(hemisphere(1025))
    assert resolving_points(m, 0.05) == 513
    assert resolving_points(m, 1e-3) == 2049
    assert resolving_points(m, 100.0) == MIN_POINTS


# --- runs ---


def test_raw_round_sphere_singular_time():
    traj = run_flow(FlowState.round_sphere(65), FlowOptions(mode="raw"))
    assert traj.termination == "blowup"
    assert traj.T_est == pytest.approx(0.25, rel=1e-2)
    assert traj.uniform_equivalence == pytest.approx(1.0, abs=5e-2)
    assert traj.manifest()["mode"] == "raw"


def test_normalized_round_sphere_stops_at_once():
    traj = run_flow(FlowState.round_sphere(65))
    assert traj.termination == "pinched"
    assert traj.steps == 0
    assert len(traj.states) == 1
    assert math.isnan(traj.T_est)


def test_t_max_stops_the_run():
    traj = run_flow(FlowState.round_sphere(65), FlowOptions(mode="raw", t_max=0.01))
    assert traj.termination == "t_max"
    assert traj.final.t == pytest.approx(0.01)


def test_step_budget(monkeypatch):
    monkeypatch.setenv("CAPDEFORM_FLOW_MAX_STEPS", "5")
    with pytest.raises(FlowError, match="step budget exhausted"):
        run_flow(FlowState.round_sphere(65), FlowOptions(mode="raw"))


def test_run_with_rough_pole_is_a_flow_error(monkeypatch):
    _roughen_pole(monkeypatch)
    with pytest.raises(FlowError, match="pole is not smooth"):
        run_flow(FlowState.round_sphere(65), FlowOptions(mode="raw", t_max=0.01, store_dt=1e-6))


@pytest.mark.slow
def test_glued_flat_ball_converges_to_round():
    glued, _ = glue_interpolate(double(flat_ball(1.0, 513)), 0.2)
    smoothed, rep = smooth_c1(glued, 0.05)
    n_flow = resolving_points(smoothed, rep.delta_m)
    assert rep.delta_m >= 8 * 2.0 / (n_flow - 1)
    traj = run_flow(smoothed, FlowOptions(n_points=n_flow))
    assert traj.termination == "pinched"
    assert traj.diagnostics[-1]["pinching"] < 0.01
    assert traj.max_asymmetry < 1e-10
    assert traj.min_ricci >= -1e-6
    cap = restrict_half(traj.final)
    field_ = warped_curvature(cap)
    bulk = slice(8, None)
    mean = float(np.mean(field_.k_mixed[bulk]))
    for comp in (field_.k_mixed, field_.k_tan):
        assert np.max(np.abs(comp[bulk] - mean)) < 0.02 * mean


# --- restriction ---


def test_restrict_half_of_round_sphere_is_hemisphere():
    cap = restrict_half(FlowState.round_sphere(257))
    assert cap.grid.n_points == 129
    assert cap.grid.r_min == pytest.approx(-math.pi / 2)
    np.testing.assert_allclose(cap.warp, hemisphere(129).warp, atol=1e-8)
    assert abs(float(warped_curvature(cap).slice_ii[-1])) < 1e-6


def test_restrict_half_scale():
    cap = restrict_half(FlowState.round_sphere(129), scale=2.0)
    assert cap.grid.r_min == pytest.approx(-math.pi)
    assert cap.warp[-1] == pytest.approx(2.0)


def test_restrict_half_rejects_asymmetric_state():
    x = np.linspace(-1.0, 1.0, 65)
    w = np.cos(0.5 * math.pi * x) * (1.0 + 0.05 * np.sin(0.5 * math.pi * x) * np.cos(0.5 * math.pi * x) ** 2)
    w[0] = w[-1] = 0.0
    with pytest.raises(PreconditionError, match="not reflection symmetric"):
        restrict_half(FlowState(x, np.full(65, 0.5 * math.pi), w))
