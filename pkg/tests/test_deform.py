"""Tests for shifts, doubling, gluing, smoothing, perturbation and conformal collars."""

import math

import numpy as np
import pytest

from capdeform.curvature import warped_curvature
from capdeform.deform import (
    BumpFunction,
    CollarFunction,
    boundary_perturb,
    conformal_collar,
    conformal_critical_s,
    conformal_ii_unscaled,
    conformal_ricci_derivative,
    conformal_ricci_exact,
    delta_schedule,
    double,
    equidistant_check,
    glue_band,
    glue_interpolate,
    hessian_laplacian_check,
    scaled_perturb_path,
    shift,
    smooth_c1,
)
from capdeform.errors import ConformalError, PreconditionError, SmoothingError
from capdeform.metrics import BandMetric, RadialGrid, flat_ball, hemisphere, round_cap


# --- shift ---


def test_shift_flat_ball():
    m = shift(flat_ball(1.0, 257), 0.1)
    assert m.grid.r_min == pytest.approx(-0.9)
    np.testing.assert_allclose(m.warp, 0.9 + m.r, atol=1e-12)
    assert m.warp[0] == 0.0


def test_shift_zero_is_identity():
    m = flat_ball(1.0, 65)
    assert shift(m, 0.0) is m


def test_shift_round_cap_is_smaller_cap():
    np.testing.assert_allclose(shift(round_cap(1.0, 257), 0.2).warp, round_cap(0.8, 257).warp, atol=1e-8)


def test_shift_out_of_range():
    with pytest.raises(PreconditionError, match="shift outside the radial interval"):
        shift(flat_ball(1.0, 65), 1.0)


def test_shift_rejects_doubled():
    with pytest.raises(PreconditionError, match="shift needs a ball"):
        shift(double(hemisphere(65)), 0.1)


def test_shift_carries_interfaces():
    glued, _ = glue_interpolate(double(flat_ball(1.0, 513)), 0.1)
    half = glued.half()
    assert half.interfaces == (-0.1,)
    assert shift(half, 0.05).interfaces == pytest.approx((-0.05,))
    assert shift(half, 0.1).interfaces == ()
    assert shift(half, 0.2).interfaces == ()


# --- double ---


def test_double_hemisphere_is_smooth_sphere():
    d = double(hemisphere(257))
    assert d.doubled and d.smoothness == "Cinf"
    assert d.interfaces == ()
    np.testing.assert_allclose(d.warp, np.abs(np.cos(d.r)), atol=1e-12)


def test_double_flat_ball_has_kink():
    d = double(flat_ball(1.0, 257))
    assert d.smoothness == "C0"
    assert d.interfaces == (0.0,)
    np.testing.assert_allclose(d.warp, 1.0 - np.abs(d.r), atol=1e-12)


def test_double_round_cap_is_c0():
    assert double(round_cap(math.pi / 4, 257)).smoothness == "C0"


def test_double_twice():
    with pytest.raises(PreconditionError, match="already doubled"):
        double(double(flat_ball(1.0, 33)))


# --- gluing ---


@pytest.fixture(scope="module")
def glued_flat():
    doubled = double(flat_ball(1.0, 257))
    glued, diag = glue_interpolate(doubled, 0.1)
    return doubled, glued, diag


def test_glue_coefficients_for_flat_ball(glued_flat):
    _, glued, diag = glued_flat
    assert float(diag.b.values) == pytest.approx(-9.0, abs=1e-9)
    assert float(diag.c.values) == pytest.approx(0.9, abs=1e-9)
    assert diag.c1_mismatch < 1e-10
    assert glued.interfaces == (-0.1, 0.1)
    band = np.abs(glued.r) <= 0.1
    np.testing.assert_allclose(glued.warp[band] ** 2, 0.9 * (1.0 - glued.r[band] ** 2 / 0.1), atol=1e-12)


def test_glue_ricci_at_equator(glued_flat):
    _, glued, diag = glued_flat
    assert diag.ricci_radial_center == pytest.approx(20.0, rel=1e-2)
    center = glued.grid.index_of(0.0)
    ric_tt = float(warped_curvature(glued).ricci_tangential[center])
    assert ric_tt == pytest.approx(1 / 0.1 + 1 / 0.9, rel=1e-2)
    assert diag.ricci_min_interior > 0.0


def test_glue_margin_with_unit_lambda():
    _, diag = glue_interpolate(double(flat_ball(1.0, 257)), 0.1, lam=1.0)
    assert diag.Lambda == 1.0
    assert diag.eqper_margin == pytest.approx(9.0, abs=1e-9)


def test_glue_center_ricci_scales_like_inverse_rho():
    doubled = double(flat_ball(1.0, 513))
    rhos = np.array([0.025, 0.05, 0.1, 0.2])
    ric = [glue_interpolate(doubled, float(rho))[1].ricci_radial_center for rho in rhos]
    slope = np.polyfit(np.log(rhos), np.log(ric), 1)[0]
    assert slope == pytest.approx(-1.0, abs=0.05)


def test_glue_diagnostics_json(glued_flat):
    _, _, diag = glued_flat
    assert diag.to_dict()["b"] == pytest.approx(-9.0)
    assert '"eqper_margin"' in diag.to_json()


def test_glue_rho_out_of_range():
    with pytest.raises(PreconditionError, match="band half-width out of range"):
        glue_interpolate(double(flat_ball(1.0, 257)), 0.6)


def test_glue_rho_unresolved():
    with pytest.raises(PreconditionError, match="band is unresolved"):
        glue_interpolate(double(flat_ball(1.0, 65)), 0.1)


def test_glue_lambda_too_large():
    with pytest.raises(PreconditionError, match="Lambda must be positive"):
        glue_interpolate(double(flat_ball(1.0, 257)), 0.1, lam=2.0)


def test_glue_needs_doubled_metric():
    with pytest.raises(PreconditionError, match="gluing needs a doubled metric"):
        glue_interpolate(flat_ball(1.0, 257), 0.1)


def test_equidistant_check(glued_flat):
    doubled, glued, _ = glued_flat
    rep = equidistant_check(doubled, glued, 0.1)
    assert rep.outside_match < 1e-12
    assert rep.min_convexity > 0.0
    assert rep.passed


def test_glue_band_matches_quadratic_formula():
    def fn(r, x, y):
        return ((1.5 + r) ** 2)[..., None, None] * np.eye(2)

    band = BandMetric.from_function(RadialGrid(-0.5, 0.0, 129), 6, 6, fn)
    glued, diag = glue_band(band, 0.1)
    assert glued.grid.n_points == 257
    assert glued.interfaces == (-0.1, 0.1)
    np.testing.assert_allclose(diag.b.values, np.broadcast_to(-14.0 * np.eye(2), diag.b.values.shape), atol=1e-8)
    np.testing.assert_allclose(diag.c.values, np.broadcast_to(2.1 * np.eye(2), diag.c.values.shape), atol=1e-8)
    assert diag.eqper_margin > 0.0
    assert diag.ricci_min_interior > 0.0


# --- smoothing ---


def test_smoothing_glued_flat_ball_keeps_ricci_positive():
    glued, _ = glue_interpolate(double(flat_ball(1.0, 1025)), 0.1)
    out, rep = smooth_c1(glued, 0.01)
    assert rep.passed
    assert rep.min_ricci_band > 0.0
    assert out.interfaces == ()
    assert out.smoothness == "C10"
    assert rep.attempts[0]["delta_m"] == 0.01


def test_smoothing_smooth_input_moves_little():
    m = double(hemisphere(513))
    out, rep = smooth_c1(m, 0.04, rho=0.2)
    assert rep.sup_deviation < 0.04 ** 2


def test_smoothing_deviation_is_second_order_in_width():
    m = double(hemisphere(4097))
    widths = np.array([0.04, 0.02, 0.01, 0.005])
    devs = np.array([smooth_c1(m, float(d), rho=0.2)[1].sup_deviation for d in widths])
    assert np.all(devs < widths ** 2)
    rates = np.log2(devs[:-1] / devs[1:])
    assert np.all(rates > 1.9)


def test_smoothing_keeps_reflection_symmetry():
    glued, _ = glue_interpolate(double(flat_ball(1.0, 1025)), 0.1)
    out, _ = smooth_c1(glued, 0.02)
    assert np.array_equal(out.warp, out.warp[::-1])
    np.testing.assert_allclose(out.r, -out.r[::-1], atol=1e-15)


def test_smoothing_zero_width():
    glued, _ = glue_interpolate(double(flat_ball(1.0, 257)), 0.1)
    with pytest.raises(PreconditionError, match="mollifier width out of range"):
        smooth_c1(glued, 0.0)


def test_smoothing_grid_too_coarse():
    glued, _ = glue_interpolate(double(flat_ball(1.0, 257)), 0.1)
    with pytest.raises(SmoothingError, match="grid too coarse"):
        smooth_c1(glued, 0.01)


# --- boundary perturbation ---


def test_bump_function_derivative_at_zero():
    bump = BumpFunction(0.2)
    assert float(bump(0.0)) == 0.0
    assert float(bump(0.0, 1)) == pytest.approx(math.exp(-1) / 0.2)
    assert float(bump(0.25)) == 0.0


def test_perturb_hemisphere_boundary_ii():
    out, rep = boundary_perturb(hemisphere(1025), 0.01, 0.2)
    assert rep.ii_boundary == pytest.approx(-0.0092, abs=1e-4)
    assert float(warped_curvature(out).slice_ii[-1]) == pytest.approx(rep.ii_boundary, abs=1e-6)


def test_perturb_zero_amplitude_is_identity():
    base = hemisphere(257)
    out, rep = boundary_perturb(base, 0.0, 0.2)
    assert out is base
    assert rep.c2_norm == 0.0


def test_perturb_keeps_ricci_positive():
    _, rep = boundary_perturb(hemisphere(1025), 0.01, 0.2, ensure_positive=True)
    assert rep.min_ricci > 0.0
    assert rep.eta <= 0.01


def test_perturb_needs_geodesic_boundary():
    with pytest.raises(PreconditionError, match="not totally geodesic"):
        boundary_perturb(flat_ball(1.0, 257), 0.01, 0.2)


def test_scaled_perturb_path_ends():
    base = hemisphere(1025)
    assert scaled_perturb_path(base, 0.01, 0.2, 1.0) is base
    half = scaled_perturb_path(base, 0.01, 0.2, 0.5)
    assert float(warped_curvature(half).slice_ii[-1]) == pytest.approx(-0.0046, abs=1e-5)
    full = scaled_perturb_path(base, 0.01, 0.2, 0.0)
    assert np.array_equal(full.warp, boundary_perturb(base, 0.01, 0.2)[0].warp)


def test_delta_schedule_branches():
    assert delta_schedule(0.5, 0.05, 0.1) == 0.0
    assert delta_schedule(0.85, 0.05, 0.1) == pytest.approx(0.025)
    assert delta_schedule(1.0, 0.05, 0.1) == 0.05


def test_delta_schedule_ramp_width():
    with pytest.raises(PreconditionError, match="ramp width"):
        delta_schedule(0.5, 0.05, 0.5)


# --- collar and conformal deformation ---


def test_collar_function_values():
    cf = CollarFunction(0.5)
    assert float(cf.f(0.0)) == pytest.approx(math.exp(-4))
    assert float(cf.df(0.0)) == pytest.approx(16 * math.exp(-4))
    r = np.array([-0.9, -0.5])
    for values in (cf.f(r), cf.df(r), cf.d2f(r)):
        assert np.all(values == 0.0)


def test_collar_width_range():
    with pytest.raises(PreconditionError, match="collar width"):
        CollarFunction(0.6)


def test_hessian_laplacian_on_flat_ball():
    check = hessian_laplacian_check(flat_ball(1.0, 1025), 0.5)
    assert check.min_hessian >= -1e-10
    assert check.min_laplacian > 0.0
    assert check.passed


def test_conformal_critical_s():
    assert conformal_critical_s(flat_ball(1.0, 1025), 0.5) == pytest.approx(math.exp(4) / 16, rel=1e-9)


def test_conformal_zero_is_identity():
    m = flat_ball(1.0, 257)
    out, rep = conformal_collar(m, 0.5, 0.0)
    assert out is m
    assert rep.ii_boundary == pytest.approx(-1.0)


def test_conformal_boundary_ii_matches_formula():
    _, rep = conformal_collar(flat_ball(1.0, 1025), 0.5, 0.05)
    assert conformal_ii_unscaled(rep) == pytest.approx(rep.ii_formula, abs=1e-7)
    assert rep.ii_formula == pytest.approx(-1.0 + 0.05 * 16 * math.exp(-4), abs=1e-9)


def test_conformal_sign_pattern_over_small_s():
    m = flat_ball(1.0, 1025)
    for s in np.linspace(0.0025, 0.05, 20):
        _, rep = conformal_collar(m, 0.5, float(s))
        assert rep.sign_pattern == (True, True, True), s
        assert rep.resolvable_points > 0


def test_conformal_ricci_derivative_signs():
    m = flat_ball(1.0, 1025)
    rad, tan = conformal_ricci_derivative(m, 0.5)
    assert np.all(rad >= 0.0) and np.all(tan >= 0.0)
    assert np.all(rad[m.r <= -0.5] == 0.0)
    # at r = 0: f'' = 160e⁻⁴ and f' = 16e⁻⁴ with w'/w = 1
    assert rad[-1] == pytest.approx(352 * math.exp(-4), rel=1e-9)
    assert tan[-1] == pytest.approx(208 * math.exp(-4), rel=1e-9)


def test_conformal_exact_ricci_is_positive_in_collar():
    m = flat_ball(1.0, 1025)
    rad, tan = conformal_ricci_exact(m, 0.5, 0.05)
    collar = (m.r > -0.5) & (m.r < 0.0)
    assert np.all(rad[collar] >= -1e-10)
    assert np.all(tan[collar] >= -1e-10)


def test_conformal_past_critical_s():
    with pytest.raises(ConformalError) as exc:
        conformal_collar(flat_ball(1.0, 257), 0.5, 4.0)
    assert exc.value.critical_s == pytest.approx(math.exp(4) / 16, rel=1e-6)
