"""Property-based checks of curvature scaling, shifts, verdicts, parity and schedules."""

import math

import numpy as np
from hypothesis import HealthCheck, given, settings, strategies as hyp_st

from capdeform.curvature import warped_curvature
from capdeform.deform import delta_schedule, shift
from capdeform.flow import FlowState, asymmetry, flow_step
from capdeform.metrics import SymmetricForm, flat_ball, from_samples, relative_eigen_range, round_cap
from capdeform.pipeline import check_membership

SLOW = settings(
    suppress_health_check=(HealthCheck.too_slow, HealthCheck.data_too_large),
    deadline=None,
    max_examples=25,
)

BALLS = [flat_ball(1.0, 129), round_cap(0.5, 129), round_cap(1.0, 129), round_cap(math.pi / 2, 129)]


@SLOW
@given(hyp_st.data())
def test_curvature_scales_inverse_square(data):
    a = data.draw(hyp_st.floats(0.3, 1.5), label="a")
    lam = data.draw(hyp_st.floats(0.5, 4.0), label="lam")
    m = round_cap(a, 129)
    scaled = from_samples(lam * m.r, lam * m.warp)
    f, fs = warped_curvature(m), warped_curvature(scaled)
    np.testing.assert_allclose(lam ** 2 * fs.k_mixed, f.k_mixed, atol=1e-8)
    np.testing.assert_allclose(lam ** 2 * fs.k_tan, f.k_tan, atol=1e-8)


@SLOW
@given(hyp_st.data())
def test_shifts_compose(data):
    a = data.draw(hyp_st.floats(0.0, 0.3), label="a")
    b = data.draw(hyp_st.floats(0.0, 0.3), label="b")
    m = round_cap(1.0, 257)
    np.testing.assert_allclose(shift(shift(m, a), b).warp, shift(m, a + b).warp, atol=1e-8)


@SLOW
@given(hyp_st.data())
def test_class_c_verdict_is_monotone_in_tolerance(data):
    m = data.draw(hyp_st.sampled_from(BALLS), label="m")
    lo = data.draw(hyp_st.floats(0.0, 1.0), label="lo")
    hi = data.draw(hyp_st.floats(lo, 2.0), label="hi")
    if check_membership(m, "C", hi).passed:
        assert check_membership(m, "C", lo).passed


@SLOW
@given(hyp_st.data())
def test_flow_step_keeps_even_data_even(data):
    amp = data.draw(hyp_st.floats(-0.2, 0.2), label="amp")
    n = data.draw(hyp_st.sampled_from([33, 65, 129]), label="n")
    x = np.linspace(-1.0, 1.0, n)
    c = np.cos(0.5 * math.pi * x)
    w = c * (1.0 + amp * c ** 2)
    w[0] = w[-1] = 0.0
    state = FlowState(x, np.full(n, 0.5 * math.pi), w)
    dt = 0.5 * 0.2 * (0.5 * math.pi * state.dx) ** 2
    assert asymmetry(flow_step(state, dt)) < 1e-12


@settings(deadline=None)
@given(hyp_st.data())
def test_delta_schedule_is_monotone(data):
    delta0 = data.draw(hyp_st.floats(1e-4, 1.0), label="delta0")
    delta1 = data.draw(hyp_st.floats(0.01, 0.49), label="delta1")
    s = data.draw(hyp_st.floats(0.0, 1.0), label="s")
    t = data.draw(hyp_st.floats(s, 1.0), label="t")
    lo, hi = delta_schedule(s, delta0, delta1), delta_schedule(t, delta0, delta1)
    assert 0.0 <= lo <= hi * (1 + 1e-12)
    assert hi <= delta0 * (1 + 1e-12)


@settings(deadline=None)
@given(hyp_st.data())
def test_relative_eigenvalues_of_multiple(data):
    k = data.draw(hyp_st.floats(-5.0, 5.0), label="k")
    g = np.diag([data.draw(hyp_st.floats(0.1, 10.0), label="g0"), data.draw(hyp_st.floats(0.1, 10.0), label="g1")])
    lo, hi = relative_eigen_range(SymmetricForm(k * g, "chart"), SymmetricForm(g, "chart"))
    assert math.isclose(lo, k, abs_tol=1e-12) and math.isclose(hi, k, abs_tol=1e-12)
