"""Rotationally symmetric Ricci flow on the doubled three-sphere.

A state is ``h(x)²dx² + w(x)²σ`` on the fixed grid ``x ∈ [-1, 1]`` with a
pole at each end. Derivatives use three ghost points per end (``w`` odd and
``h`` even about the pole), so one set of central stencils covers every
gridpoint. With ``d/ds = h⁻¹d/dx`` the flow ``∂ₜg = -2Ric`` reads::

    ∂ₜw = w_ss - (1 - w_s²)/w        ∂ₜh = 2(w_ss/w)·h

and at a pole ``w_ss/w`` is replaced by its limit ``w_sss/w_s``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Literal

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import make_interp_spline

from .config import env
from .errors import FlowError, PreconditionError, issue
from .metrics import RadialGrid, WarpedBallMetric
from .stencils import MIN_POINTS, FloatArray, padded_d1, padded_d1_sixth, padded_d2, padded_d2_sixth, padded_d3

logger = logging.getLogger(__name__)

Mode = Literal["raw", "normalized"]
Gauge = Literal["arclength", "ricci"]

GHOST = 3
DEFAULT_CFL = 0.2
POLE_TOL = 1e-6
RUN_POLE_TOL = 1e-3
ASYMMETRY_TOL = 1e-10
DEFAULT_MAX_STEPS = 2_000_000
GRID_NOISE = 1e-7


def _frozen(a: Any) -> FloatArray:
    out = np.array(a, dtype=np.float64)
    out.flags.writeable = False
    return out


def _pad(f: FloatArray, parity: float) -> FloatArray:
    left = parity * f[GHOST:0:-1]
    right = parity * f[-2:-GHOST - 2:-1]
    return np.concatenate([left, f, right])


def _trapezoid(f: FloatArray, dx: float) -> float:
    return float(dx * (0.5 * (f[0] + f[-1]) + np.sum(f[1:-1])))


def pole_slopes(h: FloatArray, w: FloatArray, dx: float) -> tuple[float, float]:
    """``|h⁻¹∂ₓw|`` at the left and right pole; both are 1 for a smooth closed-up state."""
    wx = padded_d1_sixth(_pad(w, -1.0), dx)
    return abs(float(wx[0] / h[0])), abs(float(wx[-1] / h[-1]))


@dataclass(frozen=True, eq=False)
class FlowState:
    """``h²dx² + w²σ`` on the uniform grid ``x`` from -1 to 1 at flow time ``t``."""

    x: FloatArray
    h: FloatArray
    w: FloatArray
    t: float = 0.0
    pole_tol: float = POLE_TOL

    def __post_init__(self) -> None:
        x, h, w = _frozen(self.x), _frozen(self.h), _frozen(self.w)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "w", w)
        n = x.size
        if x.ndim != 1 or h.shape != x.shape or w.shape != x.shape:
            raise PreconditionError([issue("state", "x, h and w must share one 1-D shape", x.shape,
                                           (h.shape, w.shape))])
        if n < MIN_POINTS or n % 2 == 0:
            raise PreconditionError([issue("state.x", "flow grid needs an odd number of points",
                                           f"odd >= {MIN_POINTS}", n)])
        if x[0] != -1.0 or x[-1] != 1.0 or not np.allclose(np.diff(x), 2.0 / (n - 1), rtol=1e-9, atol=0.0):
            raise PreconditionError([issue("state.x", "flow grid must be uniform on [-1, 1]", "linspace(-1, 1)",
                                           (float(x[0]), float(x[-1])))])
        if not (np.all(np.isfinite(h)) and np.all(np.isfinite(w))):
            raise FlowError([issue("state", "non-finite samples", "finite", f"t={self.t!r}")])
        if np.any(h <= 0.0):
            raise FlowError([issue("state.h", "radial gauge degenerated", "> 0", float(np.min(h)))])
        if w[0] != 0.0 or w[-1] != 0.0:
            raise PreconditionError([issue("state.w", "state must close up at both poles",
                                           "w(±1) = 0", (float(w[0]), float(w[-1])))])
        bad = np.flatnonzero(w[1:-1] <= 0.0)
        if bad.size:
            raise FlowError([issue(f"state.w[{bad[0] + 1}]", "warp vanished inside the sphere (singularity)",
                                   "> 0", float(w[bad[0] + 1]))])
        for end, slope in zip(("x=-1", "x=1"), pole_slopes(h, w, self.dx)):
            if abs(slope - 1.0) > self.pole_tol:
                raise PreconditionError([issue(f"state.{end}", "pole is not smooth", "|dw/ds| = 1", repr(slope))])

    @property
    def n_points(self) -> int:
        return int(self.x.size)

    @property
    def dx(self) -> float:
        return 2.0 / (self.x.size - 1)

    @classmethod
    def from_metric(cls, m: WarpedBallMetric, n_points: int | None = None) -> FlowState:
        """Initial data from a smooth doubled metric, ``x = r/|r_min|``.

        When the grids nest the warp is subsampled, otherwise resampled by spline.
        """
        if not m.doubled:
            raise PreconditionError([issue("m", "flow needs a doubled metric", "doubled", "ball")])
        if m.interfaces:
            raise PreconditionError([issue("m.interfaces", "flow needs a smooth metric; smooth_c1 first",
                                           "()", m.interfaces)])
        n = m.grid.n_points if n_points is None else n_points
        half_len = -m.grid.r_min
        x = np.linspace(-1.0, 1.0, n)
        if n >= MIN_POINTS and (m.grid.n_points - 1) % (n - 1) == 0:
            w = np.array(m.warp[::(m.grid.n_points - 1) // (n - 1)])
        else:
            w = np.asarray(m.interpolant(x * half_len), dtype=np.float64)
        w[0] = w[-1] = 0.0
        return cls(x, np.full(n, half_len), w)

    @classmethod
    def round_sphere(cls, n_points: int = 257, radius: float = 1.0) -> FlowState:
        """Round S³ of the given radius: ``h = πR/2``, ``w = R·cos(πx/2)``."""
        x = np.linspace(-1.0, 1.0, n_points)
        w = radius * np.cos(0.5 * math.pi * x)
        w[0] = w[-1] = 0.0
        return cls(x, np.full(n_points, 0.5 * math.pi * radius), w)

    def arclength(self) -> FloatArray:
        """Distance from the left pole at every gridpoint."""
        spline = make_interp_spline(self.x, self.h, k=5).antiderivative()
        return np.asarray(spline(self.x) - spline(-1.0), dtype=np.float64)

    def to_metric(self, n_points: int | None = None) -> WarpedBallMetric:
        """The state as a doubled warped metric on ``[-L/2, L/2]`` by arclength."""
        s = self.arclength()
        total = float(s[-1])
        n = self.n_points if n_points is None else n_points
        s_new = np.linspace(0.0, total, n)
        w = _resample(self, s, s_new)
        w[0] = w[-1] = 0.0
        grid = RadialGrid(-0.5 * total, 0.5 * total, n)
        return WarpedBallMetric(grid, w, doubled=True, smoothness="Cinf", label=f"flow(t={self.t!r})")


def _resample(state: FlowState, s: FloatArray, s_new: FloatArray) -> FloatArray:
    h = state.h
    if float(np.ptp(h)) <= 1e-14 * float(h[0]):
        x_new = -1.0 + s_new / float(h[0])
    else:
        x_new = make_interp_spline(s, state.x, k=5)(s_new)
    x_new = np.clip(x_new, -1.0, 1.0)
    return np.asarray(make_interp_spline(state.x, state.w, k=5)(x_new), dtype=np.float64)


def resolving_points(m: WarpedBallMetric, width: float, spacings: int = 8) -> int:
    """Fewest flow gridpoints nested in the grid of ``m`` that keep ``spacings`` steps across ``width``."""
    n = m.grid.n_points
    span = m.grid.r_max - m.grid.r_min
    while (n - 1) % 4 == 0 and (n - 1) // 2 + 1 >= MIN_POINTS and 2.0 * span / (n - 1) * spacings <= width:
        n = (n - 1) // 2 + 1
    return n


# --- geometry of a state ---


@dataclass(frozen=True, eq=False)
class StateGeometry:
    """Sectional curvatures and the volume-averaged scalar curvature of a state."""

    k_mixed: FloatArray
    k_tan: FloatArray
    wx: FloatArray
    volume: float
    mean_scalar: float

    @property
    def min_ricci(self) -> float:
        return float(np.min(np.minimum(2.0 * self.k_mixed, self.k_mixed + self.k_tan)))

    @property
    def k_max(self) -> float:
        return float(max(np.max(self.k_mixed), np.max(self.k_tan)))

    @property
    def k_min(self) -> float:
        return float(min(np.min(self.k_mixed), np.min(self.k_tan)))

    @property
    def pinching(self) -> float:
        return (self.k_max - self.k_min) / (self.mean_scalar / 6.0)


def _geometry(h: FloatArray, w: FloatArray, dx: float) -> StateGeometry:
    wp = _pad(w, -1.0)
    hp = _pad(h, 1.0)
    wx = padded_d1_sixth(wp, dx)
    wxx = padded_d2_sixth(wp, dx)
    hx = padded_d1(hp, dx)
    ws = wx / h
    wss = wxx / (h * h) - wx * hx / (h * h * h)
    k_mixed = np.empty_like(w)
    k_tan = np.empty_like(w)
    inner = slice(1, -1)
    k_mixed[inner] = -wss[inner] / w[inner]
    k_tan[inner] = (1.0 - ws[inner] * ws[inner]) / (w[inner] * w[inner])
    wxxx = padded_d3(wp, dx)
    hxx = padded_d2(hp, dx)
    for end in (0, -1):
        k_mixed[end] = -(wxxx[end] / (h[end] ** 2 * wx[end]) - hxx[end] / h[end] ** 3)
        k_tan[end] = k_mixed[end]
    scalar = 2.0 * (2.0 * k_mixed + k_tan)
    density = w * w * h
    vol = _trapezoid(density, dx)
    return StateGeometry(k_mixed=k_mixed, k_tan=k_tan, wx=wx, volume=4.0 * math.pi * vol,
                         mean_scalar=_trapezoid(scalar * density, dx) / vol)


def geometry(state: FlowState) -> StateGeometry:
    return _geometry(state.h, state.w, state.dx)


def pinching(state: FlowState) -> float:
    """``(K_max - K_min)/K_avg`` over both sectional families; ``K_avg`` is the mean scalar over 6.

    Example:
        >>> pinching(FlowState.round_sphere(257)) < 1e-8
        True
    """
    return geometry(state).pinching


def asymmetry(state: FlowState) -> float:
    """Largest deviation of ``h`` and ``w`` from evenness in ``x``."""
    return float(max(np.max(np.abs(state.w - state.w[::-1])), np.max(np.abs(state.h - state.h[::-1]))))


def grid_tolerance(state: FlowState) -> float:
    """Noise floor for curvature signs on this state."""
    geo = geometry(state)
    return GRID_NOISE * max(abs(geo.k_max), abs(geo.k_min), 1e-300)


# --- time stepping ---


def _odd_antiderivative(g: FloatArray, dx: float) -> FloatArray:
    # integrated from each end towards the middle, so an even g gives an exactly odd result
    n = g.size
    mid = n // 2
    left = cumulative_trapezoid(g[:mid + 1], dx=dx, initial=0.0)
    right = -cumulative_trapezoid(g[::-1][:mid + 1], dx=dx, initial=0.0)[::-1]
    out = np.concatenate([left[:mid], [0.5 * (left[mid] + right[0])], right[1:]])
    return np.asarray(out)


def _rates(h: FloatArray, w: FloatArray, dx: float, mode: Mode, gauge: Gauge,
           geo: StateGeometry | None = None) -> tuple[FloatArray, FloatArray, StateGeometry]:
    if geo is None:
        geo = _geometry(h, w, dx)
    dw = -w * (geo.k_mixed + geo.k_tan)
    dw[0] = dw[-1] = 0.0
    growth = -2.0 * geo.k_mixed
    if mode == "normalized":
        dw = dw + (geo.mean_scalar / 3.0) * w
        growth = growth + geo.mean_scalar / 3.0
    if gauge == "arclength":
        rate = 0.5 * _trapezoid(growth, dx)
        tangential = _odd_antiderivative(rate - growth, dx)
        dw = dw + tangential * geo.wx
        dh = np.full_like(h, rate) * h
    else:
        dh = growth * h
    return dw, dh, geo


def cfl_limit(state: FlowState, cfl: float = DEFAULT_CFL) -> float:
    return cfl * (float(np.min(state.h)) * state.dx) ** 2


def _check_mode(mode: str, gauge: str) -> None:
    if mode not in ("raw", "normalized"):
        raise PreconditionError([issue("mode", "unknown flow mode", "raw | normalized", mode)])
    if gauge not in ("arclength", "ricci"):
        raise PreconditionError([issue("gauge", "unknown gauge", "arclength | ricci", gauge)])


def _heun(h: FloatArray, w: FloatArray, dx: float, dt: float, mode: Mode, gauge: Gauge,
          geo: StateGeometry | None = None) -> tuple[FloatArray, FloatArray]:
    k1w, k1h, _ = _rates(h, w, dx, mode, gauge, geo)
    w1 = w + dt * k1w
    h1 = h + dt * k1h
    if np.any(w1[1:-1] <= 0.0) or np.any(h1 <= 0.0) or not np.all(np.isfinite(w1)):
        raise FlowError([issue("flow_step", "singularity reached inside the step", "w > 0", float(np.min(w1[1:-1])))])
    k2w, k2h, _ = _rates(h1, w1, dx, mode, gauge)
    w_new = w + 0.5 * dt * (k1w + k2w)
    h_new = h + 0.5 * dt * (k1h + k2h)
    w_new[0] = w_new[-1] = 0.0
    return h_new, w_new


def _rebuilt(state: FlowState, **changes: Any) -> FlowState:
    # an integrated state that fails validation is a flow failure
    try:
        return replace(state, **changes)
    except PreconditionError as exc:
        raise FlowError(exc.issues) from None


def flow_step(state: FlowState, dt: float, mode: Mode = "raw", gauge: Gauge = "ricci",
              cfl: float = DEFAULT_CFL) -> FlowState:
    """One Heun (RK2) step of raw or volume-normalized Ricci flow.

    Volume normalization adds ``(r̄/3)·w`` and ``(r̄/3)·h`` to the rates,
    ``r̄`` being the volume-averaged scalar curvature. The ``arclength``
    gauge adds the tangential field that keeps ``h`` uniform in ``x``.

    Example:
        >>> s = flow_step(FlowState.round_sphere(65), 1e-5)
        >>> abs(float(s.w[32]) - (1 - 4e-5) ** 0.5) < 1e-9
        True
    """
    _check_mode(mode, gauge)
    limit = cfl_limit(state, cfl)
    if not 0.0 < dt <= limit * (1.0 + 1e-12):
        raise FlowError([issue("dt", "time step violates the CFL bound", f"0 < dt <= {limit!r}", dt)])
    if gauge == "arclength" and float(np.ptp(state.h)) > 1e-12 * float(np.max(state.h)):
        raise PreconditionError([issue("gauge", "arclength gauge needs uniform h", "ptp(h) = 0",
                                       float(np.ptp(state.h)))])
    h, w = _heun(np.array(state.h), np.array(state.w), state.dx, dt, mode, gauge)
    return _rebuilt(state, h=h, w=w, t=state.t + dt)


# --- runs ---


@dataclass(frozen=True)
class FlowOptions:
    mode: Mode = "normalized"
    gauge: Gauge = "arclength"
    n_points: int | None = None
    cfl: float = DEFAULT_CFL
    pinching_target: float = 0.01
    blowup_factor: float = 20.0
    t_max: float | None = None
    max_steps: int | None = None
    store_dt: float | None = None


@dataclass
class FlowTrajectory:
    """Stored states of one run with per-state diagnostics.

    ``T_est`` is only finite for raw runs; ``uniform_equivalence`` is the
    smallest ``C`` with ``C⁻¹ĝ(0) ≤ ĝ(t) ≤ C·ĝ(0)`` over stored states.
    """

    states: list[FlowState]
    diagnostics: list[dict[str, float]]
    mode: Mode
    gauge: Gauge
    termination: str
    steps: int
    T_est: float = float("nan")
    uniform_equivalence: float = float("nan")
    options: dict[str, Any] = field(default_factory=dict)

    @property
    def final(self) -> FlowState:
        return self.states[-1]

    @property
    def max_asymmetry(self) -> float:
        return max(d["asymmetry"] for d in self.diagnostics)

    @property
    def min_ricci(self) -> float:
        """Smallest min-Ricci value over every stored state, the initial one included."""
        return min(d["min_ricci"] for d in self.diagnostics)

    def manifest(self) -> dict[str, Any]:
        return {
            "mode": self.mode,
            "gauge": self.gauge,
            "termination": self.termination,
            "steps": self.steps,
            "T_est": self.T_est,
            "uniform_equivalence": self.uniform_equivalence,
            "final_t": self.final.t,
            "final_pinching": self.diagnostics[-1]["pinching"],
            "options": self.options,
        }


def _diagnostics(state: FlowState, geo: StateGeometry) -> dict[str, float]:
    return {
        "t": state.t,
        "pinching": geo.pinching,
        "asymmetry": asymmetry(state),
        "min_ricci": geo.min_ricci,
        "k_max": geo.k_max,
        "volume": geo.volume,
        "mean_scalar": geo.mean_scalar,
    }


def _estimate_singular_time(diag: list[dict[str, float]]) -> float:
    t = np.array([d["t"] for d in diag])
    inv_k = np.array([1.0 / d["k_max"] for d in diag])
    late = t >= 0.5 * t[-1]
    if int(late.sum()) < 2:
        late = np.ones_like(t, dtype=bool)
    slope, intercept = np.polyfit(t[late], inv_k[late], 1)
    if slope >= 0.0:
        return float("inf")
    return float(-intercept / slope)


def _uniform_equivalence(states: list[FlowState], mode: Mode, t_sing: float) -> float:
    first = states[0]
    inner = slice(1, -1)
    worst = 1.0
    for st in states:
        factor = 1.0
        if mode == "raw":
            if not st.t < t_sing:
                continue
            factor = t_sing / (t_sing - st.t)
        ratios = np.concatenate([
            factor * (st.w[inner] / first.w[inner]) ** 2,
            factor * (st.h / first.h) ** 2,
        ])
        worst = max(worst, float(np.max(ratios)), float(np.max(1.0 / ratios)))
    return worst


def run_flow(m: WarpedBallMetric | FlowState, opts: FlowOptions | None = None) -> FlowTrajectory:
    """Integrate from a smooth doubled metric until the stopping rule of ``opts.mode`` fires.

    Normalized runs stop at ``pinching < opts.pinching_target``. Raw runs stop
    once the largest sectional curvature has grown by ``opts.blowup_factor``
    and extrapolate the singular time from a linear fit of ``1/K_max``.
    """
    opts = opts or FlowOptions()
    _check_mode(opts.mode, opts.gauge)
    state = m if isinstance(m, FlowState) else FlowState.from_metric(m, opts.n_points)
    state = _rebuilt(state, pole_tol=RUN_POLE_TOL)
    max_steps = opts.max_steps if opts.max_steps is not None else env(
        "CAPDEFORM_FLOW_MAX_STEPS", int, DEFAULT_MAX_STEPS)
    if opts.gauge == "arclength" and float(np.ptp(state.h)) > 1e-12 * float(np.max(state.h)):
        raise PreconditionError([issue("gauge", "arclength gauge needs uniform h", "ptp(h) = 0",
                                       float(np.ptp(state.h)))])
    geo = geometry(state)
    k0 = geo.k_max
    store_dt = opts.store_dt if opts.store_dt is not None else 0.01 / max(1.0, abs(k0))
    logger.info("flow %s/%s from %s: n=%d, pinching %.4g, min Ricci %.4g",
                opts.mode, opts.gauge, getattr(m, "label", "state"), state.n_points, geo.pinching, geo.min_ricci)

    states = [state]
    diagnostics = [_diagnostics(state, geo)]
    h, w = np.array(state.h), np.array(state.w)
    t = state.t
    dx = state.dx
    next_store = t + store_dt
    steps = 0
    termination = ""
    while True:
        if opts.mode == "normalized" and geo.pinching < opts.pinching_target:
            termination = "pinched"
        elif opts.mode == "raw" and geo.k_max >= opts.blowup_factor * k0:
            termination = "blowup"
        elif opts.t_max is not None and t >= opts.t_max:
            termination = "t_max"
        if termination:
            if states[-1].t != t:
                final = _rebuilt(state, pole_tol=RUN_POLE_TOL, h=h, w=w, t=t)
                states.append(final)
                diagnostics.append(_diagnostics(final, geo))
            break
        if steps >= max_steps:
            raise FlowError([issue("max_steps", "step budget exhausted before the stopping rule",
                                   f"<= {max_steps} steps", f"t={t!r}, pinching={geo.pinching!r}")])
        dt = opts.cfl * (float(np.min(h)) * dx) ** 2
        if opts.t_max is not None:
            dt = min(dt, opts.t_max - t)
        try:
            h, w = _heun(h, w, dx, dt, opts.mode, opts.gauge, geo)
        except FlowError:
            logger.warning("flow hit a singularity at t=%g (%s mode)", t, opts.mode)
            raise
        if np.any(w[1:-1] <= 0.0):
            raise FlowError([issue("w", "warp vanished inside the sphere (singularity)", "> 0", f"t={t + dt!r}")])
        t += dt
        steps += 1
        geo = _geometry(h, w, dx)
        if t >= next_store:
            st = _rebuilt(state, pole_tol=RUN_POLE_TOL, h=h, w=w, t=t)
            states.append(st)
            diagnostics.append(_diagnostics(st, geo))
            logger.debug("t=%.6g pinching=%.6g min_ricci=%.6g k_max=%.6g",
                         t, geo.pinching, geo.min_ricci, geo.k_max)
            next_store = t + store_dt
    t_est = _estimate_singular_time(diagnostics) if opts.mode == "raw" else float("nan")
    traj = FlowTrajectory(
        states=states, diagnostics=diagnostics, mode=opts.mode, gauge=opts.gauge,
        termination=termination, steps=steps, T_est=t_est,
        uniform_equivalence=_uniform_equivalence(states, opts.mode, t_est),
        options=asdict(opts),
    )
    logger.info("flow stopped (%s) at t=%.6g after %d steps; pinching %.4g",
                termination, t, steps, diagnostics[-1]["pinching"])
    return traj


# --- back to the ball ---


def restrict_half(state: FlowState, scale: float | None = None, n_points: int | None = None,
                  tol: float = ASYMMETRY_TOL) -> WarpedBallMetric:
    """The ``x ≤ 0`` half as a ball with boundary at ``r = 0``, parametrized by arclength.

    ``scale`` multiplies distances (``1/(2√(T-t))`` turns a raw state into
    the rescaled flow). The boundary slice of an even state is totally
    geodesic.
    """
    spread = asymmetry(state)
    if spread > tol * max(1.0, float(np.max(state.w))):
        raise PreconditionError([issue("state", "state is not reflection symmetric", f"asymmetry <= {tol}", spread)])
    if scale is not None and not scale > 0.0:
        raise PreconditionError([issue("scale", "scale must be positive", "> 0", scale)])
    c = 1.0 if scale is None else scale
    s = state.arclength()
    mid = state.n_points // 2
    half_len = float(s[mid])
    n = mid + 1 if n_points is None else n_points
    s_new = np.linspace(0.0, half_len, n)
    w = _resample(state, s, s_new) * c
    w[0] = 0.0
    grid = RadialGrid(-half_len * c, 0.0, n)
    return WarpedBallMetric(grid, w, label=f"flow_half(t={state.t!r})")
