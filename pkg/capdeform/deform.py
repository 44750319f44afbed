"""Metric deformations: shifts, doubling, quadratic gluing, smoothing, perturbation, conformal collars.

All operations take immutable metrics and return new ones. Warped metrics
are manipulated through ``q = w²``, the coefficient of the round metric in
the slice metric ``g_r = q·σ``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import make_interp_spline

from .curvature import band_curvature, warped_curvature
from .errors import ConformalError, PreconditionError, SmoothingError, issue
from .metrics import (
    BandMetric,
    RadialGrid,
    SymmetricForm,
    WarpedBallMetric,
    piecewise_spline,
)
from .stencils import FloatArray, d1

logger = logging.getLogger(__name__)

GEODESIC_TOL = 1e-6
RESOLVE_FLOOR = 1e-7
_FINE = 4001
_GL_NODES = 40


def _require(ok: bool, path: str, message: str, expected: Any, got: Any) -> None:
    if not ok:
        raise PreconditionError([issue(path, message, expected, got)])


def _smooth_step(t: FloatArray) -> FloatArray:
    """C∞ step: 0 for t ≤ 0, 1 for t ≥ 1."""
    t = np.clip(np.asarray(t, dtype=np.float64), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0.0, np.exp(-1.0 / np.where(t > 0.0, t, 1.0)), 0.0)
        b = np.where(t < 1.0, np.exp(-1.0 / np.where(t < 1.0, 1.0 - t, 1.0)), 0.0)
    return np.asarray(a / (a + b))


# --- shifts and doubling ---


def shift(m: WarpedBallMetric, eps: float) -> WarpedBallMetric:
    """Restrict to ``r ≤ -eps`` and translate the new boundary to ``r = 0``.

    Example:
        >>> from capdeform.metrics import flat_ball
        >>> round(float(shift(flat_ball(1.0, 257), 0.1).warp[-1]), 12)
        0.9
    """
    _require(not m.doubled, "m", "shift needs a ball, not a doubled metric", "ball", "doubled")
    _require(0.0 <= eps < abs(m.grid.r_min), "eps", "shift outside the radial interval",
             f"0 <= eps < {abs(m.grid.r_min)}", eps)
    if eps == 0.0:
        return m
    grid = RadialGrid(m.grid.r_min + eps, 0.0, m.grid.n_points)
    w = np.asarray(m.interpolant(grid.r - eps))
    w[0] = m.warp[0]
    kept = tuple(x + eps for x in m.interfaces if grid.r_min < x + eps < 0.0)
    return WarpedBallMetric(grid, w, interfaces=kept, label=f"shift({m.label},{eps!r})")


def _odd_derivatives(m: WarpedBallMetric) -> tuple[float, float]:
    w = m.warp
    h = m.spacing
    w1 = d1(w, h)
    w3 = d1(d1(w1, h), h)
    return float(w1[-1]), float(w3[-1])


def double(m: WarpedBallMetric) -> WarpedBallMetric:
    """Reflect across the boundary: ``w(r) := w(-r)`` for ``r > 0``.

    The smoothness class at the equator is read from the odd derivatives of
    ``w`` at ``r = 0``: C⁰ when ``w' ≠ 0``, C² when only ``w''' ≠ 0``, C∞ otherwise.
    """
    _require(not m.doubled, "m", "metric is already doubled", "ball", "doubled")
    _require(abs(m.grid.r_max) < 1e-12, "grid", "boundary must sit at r = 0", 0.0, m.grid.r_max)
    w1, w3 = _odd_derivatives(m)
    scale = float(np.max(m.warp))
    if abs(w1) > GEODESIC_TOL:
        smoothness = "C0"
    elif abs(w3) > 1e-4 * max(1.0, scale):
        smoothness = "C2"
    else:
        smoothness = "Cinf"
    n = m.grid.n_points
    grid = RadialGrid(m.grid.r_min, -m.grid.r_min, 2 * n - 1)
    warp = np.concatenate([m.warp, m.warp[-2::-1]])
    interfaces = sorted({*m.interfaces, *(-x for x in m.interfaces)}
                        | ({0.0} if smoothness != "Cinf" else set()))
    logger.debug("double %s: w'(0)=%.3e w'''(0)=%.3e -> %s", m.label, w1, w3, smoothness)
    return WarpedBallMetric(grid, warp, doubled=True, interfaces=tuple(interfaces),
                            smoothness=smoothness, label=f"double({m.label})")


# --- gluing ---


@dataclass
class GlueDiagnostics:
    """Everything measured while gluing in the quadratic band."""

    rho: float
    b: SymmetricForm
    c: SymmetricForm
    Lambda: float
    eqper_margin: float
    ricci_min_interior: float
    c_const: float
    C_const: float
    c1_mismatch: float = 0.0
    ricci_radial_center: float = float("nan")

    def to_dict(self) -> dict[str, Any]:
        out = {k: v for k, v in asdict(self).items() if k not in ("b", "c")}
        out["b"] = np.asarray(self.b.values).tolist()
        out["c"] = np.asarray(self.c.values).tolist()
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _half_splines(r: FloatArray, q: FloatArray, rho: float) -> tuple[Any, Any]:
    # quintic splines of q on the ambient piece (r ≤ -rho) and on [-rho, 0]
    left = r <= -rho + 1e-12
    band = (r >= -rho - 1e-12) & (r <= 1e-12)
    return make_interp_spline(r[left], q[left], k=5), make_interp_spline(r[band], q[band], k=5)


def _half(m: WarpedBallMetric) -> tuple[FloatArray, FloatArray]:
    mid = (m.grid.n_points - 1) // 2
    return m.r[:mid + 1], m.warp[:mid + 1]


def _band_constants(k_mixed: FloatArray, ric_tt: FloatArray, lam: float, rho: float) -> tuple[float, float]:
    c_const = float(np.min(k_mixed)) * rho / lam
    C_const = max(0.0, float(np.max(c_const * lam / rho - ric_tt))) / rho ** 2
    return c_const, C_const


def glue_interpolate(m_doubled: WarpedBallMetric, rho: float,
                     lam: float | None = None) -> tuple[WarpedBallMetric, GlueDiagnostics]:
    """Replace ``q`` on ``[-rho, rho]`` by ``b·r² + c`` matching to first order at ``±rho``.

    ``b = -q'(-rho)/(2 rho)`` and ``c = q(-rho) + rho·q'(-rho)/2``. ``lam``
    defaults to half the relative eigenvalue of ``q'`` at ``-rho``; a smaller
    positive value may be passed to test the inequality at a weaker constant.
    """
    _require(m_doubled.doubled, "m", "gluing needs a doubled metric", "doubled", "ball")
    _require(0.0 < rho < 0.5 * abs(m_doubled.grid.r_min), "rho", "band half-width out of range",
             f"0 < rho < {0.5 * abs(m_doubled.grid.r_min)}", rho)
    _require(rho >= 8 * m_doubled.spacing, "rho", "band is unresolved on this grid",
             f">= {8 * m_doubled.spacing}", rho)
    r_half, w_half = _half(m_doubled)
    q_half = w_half ** 2
    ambient = make_interp_spline(r_half, q_half, k=5)
    q0 = float(ambient(-rho))
    dq0 = float(ambient(-rho, 1))
    in_band = (r_half >= -rho) & (r_half < 0.0)
    dq_band = d1(q_half, m_doubled.spacing)[in_band]
    if dq0 <= 0.0 or np.any(dq_band <= 0.0):
        raise PreconditionError([issue("rho", "slices in the band are not strictly convex (b not negative definite)",
                                       "q' > 0 on [-rho, 0)", repr(min(dq0, float(np.min(dq_band)))))])
    b = -dq0 / (2.0 * rho)
    c = q0 + rho * dq0 / 2.0
    lam_max = 0.5 * dq0 / q0
    if lam is None:
        lam = lam_max
    _require(0.0 < lam <= lam_max * (1 + 1e-12), "lam", "Lambda must be positive and at most half the relative eigenvalue",
             f"0 < lam <= {lam_max}", lam)

    r = m_doubled.r
    band = np.abs(r) <= rho
    q = m_doubled.warp ** 2
    q_glued = np.where(band, b * r ** 2 + c, q)
    margin = float(np.min(-2.0 * b - (lam / rho) * (b * r[band] ** 2 + c)))
    if margin <= 0.0:
        raise PreconditionError([issue("rho", "second-derivative inequality violated in the band",
                                       "margin > 0", repr(margin))])
    mismatch = max(abs(b * rho ** 2 + c - q0), abs(-2.0 * b * rho - dq0))

    kept = tuple(x for x in m_doubled.interfaces if abs(x) > rho)
    glued = WarpedBallMetric(m_doubled.grid, np.sqrt(q_glued), doubled=True,
                             interfaces=tuple(sorted({*kept, -rho, rho})), smoothness="C1",
                             label=f"glue({m_doubled.label},{rho!r})")
    field_ = warped_curvature(glued)
    h = m_doubled.spacing
    interior = np.abs(r) < rho - 3 * h
    ric_min = float(np.min(field_.min_ricci[interior]))
    c_const, C_const = _band_constants(field_.k_mixed[interior], field_.ricci_tangential[interior], lam, rho)
    center = int(np.argmin(np.abs(r)))
    diag = GlueDiagnostics(
        rho=rho, b=SymmetricForm(np.float64(b)), c=SymmetricForm(np.float64(c)), Lambda=lam,
        eqper_margin=margin, ricci_min_interior=ric_min, c_const=c_const, C_const=C_const,
        c1_mismatch=mismatch, ricci_radial_center=float(field_.ricci_radial[center]),
    )
    logger.info("glued %s at rho=%g: Lambda=%.6g margin=%.6g min Ric=%.6g",
                m_doubled.label, rho, lam, margin, ric_min)
    return glued, diag


def _sym(a: FloatArray) -> FloatArray:
    return np.asarray(0.5 * (a + np.swapaxes(a, -1, -2)))


def glue_band(m: BandMetric, rho: float, lam: float | None = None) -> tuple[BandMetric, GlueDiagnostics]:
    """Reflect a band with boundary at ``r = 0`` and glue in ``b·r² + c`` per chart point."""
    _require(abs(m.grid.r_max) < 1e-12, "grid", "band boundary must sit at r = 0", 0.0, m.grid.r_max)
    _require(0.0 < rho < 0.5 * abs(m.grid.r_min), "rho", "band half-width out of range",
             f"0 < rho < {0.5 * abs(m.grid.r_min)}", rho)
    g = m.components
    r = m.grid.r
    spline = make_interp_spline(r, g, k=5, axis=0)
    q0 = _sym(spline(-rho))
    dq0 = _sym(spline(-rho, 1))
    b = -dq0 / (2.0 * rho)
    c = q0 + rho * dq0 / 2.0
    if np.any(np.linalg.eigvalsh(b)[..., -1] >= 0.0):
        raise PreconditionError([issue("rho", "b is not negative definite", "b < 0", "indefinite")])
    dg = d1(g, m.grid.spacing)
    chol_inv = np.linalg.inv(np.linalg.cholesky(g))
    rel = np.linalg.eigvalsh(chol_inv @ dg @ np.swapaxes(chol_inv, -1, -2))
    if np.any(rel[r >= -rho][..., 0] <= 0.0):
        raise PreconditionError([issue("rho", "slices in the band are not strictly convex", "g' > 0", "indefinite")])
    inv0 = np.linalg.inv(np.linalg.cholesky(q0))
    lam_max = 0.5 * float(np.min(np.linalg.eigvalsh(inv0 @ dq0 @ np.swapaxes(inv0, -1, -2))))
    if lam is None:
        lam = lam_max
    _require(0.0 < lam <= lam_max * (1 + 1e-12), "lam", "Lambda must be positive and at most half the relative eigenvalue",
             f"0 < lam <= {lam_max}", lam)

    n = m.grid.n_points
    grid = RadialGrid(m.grid.r_min, -m.grid.r_min, 2 * n - 1)
    full = np.concatenate([g, g[-2::-1]], axis=0)
    rr = grid.r
    band = np.abs(rr) <= rho
    quad = b[None] * (rr[band] ** 2)[:, None, None, None, None] + c[None]
    full[band] = quad
    full = _sym(full)
    slack = -2.0 * b[None] - (lam / rho) * quad
    margin = float(np.min(np.linalg.eigvalsh(slack)))
    if margin <= 0.0:
        raise PreconditionError([issue("rho", "second-derivative inequality violated in the band",
                                       "margin > 0", repr(margin))])
    mismatch = float(max(np.max(np.abs(b * rho ** 2 + c - q0)), np.max(np.abs(-2.0 * b * rho - dq0))))
    glued = BandMetric(grid, full, interfaces=(-rho, rho), label=f"glue({m.label},{rho!r})")
    field_ = band_curvature(glued)
    interior = np.abs(rr) < rho - 3 * grid.spacing
    ric_min = float(np.min(field_.min_ricci[interior]))
    c_const, C_const = _band_constants(field_.k_mixed[interior], field_.ricci_tangential[interior], lam, rho)
    center = int(np.argmin(np.abs(rr)))
    diag = GlueDiagnostics(
        rho=rho, b=SymmetricForm(b, "chart"), c=SymmetricForm(c, "chart"), Lambda=lam,
        eqper_margin=margin, ricci_min_interior=ric_min, c_const=c_const, C_const=C_const,
        c1_mismatch=mismatch, ricci_radial_center=float(np.min(field_.ricci_radial[center])),
    )
    logger.info("glued band %s at rho=%g: margin=%.6g min Ric=%.6g", m.label, rho, margin, ric_min)
    return glued, diag


@dataclass
class EquidistantReport:
    outside_match: float
    min_convexity: float
    boundary_ii: float

    @property
    def passed(self) -> bool:
        return self.outside_match < 1e-12 and self.min_convexity > 0.0 and abs(self.boundary_ii) < 1e-8


def equidistant_check(original: WarpedBallMetric, glued: WarpedBallMetric, rho: float) -> EquidistantReport:
    """Slices outside the band are untouched; slices in ``[-rho, 0)`` stay strictly convex.

    ``min_convexity`` is the smallest ``w'/w`` (the relative eigenvalue of
    ``-II``) over ``[-rho, 0)``; ``boundary_ii`` is II at the equator.
    """
    _require(original.grid == glued.grid, "grid", "metrics must share a grid", original.grid, glued.grid)
    r = glued.r
    outside = np.abs(r) > rho
    match = float(np.max(np.abs(glued.warp[outside] - original.warp[outside]))) if np.any(outside) else 0.0
    w1 = d1(glued.warp, glued.spacing)
    slab = (r >= -rho) & (r < -0.5 * glued.spacing)
    conv = float(np.min(w1[slab] / glued.warp[slab]))
    center = glued.grid.index_of(0.0)
    return EquidistantReport(outside_match=match, min_convexity=conv,
                             boundary_ii=float(-glued.warp[center] * w1[center]))


# --- smoothing ---


@dataclass
class SmoothingReport:
    delta_m: float
    rho: float
    min_ricci_band: float
    min_ricci_global: float
    sup_deviation: float
    tol: float
    attempts: list[dict[str, float]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.min_ricci_band > 0.0 and self.min_ricci_global >= -self.tol


_KERNEL_POWER = 8
_KERNEL_Z: float | None = None


def _kernel(u: FloatArray) -> FloatArray:
    """``(1 - u²)^8`` on ``|u| < 1``: C⁷, so mollified metrics are C¹⁰."""
    return np.where(np.abs(u) < 1.0, (1.0 - u * u) ** _KERNEL_POWER, 0.0)


def _kernel_mass() -> float:
    global _KERNEL_Z
    if _KERNEL_Z is None:
        x, wts = leggauss(_GL_NODES)
        _KERNEL_Z = float(np.sum(wts * _kernel(x)))
    return _KERNEL_Z


def _mollified_second_derivative(r: FloatArray, q2: Any, rho: float, delta: float) -> FloatArray:
    """``∫ K_δ(t) q''(r - t) dt`` with the quadrature split where ``r - t`` meets ``-rho``."""
    x, wts = leggauss(_GL_NODES)
    split = np.clip(r + rho, -delta, delta)
    total = np.zeros_like(r)
    for a, b in ((np.full_like(r, -delta), split), (split, np.full_like(r, delta))):
        half = 0.5 * (b - a)
        t = a[:, None] + half[:, None] * (x[None, :] + 1.0)
        vals = _kernel(t / delta) * q2(r[:, None] - t)
        total += half * (vals @ wts)
    return total / (delta * _kernel_mass())


def _collar_correction(r_half: FloatArray, q_half: FloatArray, rho: float,
                       delta: float) -> tuple[FloatArray, FloatArray]:
    """Correction ``E`` on the half grid and the exact minimum Ricci entry inside its zone.

    The second array is NaN outside ``|r + rho| < 2·delta``. Inside it is
    computed from ``q + E`` and its first two derivatives directly, since
    five-point stencils misjudge the sign of curvature where the mollified
    tail meets a flat region.
    """
    left_spline, band_spline = _half_splines(r_half, q_half, rho)

    def q_nu(x: FloatArray, nu: int) -> FloatArray:
        return np.where(x <= -rho, left_spline(x, nu), band_spline(x, nu))

    def q2(x: FloatArray) -> FloatArray:
        return q_nu(x, 2)

    rl = np.linspace(-rho - 2 * delta, -rho, _FINE)
    rr = np.linspace(-rho, -rho + 2 * delta, _FINE)

    def chi(x: FloatArray) -> FloatArray:
        return 1.0 - _smooth_step((np.abs(x + rho) - delta) / delta)

    e2_l = chi(rl) * (_mollified_second_derivative(rl, q2, rho, delta) - left_spline(rl, 2))
    e2_r = chi(rr) * (_mollified_second_derivative(rr, q2, rho, delta) - band_spline(rr, 2))
    e1_l = cumulative_trapezoid(e2_l, rl, initial=0.0)
    e0_l = cumulative_trapezoid(e1_l, rl, initial=0.0)
    e1_r = e1_l[-1] + cumulative_trapezoid(e2_r, rr, initial=0.0)
    e0_r = e0_l[-1] + cumulative_trapezoid(e1_r, rr, initial=0.0)
    end = rr[-1]
    psi = _smooth_step((rr - (-rho + delta)) / delta)
    e0_r = e0_r - psi * (e0_r[-1] + e1_r[-1] * (rr - end))
    fine_r = np.concatenate([rl, rr[1:]])
    fine_e = np.concatenate([e0_l, e0_r[1:]])
    spline = piecewise_spline(fine_r, fine_e, (-rho,))
    out = np.zeros_like(r_half)
    exact = np.full_like(r_half, np.nan)
    zone = (r_half > rl[0]) & (r_half < end)
    rz = r_half[zone]
    out[zone] = spline(rz)
    q0 = q_nu(rz, 0) + out[zone]
    q1 = q_nu(rz, 1) + spline(rz, 1)
    qq = q_nu(rz, 2) + spline(rz, 2)
    k_mixed = (q1 * q1 / (4.0 * q0) - 0.5 * qq) / q0
    k_tan = (1.0 - q1 * q1 / (4.0 * q0)) / q0
    exact[zone] = np.minimum(2.0 * k_mixed, k_mixed + k_tan)
    return out, exact


def _smooth_once(m: WarpedBallMetric, rho: float, delta: float) -> tuple[WarpedBallMetric, FloatArray]:
    r_half, w_half = _half(m)
    q_half = w_half ** 2
    correction, exact = _collar_correction(r_half, q_half, rho, delta)
    q_s = q_half + correction
    if np.any(q_s[1:] <= 0.0):
        raise SmoothingError([issue("delta_m", "smoothing produced a degenerate slice", "q > 0", delta)])
    w_s = np.sqrt(q_s)
    w_s[0] = w_half[0]
    full = np.concatenate([w_s, w_s[-2::-1]])
    kept = tuple(x for x in m.interfaces if abs(abs(x) - rho) > 1e-12 and x != 0.0)
    out = WarpedBallMetric(m.grid, full, doubled=True, interfaces=kept,
                           smoothness="C10" if not kept else "C1",
                           label=f"smooth({m.label},{delta!r})")
    return out, np.concatenate([exact, exact[-2::-1]])


def smooth_c1(m_glued: WarpedBallMetric, delta_m: float, rho: float | None = None,
              tol: float = 1e-7, search: bool = True) -> tuple[WarpedBallMetric, SmoothingReport]:
    """Mollify the C¹ interfaces at ``±rho`` and restore a smooth doubled metric.

    The second derivative of ``q`` is mollified with a compactly supported
    kernel of half-width ``delta_m`` near ``-rho`` and integrated twice; a
    cutoff correction makes the result agree with the input outside
    ``|r + rho| < 2·delta_m``. The right half is the mirror image.

    Positivity means Ricci > 0 on ``|r| ≤ rho`` and ≥ ``-tol`` everywhere;
    when it fails ``delta_m`` is halved down to ``8·spacing``.
    """
    _require(m_glued.doubled, "m", "smoothing needs a doubled metric", "doubled", "ball")
    if rho is None:
        pos = [x for x in m_glued.interfaces if x > 0.0]
        _require(len(pos) == 1, "rho", "cannot infer the band half-width from the interfaces",
                 "one interface pair", m_glued.interfaces)
        rho = pos[0]
    _require(delta_m > 0.0 and delta_m <= rho / 4 * (1 + 1e-12), "delta_m", "mollifier width out of range",
             f"0 < delta_m <= {rho / 4}", delta_m)
    floor = 8 * m_glued.spacing
    attempts: list[dict[str, float]] = []
    delta = delta_m
    while True:
        if delta < floor:
            raise SmoothingError([issue("delta_m", "no mollifier width keeps Ricci positive; grid too coarse",
                                        f"[{floor}, {rho / 4}]", delta_m)])
        out, exact = _smooth_once(m_glued, rho, delta)
        field_ = warped_curvature(out)
        mr = np.where(np.isnan(exact), field_.min_ricci, exact)
        band = np.abs(out.r) <= rho
        min_band = float(np.min(mr[band]))
        min_global = float(np.min(mr[field_.smooth]))
        attempts.append({"delta_m": delta, "min_ricci_band": min_band, "min_ricci_global": min_global})
        logger.debug("smooth_c1 delta=%g: band %.6g global %.6g", delta, min_band, min_global)
        if (min_band > 0.0 and min_global >= -tol) or not search:
            break
        delta /= 2.0
    report = SmoothingReport(
        delta_m=delta, rho=rho, min_ricci_band=min_band, min_ricci_global=min_global,
        sup_deviation=float(np.max(np.abs(out.warp - m_glued.warp))), tol=tol, attempts=attempts,
    )
    logger.info("smoothed %s with delta_m=%g (%d attempt(s))", m_glued.label, delta, len(attempts))
    return out, report


# --- boundary perturbation ---


@dataclass(frozen=True)
class BumpFunction:
    """``β(r) = (r/r0)·exp(1/((r/r0)² - 1))`` on ``(-r0, r0)``, zero outside."""

    r0: float
    amplitude: float = 1.0

    def __post_init__(self) -> None:
        _require(self.r0 > 0.0, "r0", "support half-width must be positive", "> 0", self.r0)

    def __call__(self, r: Any, nu: int = 0) -> FloatArray:
        u = np.asarray(r, dtype=np.float64) / self.r0
        inside = np.abs(u) < 1.0
        us = np.where(inside, u, 0.0)
        den = us * us - 1.0
        e = np.where(inside, np.exp(1.0 / den), 0.0)
        if nu == 0:
            out = us * e
        elif nu == 1:
            out = e * (1.0 - 2.0 * us * us / den ** 2) / self.r0
        elif nu == 2:
            p = 1.0 - 2.0 * us * us / den ** 2
            dp = 4.0 * us * (us * us + 1.0) / den ** 3
            out = e * (-2.0 * us / den ** 2 * p + dp) / self.r0 ** 2
        else:
            raise PreconditionError([issue("nu", "only derivatives up to order 2", "0 | 1 | 2", nu)])
        return np.asarray(self.amplitude * np.where(inside, out, 0.0))

    def c2_norm(self, samples: int = 4001) -> float:
        r = np.linspace(-self.r0, self.r0, samples)
        return float(max(np.max(np.abs(self(r, k))) for k in range(3)))


@dataclass
class PerturbReport:
    eta: float
    r0: float
    ii_boundary: float
    min_ricci: float
    c2_norm: float
    attempts: int = 1


def _perturbed(base: WarpedBallMetric, eta: float, bump: BumpFunction) -> WarpedBallMetric:
    factor = 1.0 + eta * bump(base.r)
    if np.any(factor <= 0.0):
        raise PreconditionError([issue("eta", "perturbation makes the slice metric degenerate",
                                       "1 + eta*beta > 0", repr(float(np.min(factor))))])
    return WarpedBallMetric(base.grid, base.warp * np.sqrt(factor), label=f"perturb({base.label},{eta!r})")


def _check_geodesic(base: WarpedBallMetric) -> None:
    _require(not base.doubled, "base", "perturbation needs a ball", "ball", "doubled")
    w1 = float(d1(base.warp, base.spacing)[-1])
    _require(abs(w1) <= GEODESIC_TOL * max(1.0, float(base.warp[-1])), "base",
             "boundary is not totally geodesic", "II(0) = 0", repr(w1))


def boundary_perturb(base: WarpedBallMetric, eta: float, r0: float, *, ensure_positive: bool = False,
                     tol: float = 0.0, max_halvings: int = 30) -> tuple[WarpedBallMetric, PerturbReport]:
    """Slice metric ``(1 + η β(r))·g_r``; the boundary becomes strictly convex.

    ``II(0) = -½ η β'(0) q(0)``. With ``ensure_positive`` the amplitude is
    halved until the minimum Ricci eigenvalue exceeds ``tol``.
    """
    _check_geodesic(base)
    _require(eta >= 0.0, "eta", "amplitude must be non-negative", ">= 0", eta)
    _require(0.0 < r0 < abs(base.grid.r_min), "r0", "bump support leaves the ball",
             f"0 < r0 < {abs(base.grid.r_min)}", r0)
    bump = BumpFunction(r0)
    if eta == 0.0:
        field_ = warped_curvature(base)
        return base, PerturbReport(0.0, r0, float(-base.warp[-1] * d1(base.warp, base.spacing)[-1]),
                                   field_.min_ricci_eig, 0.0)
    attempts = 0
    while True:
        attempts += 1
        out = _perturbed(base, eta, bump)
        min_ric = warped_curvature(out).min_ricci_eig
        if not ensure_positive or min_ric > tol:
            break
        if attempts > max_halvings:
            raise PreconditionError([issue("eta", "no amplitude keeps Ricci positive", f"> {tol}", repr(min_ric))])
        logger.debug("boundary_perturb eta=%g: min Ric %.6g, halving", eta, min_ric)
        eta /= 2.0
    ii0 = -0.5 * eta * float(bump(0.0, 1)) * float(base.warp[-1] ** 2)
    report = PerturbReport(eta=eta, r0=r0, ii_boundary=ii0, min_ricci=min_ric,
                           c2_norm=eta * bump.c2_norm(), attempts=attempts)
    return out, report


def scaled_perturb_path(base: WarpedBallMetric, eta: float, r0: float, s: float) -> WarpedBallMetric:
    """``(1 + (1 - s)·η β(r))·g_r``: the perturbation switched off as ``s`` goes to 1."""
    _require(0.0 <= s <= 1.0, "s", "path parameter outside [0, 1]", "[0, 1]", s)
    if s == 1.0:
        _check_geodesic(base)
        return base
    out, _ = boundary_perturb(base, (1.0 - s) * eta, r0)
    return out


def delta_schedule(s: float, delta0: float, delta1: float) -> float:
    """Shift amount along the perturbed path: 0, then a linear ramp, then ``delta0``.

    Example:
        >>> delta_schedule(1.0, 0.05, 0.1)
        0.05
    """
    _require(0.0 <= s <= 1.0, "s", "path parameter outside [0, 1]", "[0, 1]", s)
    _require(0.0 < delta1 < 0.5, "delta1", "ramp width outside (0, 1/2)", "(0, 0.5)", delta1)
    _require(delta0 > 0.0, "delta0", "shift amount must be positive", "> 0", delta0)
    if s < 1.0 - 2.0 * delta1:
        return 0.0
    if s < 1.0 - delta1:
        return (s - (1.0 - 2.0 * delta1)) / delta1 * delta0
    return delta0


# --- collar function and conformal deformation ---


@dataclass(frozen=True)
class CollarFunction:
    """``f(r) = exp(-1/(r + ε)²)`` for ``r > -ε``, zero otherwise."""

    epsilon: float

    def __post_init__(self) -> None:
        _require(0.0 < self.epsilon <= 0.5, "eps", "collar width outside (0, 0.5]", "(0, 0.5]", self.epsilon)

    def _x(self, r: Any) -> tuple[FloatArray, FloatArray]:
        x = np.asarray(r, dtype=np.float64) + self.epsilon
        inside = x > 0.0
        return np.where(inside, x, 1.0), inside

    def f(self, r: Any) -> FloatArray:
        x, inside = self._x(r)
        return np.where(inside, np.exp(-1.0 / (x * x)), 0.0)

    def df(self, r: Any) -> FloatArray:
        x, inside = self._x(r)
        return np.where(inside, 2.0 * self.f(r) / x ** 3, 0.0)

    def d2f(self, r: Any) -> FloatArray:
        x, inside = self._x(r)
        return np.where(inside, self.f(r) * (4.0 - 6.0 * x * x) / x ** 6, 0.0)

    def ratios(self, r: Any) -> tuple[FloatArray, FloatArray]:
        """``f'/f`` and ``f''/f``; finite where ``f`` itself underflows."""
        x, inside = self._x(r)
        return (np.where(inside, 2.0 / x ** 3, 0.0),
                np.where(inside, (4.0 - 6.0 * x * x) / x ** 6, 0.0))


def collar_function(eps: float) -> CollarFunction:
    return CollarFunction(eps)


@dataclass
class CollarCheck:
    min_hessian: float
    min_laplacian: float
    min_laplacian_ratio: float
    min_hessian_ratio: float

    @property
    def passed(self) -> bool:
        return self.min_hessian >= -1e-10 and self.min_laplacian > 0.0 and self.min_laplacian_ratio > 0.0


def _collar_terms(m: WarpedBallMetric, eps: float) -> tuple[FloatArray, FloatArray]:
    _require(not m.doubled, "m", "collar needs a ball", "ball", "doubled")
    _require(eps < abs(m.grid.r_min), "eps", "collar leaves the ball", f"< {abs(m.grid.r_min)}", eps)
    w1 = d1(m.warp, m.spacing)
    collar = m.r > -eps
    with np.errstate(divide="ignore", invalid="ignore"):
        conv = np.where(m.warp > 0.0, w1 / m.warp, 0.0)
    if np.any(conv[collar] <= 0.0):
        bad = float(m.r[collar][np.argmin(conv[collar])])
        raise PreconditionError([issue("m", "collar slices are not strictly convex", "w'/w > 0", f"r = {bad!r}")])
    return conv, collar


def hessian_laplacian_check(m: WarpedBallMetric, eps: float) -> CollarCheck:
    """Minimum eigenvalue of ``Hess f`` on M and minimum of ``Δf`` on the collar.

    ``Hess f`` has eigenvalues ``f''`` (radial) and ``f'·w'/w`` (tangential);
    ``Δf = f'' + 2(w'/w)f'``. Ratios divided by ``f`` certify the signs where
    ``f`` underflows.
    """
    cf = CollarFunction(eps)
    conv, collar = _collar_terms(m, eps)
    r = m.r
    f, f1, f2 = cf.f(r), cf.df(r), cf.d2f(r)
    hess = np.minimum(f2, f1 * conv)
    lap = f2 + 2.0 * conv * f1
    q1, q2 = cf.ratios(r)
    lap_ratio = q2 + 2.0 * conv * q1
    hess_ratio = np.minimum(q2, q1 * conv)
    representable = collar & (f > 0.0)
    return CollarCheck(
        min_hessian=float(np.min(hess)),
        min_laplacian=float(np.min(lap[representable])),
        min_laplacian_ratio=float(np.min(lap_ratio[collar])),
        min_hessian_ratio=float(np.min(hess_ratio[collar])),
    )


def conformal_ricci_derivative(m: WarpedBallMetric, eps: float) -> tuple[FloatArray, FloatArray]:
    """Eigenvalues of ``Hess f + Δf·g``: the first-order Ricci change of ``e^{-2sf}g``."""
    cf = CollarFunction(eps)
    conv, _ = _collar_terms(m, eps)
    f1, f2 = cf.df(m.r), cf.d2f(m.r)
    lap = f2 + 2.0 * conv * f1
    return f2 + lap, f1 * conv + lap


def conformal_ricci_exact(m: WarpedBallMetric, eps: float, s: float) -> tuple[FloatArray, FloatArray]:
    """Radial and tangential Ricci eigenvalues of ``e^{-2sf}g`` at the original gridpoints."""
    cf = CollarFunction(eps)
    field_ = warped_curvature(m)
    rad, tan = conformal_ricci_derivative(m, eps)
    f, f1 = cf.f(m.r), cf.df(m.r)
    scale = np.exp(2.0 * s * f)
    return scale * (field_.ricci_radial + s * rad), scale * (field_.ricci_tangential + s * tan - s * s * f1 * f1)


def conformal_critical_s(m: WarpedBallMetric, eps: float) -> float:
    """Smallest ``s`` at which the boundary stops being strictly convex: ``w'(0)/(w(0) f'(0))``."""
    cf = CollarFunction(eps)
    w1 = float(d1(m.warp, m.spacing)[-1])
    return w1 / (float(m.warp[-1]) * float(cf.df(0.0)))


@dataclass
class ConformalReport:
    s: float
    eps: float
    ii_boundary: float
    ii_formula: float
    boundary_eigenvalue: float
    min_ricci_collar: float
    min_ricci_global: float
    critical_s: float
    resolvable_points: int

    @property
    def sign_pattern(self) -> tuple[bool, bool, bool]:
        return (self.min_ricci_collar > 0.0, self.min_ricci_global >= -1e-8, self.ii_boundary < 0.0)


def conformal_collar(m: WarpedBallMetric, eps: float, s: float,
                     fine: int = 20001) -> tuple[WarpedBallMetric, ConformalReport]:
    """``e^{-2sf}g`` re-expressed in warped form.

    With ``r̃(r) = -∫_r^0 e^{-sf}`` the conformal metric is ``dr̃² + (e^{-sf}w)²σ``;
    it is resampled onto a uniform grid in ``r̃`` with the same point count.
    """
    _require(s >= 0.0, "s", "conformal parameter must be non-negative", ">= 0", s)
    cf = CollarFunction(eps)
    _collar_terms(m, eps)
    critical = conformal_critical_s(m, eps)
    w_end = float(m.warp[-1])
    gamma0 = -w_end * float(d1(m.warp, m.spacing)[-1]) + s * float(cf.df(0.0)) * w_end ** 2
    if s > 0.0 and s >= critical:
        raise ConformalError([issue("s", "boundary is no longer strictly convex", f"s < {critical!r}", s)],
                             critical_s=critical)
    if s == 0.0:
        out = m
        new_r_of = m.r
    else:
        rf = np.linspace(-eps, 0.0, fine)
        lost = cumulative_trapezoid(-np.expm1(-s * cf.f(rf)), rf, initial=0.0)
        total = float(lost[-1])
        rt_f = rf + (total - lost)
        inverse = make_interp_spline(rt_f, rf, k=5)
        grid = RadialGrid(m.grid.r_min + total, 0.0, m.grid.n_points)
        rt = grid.r
        # offsets from r_min keep full relative precision next to the pole
        warp_at = piecewise_spline(m.spacing * np.arange(m.grid.n_points), m.warp,
                                   tuple(x - m.grid.r_min for x in m.interfaces))
        offset = np.where(rt <= -eps + total, grid.spacing * np.arange(grid.n_points),
                          inverse(np.clip(rt, rt_f[0], 0.0)) - m.grid.r_min)
        offset[-1] = -m.grid.r_min
        new_r_of = m.grid.r_min + offset
        new_r_of[-1] = 0.0
        w = np.exp(-s * cf.f(new_r_of)) * warp_at(offset)
        w[0] = m.warp[0]
        out = WarpedBallMetric(grid, w, label=f"conformal({m.label},{eps!r},{s!r})")
    field_ = warped_curvature(out)
    ii_engine = float(field_.slice_ii[-1])
    rad, tan = conformal_ricci_derivative(m, eps)
    lam = np.interp(new_r_of, m.r, np.minimum(rad, tan))
    in_collar = new_r_of > -eps
    resolvable = in_collar & (s * lam >= RESOLVE_FLOOR)
    min_collar = float(np.min(field_.min_ricci[resolvable])) if np.any(resolvable) else float("nan")
    report = ConformalReport(
        s=s, eps=eps, ii_boundary=ii_engine, ii_formula=gamma0,
        boundary_eigenvalue=ii_engine / float(out.warp[-1] ** 2),
        min_ricci_collar=min_collar, min_ricci_global=field_.min_ricci_eig,
        critical_s=critical, resolvable_points=int(np.sum(resolvable)),
    )
    if ii_engine >= 0.0:
        raise ConformalError([issue("s", "boundary II is no longer negative definite",
                                    f"s < {critical!r}", s)], critical_s=critical)
    logger.debug("conformal s=%g: II=%.6g collar min Ric=%.6g", s, ii_engine, min_collar)
    return out, report


def conformal_ii_unscaled(report: ConformalReport) -> float:
    """Engine II at the boundary rescaled to the coordinate normal ``∂_r``: ``e^{s f(0)}·II``."""
    return report.ii_boundary * math.exp(report.s * float(CollarFunction(report.eps).f(0.0)))


__all__ = [
    "shift", "double", "glue_interpolate", "glue_band", "GlueDiagnostics", "equidistant_check",
    "EquidistantReport", "smooth_c1", "SmoothingReport", "BumpFunction", "boundary_perturb",
    "PerturbReport", "scaled_perturb_path", "delta_schedule", "CollarFunction", "collar_function",
    "CollarCheck", "hessian_laplacian_check", "conformal_ricci_derivative", "conformal_ricci_exact",
    "conformal_critical_s", "conformal_collar", "ConformalReport", "conformal_ii_unscaled",
]
