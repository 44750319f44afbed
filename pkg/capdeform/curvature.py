"""Curvature of warped and band metrics in Fermi coordinates.

For ``g = dr² + g_r`` the mixed curvature is ``K(v, ∂_r) = A(v, v)`` for unit
``v`` with ``A = -½g_r'' + ¼ g_r' g_r⁻¹ g_r'``, and the tangential curvature
follows from Gauss: ``K(e₁, e₂) = K_int + ¼(g_r'(e₁,e₂)² - g_r'(e₁,e₁)g_r'(e₂,e₂))``.
Warped metrics are the special case ``g_r = w²σ``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any

import numpy as np
from numpy.polynomial import Polynomial

from .errors import MetricError, issue
from .metrics import BandMetric, SymmetricForm, WarpedBallMetric, relative_eigen_range
from .stencils import FloatArray, d1, d1_periodic, d2, d2_periodic

logger = logging.getLogger(__name__)

INTERFACE_COLLAR = 3
_POLE_WINDOW = 64
_POLE_POWERS = np.array([1, 3, 5, 7])


@dataclass(frozen=True, eq=False)
class CurvatureField:
    """Per-gridpoint curvature of a Fermi-coordinate metric.

    Warped fields are 1-D over the radial grid. Band fields carry the chart
    axes as well, and a trailing axis of length 2 (the slice eigenframe) on
    ``k_mixed`` and ``ricci_tangential``. ``smooth`` masks out gridpoints
    within three spacings of a declared interface.
    """

    r: FloatArray
    k_mixed: FloatArray
    k_tan: FloatArray
    ricci_radial: FloatArray
    ricci_tangential: FloatArray
    scalar: FloatArray
    slice_ii: FloatArray
    mean_curvature: FloatArray
    smooth: FloatArray
    basis: str = "round"

    @property
    def min_ricci(self) -> FloatArray:
        """Smallest diagonal Ricci entry per gridpoint."""
        tang = self.ricci_tangential
        if tang.ndim > self.ricci_radial.ndim:
            tang = np.min(tang, axis=-1)
        return np.minimum(self.ricci_radial, tang)

    @property
    def min_ricci_eig(self) -> float:
        """Minimum Ricci eigenvalue over every gridpoint where the metric is smooth."""
        mr = self.min_ricci
        mask = self.smooth
        if mr.ndim > 1:
            mask = np.broadcast_to(mask.reshape(mask.shape + (1,) * (mr.ndim - 1)), mr.shape)
        return float(np.min(mr[mask]))

    def slice_form(self, i: int) -> SymmetricForm:
        return SymmetricForm(self.slice_ii[i], "chart" if self.basis == "chart" else "round")


def _interface_mask(r: FloatArray, interfaces: tuple[float, ...], spacing: float) -> FloatArray:
    smooth = np.ones(r.shape, dtype=bool)
    for x in interfaces:
        smooth &= np.abs(r - x) > INTERFACE_COLLAR * spacing
    return smooth


def _pole_fit(w: FloatArray, h: float) -> tuple[FloatArray, FloatArray]:
    """``K_mixed`` and ``K_tan`` on the points next to a pole at ``w[0]``.

    Sample noise in ``w`` is divided by ``w`` and ``w²`` there, so the
    stencil quotients give way to those of the least-squares fit
    ``c₁s + c₃s³ + c₅s⁵ + c₇s⁷`` over the first points. The pole itself gets
    the common limit ``-w'''/w'``.
    """
    k = min(_POLE_WINDOW, max(8, w.size // 8))
    scale = h * (k - 1)
    u = np.arange(k) / (k - 1)
    coef, *_ = np.linalg.lstsq(u[:, None] ** _POLE_POWERS, w[:k], rcond=None)
    full = np.zeros(_POLE_POWERS[-1] + 1)
    full[_POLE_POWERS] = coef
    fit = Polynomial(full)
    near = u[1:k // 2]
    f0 = fit(near)
    f1 = fit.deriv(1)(near) / scale
    f2 = fit.deriv(2)(near) / scale ** 2
    pole = -6.0 * full[3] / (full[1] * scale * scale)
    return np.concatenate([[pole], -f2 / f0]), np.concatenate([[pole], (1.0 - f1 * f1) / (f0 * f0)])


def _fill_pole(w: FloatArray, h: float, k_mixed: FloatArray, k_tan: FloatArray, reverse: bool) -> None:
    if reverse:
        km, kt = _pole_fit(w[::-1], h)
        k_mixed[w.size - km.size:] = km[::-1]
        k_tan[w.size - kt.size:] = kt[::-1]
    else:
        km, kt = _pole_fit(w, h)
        k_mixed[:km.size] = km
        k_tan[:kt.size] = kt


def warped_curvature(m: WarpedBallMetric) -> CurvatureField:
    """Curvature of ``dr² + w²σ``: ``K_mixed = -w''/w`` and ``K_tan = (1 - w'²)/w²``.

    The points next to a pole read both curvatures off an odd polynomial fit
    of ``w``; the pole takes their common limit ``-w'''/w'``.

    Example:
        >>> from capdeform.metrics import round_cap
        >>> field = warped_curvature(round_cap(0.7853981633974483, 257))
        >>> round(float(field.k_mixed[100]), 8)
        1.0
    """
    w = m.warp
    h = m.spacing
    w1 = d1(w, h)
    w2 = d2(w, h)
    regular = w > 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        k_mixed = np.where(regular, -w2 / w, np.nan)
        k_tan = np.where(regular, (1.0 - w1 * w1) / (w * w), np.nan)
        mean_curv = np.where(regular, -2.0 * w1 / w, np.nan)
    if m.pole_left:
        _fill_pole(w, h, k_mixed, k_tan, reverse=False)
    if m.pole_right:
        _fill_pole(w, h, k_mixed, k_tan, reverse=True)
    if not (np.all(np.isfinite(k_mixed)) and np.all(np.isfinite(k_tan))):
        bad = int(np.flatnonzero(~np.isfinite(k_mixed + k_tan))[0])
        logger.warning("curvature of %s is not finite at r=%g", m.label or "metric", float(m.r[bad]))
        raise MetricError([issue(f"curvature[{bad}]", "NaN from differencing", "finite", "nan")])
    ric_rr = 2.0 * k_mixed
    ric_tt = k_mixed + k_tan
    return CurvatureField(
        r=m.r,
        k_mixed=k_mixed,
        k_tan=k_tan,
        ricci_radial=ric_rr,
        ricci_tangential=ric_tt,
        scalar=2.0 * (2.0 * k_mixed + k_tan),
        slice_ii=-w * w1,
        mean_curvature=mean_curv,
        smooth=_interface_mask(m.r, m.interfaces, h),
    )


# --- band engine ---


def _gauss_curvature(g: FloatArray, hx: float, hy: float) -> FloatArray:
    """Intrinsic curvature of ``E dx² + 2F dx dy + G dy²`` via Brioschi's formula."""
    E, F, G = g[..., 0, 0], g[..., 0, 1], g[..., 1, 1]
    ax, ay = 1, 2
    Eu, Ev = d1_periodic(E, hx, ax), d1_periodic(E, hy, ay)
    Fu, Fv = d1_periodic(F, hx, ax), d1_periodic(F, hy, ay)
    Gu, Gv = d1_periodic(G, hx, ax), d1_periodic(G, hy, ay)
    Evv = d2_periodic(E, hy, ay)
    Guu = d2_periodic(G, hx, ax)
    Fuv = d1_periodic(d1_periodic(F, hx, ax), hy, ay)
    zero = np.zeros_like(E)
    m1 = np.stack([
        np.stack([-0.5 * Evv + Fuv - 0.5 * Guu, 0.5 * Eu, Fu - 0.5 * Ev], axis=-1),
        np.stack([Fv - 0.5 * Gu, E, F], axis=-1),
        np.stack([0.5 * Gv, F, G], axis=-1),
    ], axis=-2)
    m2 = np.stack([
        np.stack([zero, 0.5 * Ev, 0.5 * Gu], axis=-1),
        np.stack([0.5 * Ev, E, F], axis=-1),
        np.stack([0.5 * Gu, F, G], axis=-1),
    ], axis=-2)
    det = E * G - F * F
    return np.asarray((np.linalg.det(m1) - np.linalg.det(m2)) / (det * det))


def _quad(form: FloatArray, u: FloatArray, v: FloatArray) -> FloatArray:
    return np.einsum("...i,...ij,...j->...", u, form, v)


def band_curvature(m: BandMetric) -> CurvatureField:
    """Curvature of a Fermi band, evaluated in the slice eigenframe per gridpoint."""
    g = m.components
    h = m.grid.spacing
    hx, hy = m.chart_spacing
    g1 = d1(g, h)
    g2 = d2(g, h)
    ginv = np.linalg.inv(g)
    a = -0.5 * g2 + 0.25 * g1 @ ginv @ g1
    lam, vec = np.linalg.eigh(g)
    if np.any(lam[..., 0] <= 0.0):
        raise MetricError([issue("components", "loss of positive definiteness", "> 0", float(np.min(lam)))])
    e1 = vec[..., :, 0] / np.sqrt(lam[..., 0:1])
    e2 = vec[..., :, 1] / np.sqrt(lam[..., 1:2])
    k_mixed = np.stack([_quad(a, e1, e1), _quad(a, e2, e2)], axis=-1)
    k_int = _gauss_curvature(g, hx, hy)
    k_tan = k_int + 0.25 * (_quad(g1, e1, e2) ** 2 - _quad(g1, e1, e1) * _quad(g1, e2, e2))
    ric_rr = np.einsum("...ij,...ji->...", ginv, a)
    ric_tt = k_mixed + k_tan[..., None]
    ii = -0.5 * g1
    if not np.all(np.isfinite(ric_tt)):
        logger.warning("band curvature of %s is not finite", m.label or "band")
        raise MetricError([issue("curvature", "NaN from differencing", "finite", "nan")])
    smooth = _interface_mask(m.grid.r, m.interfaces, h)
    return CurvatureField(
        r=m.grid.r,
        k_mixed=k_mixed,
        k_tan=k_tan,
        ricci_radial=ric_rr,
        ricci_tangential=ric_tt,
        scalar=2.0 * (k_mixed.sum(axis=-1) + k_tan),
        slice_ii=ii,
        mean_curvature=np.einsum("...ij,...ji->...", ginv, ii),
        smooth=smooth,
        basis="chart",
    )


def curvature(m: WarpedBallMetric | BandMetric) -> CurvatureField:
    if isinstance(m, BandMetric):
        return band_curvature(m)
    return warped_curvature(m)


def second_fundamental_form(m: WarpedBallMetric | BandMetric, r: float) -> tuple[SymmetricForm, Any]:
    """``II = -½(g_r)'`` and mean curvature ``H = tr_g II`` on the slice at ``r``.

    Warped slices report II as a multiple of the round metric and H as a
    float; band slices give chart-basis fields. Strict convexity means II is
    negative definite.
    """
    if isinstance(m, BandMetric):
        i = m.grid.index_of(r)
        g = m.components
        g1 = d1(g, m.grid.spacing)[i]
        ii = -0.5 * g1
        return SymmetricForm(ii, "chart"), np.einsum("...ij,...ji->...", np.linalg.inv(g[i]), ii)
    i = m.grid.index_of(r)
    w = m.warp
    w1 = float(d1(w, m.spacing)[i])
    if w[i] == 0.0:
        return SymmetricForm(np.float64(0.0)), float("nan")
    return SymmetricForm(np.float64(-w[i] * w1)), -2.0 * w1 / float(w[i])


def slice_metric(m: WarpedBallMetric | BandMetric, r: float) -> SymmetricForm:
    if isinstance(m, BandMetric):
        return SymmetricForm(m.components[m.grid.index_of(r)], "chart")
    return SymmetricForm(np.float64(m.warp[m.grid.index_of(r)] ** 2))


def boundary_ii_eigenvalues(m: WarpedBallMetric) -> tuple[float, float]:
    """Eigenvalues of II at ``r = 0`` relative to the boundary metric (``-w'/w``)."""
    ii, _ = second_fundamental_form(m, 0.0)
    return relative_eigen_range(ii, slice_metric(m, 0.0))
