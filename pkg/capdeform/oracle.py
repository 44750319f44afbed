"""Independent curvature oracle: Riemann tensor by central differences of a chart metric.

Nothing here shares code with the fourth-order engine. Christoffel symbols
come from centred first differences of the sampled metric; their derivatives
from centred differences of those, so every result carries an O(h²) error.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .curvature import CurvatureField, warped_curvature
from .errors import MetricError, PreconditionError, issue
from .metrics import BandMetric, WarpedBallMetric, build_warped, parse_profile, piecewise_spline
from .stencils import FloatArray

logger = logging.getLogger(__name__)

Sampler = Callable[[FloatArray], FloatArray]
DEFAULT_STEP = 1e-4
COMPONENTS = ("k_mixed", "k_tan", "ricci_radial", "ricci_tangential", "scalar")

# generic directions; nothing special about these values
_DIRECTION = np.array([0.48, 0.6, 0.64])
_DIRECTION /= np.linalg.norm(_DIRECTION)
_TANGENT = np.cross(_DIRECTION, [0.0, 0.0, 1.0])
_TANGENT /= np.linalg.norm(_TANGENT)


@dataclass(frozen=True, eq=False)
class RiemannResult:
    """Curvature at one chart point, index order ``R^ρ_{σμν}``."""

    metric: FloatArray
    christoffel: FloatArray
    riemann: FloatArray
    rm: FloatArray
    ricci: FloatArray

    def sectional(self, x: Any, y: Any) -> float:
        x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
        g = self.metric
        area = (x @ g @ x) * (y @ g @ y) - (x @ g @ y) ** 2
        return float(np.einsum("abcd,a,b,c,d->", self.rm, x, y, x, y) / area)

    def ricci_unit(self, x: Any) -> float:
        x = np.asarray(x, dtype=np.float64)
        return float(x @ self.ricci @ x / (x @ self.metric @ x))

    def bianchi_residual(self) -> float:
        """Max of ``|Rm_ijkl + Rm_iklj + Rm_iljk|``; zero by construction up to roundoff."""
        rm = self.rm
        cyc = rm + np.transpose(rm, (0, 2, 3, 1)) + np.transpose(rm, (0, 3, 1, 2))
        return float(np.max(np.abs(cyc)))

    def scalar(self) -> float:
        return float(np.einsum("ij,ij->", np.linalg.inv(self.metric), self.ricci))


def _sample(sampler: Sampler, p: FloatArray) -> FloatArray:
    g = np.asarray(sampler(p), dtype=np.float64)
    scale = float(np.max(np.abs(g))) or 1.0
    if g.ndim != 2 or g.shape[0] != g.shape[1] or not np.allclose(g, g.T, rtol=0.0, atol=1e-12 * scale):
        raise MetricError([issue("sampler", "metric sample is not a symmetric matrix", "g = g^T", np.shape(g))])
    if np.linalg.eigvalsh(0.5 * (g + g.T))[0] <= 0.0:
        raise MetricError([issue("sampler", "metric sample is not positive definite", "eigenvalues > 0", list(p))])
    return g


def _christoffel(sampler: Sampler, p: FloatArray, h: float) -> FloatArray:
    d = p.size
    g = _sample(sampler, p)
    dg = np.empty((d, d, d))
    for l in range(d):
        e = np.zeros(d)
        e[l] = h
        dg[l] = (_sample(sampler, p + e) - _sample(sampler, p - e)) / (2.0 * h)
    # T[i, j, l] = ∂_i g_jl + ∂_j g_il - ∂_l g_ij
    t = dg + np.transpose(dg, (1, 0, 2)) - np.transpose(dg, (1, 2, 0))
    return 0.5 * np.einsum("kl,ijl->kij", np.linalg.inv(g), t)


def fd_riemann(sampler: Sampler, point: Any, h: float = DEFAULT_STEP) -> RiemannResult:
    """Riemann and Ricci tensors of ``sampler`` at ``point`` with O(h²) error.

    Example:
        >>> res = fd_riemann(lambda p: np.eye(3), [0.1, 0.2, 0.3])
        >>> float(np.max(np.abs(res.riemann)))
        0.0
    """
    if h <= 0.0:
        raise PreconditionError([issue("h", "step must be positive", "> 0", h)])
    p = np.asarray(point, dtype=np.float64)
    d = p.size
    g = _sample(sampler, p)
    gam = _christoffel(sampler, p, h)
    dgam = np.empty((d, d, d, d))
    for m in range(d):
        e = np.zeros(d)
        e[m] = h
        dgam[m] = (_christoffel(sampler, p + e, h) - _christoffel(sampler, p - e, h)) / (2.0 * h)
    riemann = (np.einsum("mrns->rsmn", dgam) - np.einsum("nrms->rsmn", dgam)
               + np.einsum("rml,lns->rsmn", gam, gam) - np.einsum("rnl,lms->rsmn", gam, gam))
    rm = np.einsum("ar,rsmn->asmn", g, riemann)
    ricci = np.einsum("rsrn->sn", riemann)
    return RiemannResult(metric=g, christoffel=gam, riemann=riemann, rm=rm, ricci=ricci)


# --- samplers ---


def euclidean_sampler(dim: int = 3) -> Sampler:
    return lambda p: np.eye(dim)


def round_sphere_sampler() -> Sampler:
    """Unit round S³ in stereographic coordinates: ``4|dx|²/(1 + |x|²)²``."""
    def sample(p: FloatArray) -> FloatArray:
        return 4.0 / (1.0 + float(p @ p)) ** 2 * np.eye(3)
    return sample


def warped_sampler(m: WarpedBallMetric, center: str = "left") -> tuple[Sampler, Callable[[float], float]]:
    """Cartesian chart ``x = ρ(r)·ω`` around one end of the radial interval.

    Returns the sampler and the map ``r -> ρ``. ``ρ`` is offset so that
    ``ρ = w`` at the chosen end, which is the pole itself for a ball. The
    warp is splined in ``ρ`` directly, so a sample near the pole never
    round-trips through ``r``.
    """
    if center == "left":
        r0, offset, sign, warp = m.grid.r_min, float(m.warp[0]), 1.0, m.warp
    elif center == "right":
        r0, offset, sign, warp = m.grid.r_max, float(m.warp[-1]), -1.0, m.warp[::-1]
    else:
        raise PreconditionError([issue("center", "unknown chart center", "left | right", center)])

    def rho_of(r: float) -> float:
        return sign * (r - r0) + offset

    nodes = offset + m.spacing * np.arange(m.grid.n_points)
    spline = piecewise_spline(nodes, warp, tuple(rho_of(x) for x in m.interfaces))

    def sample(p: FloatArray) -> FloatArray:
        rho = math.sqrt(float(p @ p))
        w = float(spline(rho))
        unit = p / rho
        radial = np.outer(unit, unit)
        return radial + (w / rho) ** 2 * (np.eye(3) - radial)

    return sample, rho_of


def band_sampler(fn: Callable[[float, float, float], Any]) -> Sampler:
    """Chart sampler ``(r, x, y) -> dr² + g_ij dx^i dx^j`` from an analytic slice metric."""
    def sample(p: FloatArray) -> FloatArray:
        g = np.eye(3)
        g[1:, 1:] = np.asarray(fn(float(p[0]), float(p[1]), float(p[2])), dtype=np.float64)
        return g
    return sample


def oracle_warped_point(m: WarpedBallMetric, i: int, h: float = DEFAULT_STEP,
                        center: str | None = None) -> dict[str, float]:
    """Oracle values of every engine component at gridpoint ``i``."""
    if center is None:
        center = "right" if (m.pole_right and m.r[i] > 0.5 * (m.grid.r_min + m.grid.r_max)) else "left"
    sampler, rho_of = warped_sampler(m, center)
    p = rho_of(float(m.r[i])) * _DIRECTION
    res = fd_riemann(sampler, p, h)
    k_mixed = res.sectional(_DIRECTION, _TANGENT)
    other = np.cross(_DIRECTION, _TANGENT)
    return {
        "k_mixed": k_mixed,
        "k_tan": res.sectional(_TANGENT, other),
        "ricci_radial": res.ricci_unit(_DIRECTION),
        "ricci_tangential": res.ricci_unit(_TANGENT),
        "scalar": res.scalar(),
    }


# --- reference metrics ---


def reference_metric(name: str, n_points: int = 1025) -> tuple[WarpedBallMetric, CurvatureField]:
    """A closed-form metric and its exact curvature field.

    ``name`` is ``flat_ball``, ``hemisphere`` or ``round_cap:<a>``.
    """
    base, params = parse_profile(name)
    if base not in ("flat_ball", "hemisphere", "round_cap") or (base != "round_cap" and params):
        raise PreconditionError([issue("name", "unknown reference metric",
                                       "flat_ball | hemisphere | round_cap:<a>", name)])
    m = build_warped(base, *params, n_points=n_points)
    r = m.r
    if base == "flat_ball":
        k = np.zeros_like(r)
        w1 = np.ones_like(r)
    else:
        a = math.pi / 2 if base == "hemisphere" else params[0]
        k = np.ones_like(r)
        w1 = np.cos(r + a)
    with np.errstate(divide="ignore", invalid="ignore"):
        mean = np.where(m.warp > 0.0, -2.0 * w1 / m.warp, np.nan)
    ii = -m.warp * w1
    exact = CurvatureField(
        r=r, k_mixed=k, k_tan=k.copy(), ricci_radial=2.0 * k, ricci_tangential=2.0 * k,
        scalar=6.0 * k, slice_ii=ii, mean_curvature=mean, smooth=np.ones(r.shape, dtype=bool),
    )
    return m, exact


# --- crosscheck ---


@dataclass
class CrosscheckReport:
    """Per-component maximum deviation between engine and oracle."""

    tol: float
    entries: list[dict[str, Any]] = field(default_factory=list)
    n_checked: int = 0
    n_excluded: int = 0

    @property
    def passed(self) -> bool:
        return all(e["pass"] for e in self.entries)

    def to_json(self) -> str:
        return json.dumps(self.entries, sort_keys=True, indent=2)


def _excluded(m: WarpedBallMetric, collar: int) -> FloatArray:
    n = m.grid.n_points
    skip = np.zeros(n, dtype=bool)
    skip |= m.warp <= 0.0
    if m.pole_left:
        skip[:collar] = True
    if m.pole_right:
        skip[n - collar:] = True
    for x in m.interfaces:
        skip |= np.abs(m.r - x) <= collar * m.spacing
    return skip


def crosscheck(m: WarpedBallMetric | BandMetric, tol: float, h: float = DEFAULT_STEP,
               stride: int = 1, collar: int = 3) -> CrosscheckReport:
    """Compare the engine against the oracle at every ``stride``-th eligible gridpoint.

    Gridpoints within ``collar`` spacings of an interface or a pole are skipped.
    Failures are reported, never raised.
    """
    if isinstance(m, BandMetric):
        raise PreconditionError([issue("m", "crosscheck needs a warped metric", "WarpedBallMetric", "BandMetric")])
    engine = warped_curvature(m)
    skip = _excluded(m, collar)
    idx = np.flatnonzero(~skip)[::max(1, stride)]
    report = CrosscheckReport(tol=tol, n_excluded=int(skip.sum()))
    worst = {c: (0.0, float("nan")) for c in COMPONENTS}
    for i in idx:
        values = oracle_warped_point(m, int(i), h)
        for c in COMPONENTS:
            dev = abs(values[c] - float(getattr(engine, c)[i]))
            if not dev <= worst[c][0]:
                worst[c] = (dev, float(m.r[i]))
    report.n_checked = int(idx.size)
    for c in COMPONENTS:
        dev, where = worst[c]
        report.entries.append({"component": c, "max_dev": dev, "location": where, "pass": bool(dev <= tol)})
    logger.info("crosscheck %s: %d points, passed=%s", m.label or "metric", report.n_checked, report.passed)
    return report
