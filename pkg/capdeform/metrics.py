"""Sampled metric representations: warped balls, Fermi bands and slice forms."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path
from typing import Any, Callable, ClassVar, Literal

import numpy as np
from scipy.interpolate import BSpline, make_interp_spline

from .errors import MetricError, PreconditionError, issue
from .stencils import MIN_POINTS, FloatArray, d1

logger = logging.getLogger(__name__)

POLE_TOL = 1e-12
SLOPE_TOL = 1e-6
_UNIFORM_RTOL = 1e-9
Smoothness = Literal["C0", "C1", "C2", "C10", "Cinf", ""]


def _frozen(a: Any) -> FloatArray:
    out = np.array(a, dtype=np.float64)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class RadialGrid:
    """Uniform grid on ``[r_min, r_max]`` in the signed distance coordinate."""

    r_min: float
    r_max: float
    n_points: int

    def __post_init__(self) -> None:
        if self.n_points < MIN_POINTS:
            raise MetricError([issue("grid.n_points", "too few points for fourth-order stencils",
                                     f">= {MIN_POINTS}", self.n_points)])
        if not self.r_max > self.r_min:
            raise MetricError([issue("grid", "empty radial interval",
                                     "r_max > r_min", f"[{self.r_min}, {self.r_max}]")])

    @property
    def spacing(self) -> float:
        return (self.r_max - self.r_min) / (self.n_points - 1)

    @cached_property
    def r(self) -> FloatArray:
        return _frozen(np.linspace(self.r_min, self.r_max, self.n_points))

    def index_of(self, r: float, tol: float | None = None) -> int:
        """Index of the gridpoint at ``r``; anything off-grid is an error."""
        tol = 1e-9 * self.spacing if tol is None else tol
        pos = (r - self.r_min) / self.spacing
        i = int(round(pos))
        if i < 0 or i >= self.n_points or abs(pos - i) * self.spacing > tol:
            raise MetricError([issue("r", "slice outside grid", f"gridpoint in [{self.r_min}, {self.r_max}]", r)])
        return i

    def refined(self, n_points: int) -> RadialGrid:
        return RadialGrid(self.r_min, self.r_max, n_points)

    @classmethod
    def from_samples(cls, r: Any) -> RadialGrid:
        r = np.asarray(r, dtype=np.float64)
        if r.ndim != 1 or r.size < MIN_POINTS:
            raise MetricError([issue("r", "need a 1-D sample vector", f">= {MIN_POINTS} points", r.shape)])
        grid = cls(float(r[0]), float(r[-1]), int(r.size))
        steps = np.diff(r)
        if not np.allclose(steps, grid.spacing, rtol=_UNIFORM_RTOL, atol=0.0):
            worst = int(np.argmax(np.abs(steps - grid.spacing)))
            raise MetricError([issue(f"r[{worst}]", "non-uniform spacing", grid.spacing, steps[worst])])
        return grid


@dataclass(frozen=True, eq=False)
class WarpedBallMetric:
    """``dr² + w(r)²·σ`` with σ the round unit 2-sphere.

    A ball has its boundary at ``r = 0`` and, when it is a full ball, a pole
    (``w = 0``) at ``r_min``.  A doubled metric lives on ``[r_min, -r_min]``
    with poles at both ends and the original ball as its ``r ≤ 0`` half.
    ``interfaces`` lists the radii where the metric is only C¹ (or C⁰).
    """

    grid: RadialGrid
    warp: FloatArray
    doubled: bool = False
    interfaces: tuple[float, ...] = ()
    smoothness: Smoothness = ""
    label: str = ""

    dimension: ClassVar[int] = 3

    def __post_init__(self) -> None:
        w = _frozen(self.warp)
        object.__setattr__(self, "warp", w)
        errors: list[dict[str, str]] = []
        if w.shape != (self.grid.n_points,):
            raise MetricError([issue("warp", "shape does not match grid", (self.grid.n_points,), w.shape)])
        bad = np.flatnonzero(~np.isfinite(w))
        if bad.size:
            raise MetricError([issue(f"warp[{bad[0]}]", "non-finite warp sample", "finite", w[bad[0]])])
        for i in np.flatnonzero(w[1:-1] <= 0.0)[:5] + 1:
            errors.append(issue(f"warp[{i}]", "non-positive warp sample", "> 0", repr(float(w[i]))))
        if w[0] < 0.0:
            errors.append(issue("warp[0]", "negative warp sample", ">= 0", repr(float(w[0]))))
        if self.doubled:
            if abs(self.grid.r_max + self.grid.r_min) > 1e-9 * abs(self.grid.r_min):
                errors.append(issue("grid", "doubled metric must be symmetric about 0",
                                    "r_max = -r_min", (self.grid.r_min, self.grid.r_max)))
            if w[0] != 0.0 or w[-1] != 0.0:
                errors.append(issue("warp", "doubled metric must close up at both ends", 0.0, (w[0], w[-1])))
            else:
                slope = d1(w, self.grid.spacing)
                for end, value in (("r_min", slope[0]), ("r_max", -slope[-1])):
                    if abs(value - 1.0) > SLOPE_TOL:
                        errors.append(issue(f"warp.{end}", "pole is not smooth", "|dw/ds| = 1", repr(float(value))))
        elif w[-1] <= 0.0:
            errors.append(issue(f"warp[{w.size - 1}]", "boundary slice degenerates", "> 0", repr(float(w[-1]))))
        if errors:
            logger.debug("rejected warp %s: %s", self.label or "(unlabelled)", errors[0]["message"])
            raise MetricError(errors)

    @property
    def r(self) -> FloatArray:
        return self.grid.r

    @property
    def spacing(self) -> float:
        return self.grid.spacing

    @property
    def pole_left(self) -> bool:
        return bool(self.warp[0] == 0.0)

    @property
    def pole_right(self) -> bool:
        return bool(self.warp[-1] == 0.0)

    @property
    def original_half(self) -> tuple[float, float]:
        """Radial range of the original ball inside a doubled metric."""
        return (self.grid.r_min, 0.0)

    def with_warp(self, warp: Any, **changes: Any) -> WarpedBallMetric:
        return replace(self, warp=warp, **changes)

    @cached_property
    def interpolant(self) -> Callable[..., FloatArray]:
        """Quintic spline of ``w`` built separately on every smooth piece."""
        return piecewise_spline(self.r, self.warp, self.interfaces)

    def half(self) -> WarpedBallMetric:
        """The ``r ≤ 0`` half of a doubled metric, as a ball with boundary at 0."""
        if not self.doubled:
            raise PreconditionError([issue("metric", "not a doubled metric", "doubled", "ball")])
        mid = (self.grid.n_points - 1) // 2
        if self.grid.n_points % 2 == 0 or abs(self.r[mid]) > 1e-12:
            raise PreconditionError([issue("grid", "r = 0 is not a gridpoint", "odd n_points", self.grid.n_points)])
        grid = RadialGrid(self.grid.r_min, 0.0, mid + 1)
        return WarpedBallMetric(grid, self.warp[:mid + 1],
                                interfaces=tuple(x for x in self.interfaces if x < 0.0),
                                label=self.label)


def piecewise_spline(r: FloatArray, values: FloatArray, interfaces: tuple[float, ...] = (),
                     k: int = 5) -> Callable[..., FloatArray]:
    """Interpolating spline that never differentiates across an interface.

    The returned callable takes ``(x, nu=0)`` like ``BSpline.__call__``; each
    point is evaluated on the piece containing it.
    """
    cuts = [c for c in sorted(interfaces) if r[0] < c < r[-1]]
    edges = [r[0], *cuts, r[-1]]
    pieces: list[BSpline] = []
    for a, b in zip(edges[:-1], edges[1:]):
        mask = (r >= a - 1e-12) & (r <= b + 1e-12)
        if int(mask.sum()) < k + 1:
            raise MetricError([issue("interfaces", "smooth piece has too few samples for a spline",
                                     f">= {k + 1}", int(mask.sum()))])
        pieces.append(make_interp_spline(r[mask], values[mask], k=k))
    if len(pieces) == 1:
        only = pieces[0]

        def single(x: Any, nu: int = 0) -> FloatArray:
            return np.asarray(only(x, nu), dtype=np.float64)
        return single
    cut_arr = np.asarray(cuts)

    def evaluate(x: Any, nu: int = 0) -> FloatArray:
        xa = np.asarray(x, dtype=np.float64)
        which = np.searchsorted(cut_arr, xa)
        out = np.empty(xa.shape)
        for j, spline in enumerate(pieces):
            sel = which == j
            if np.any(sel):
                out[sel] = spline(xa[sel], nu)
        return out
    return evaluate


# --- profiles ---


def _snap_poles(w: FloatArray) -> FloatArray:
    scale = float(np.max(np.abs(w))) or 1.0
    w = w.copy()
    for end in (0, -1):
        if abs(w[end]) <= POLE_TOL * scale:
            w[end] = 0.0
    return w


def flat_ball(radius: float = 1.0, n_points: int = 1025) -> WarpedBallMetric:
    """Euclidean ball of the given radius: ``w = R + r`` on ``[-R, 0]``."""
    if radius <= 0.0:
        raise PreconditionError([issue("flat_ball.radius", "radius must be positive", "> 0", radius)])
    grid = RadialGrid(-radius, 0.0, n_points)
    return WarpedBallMetric(grid, _snap_poles(radius + grid.r), label=f"flat_ball:{radius!r}")


def round_cap(a: float, n_points: int = 1025) -> WarpedBallMetric:
    """Geodesic ball of radius ``a`` in the unit 3-sphere: ``w = sin(r + a)``."""
    if not 0.0 < a <= math.pi / 2 + 1e-12:
        raise PreconditionError([issue("round_cap.a", "cap radius outside (0, pi/2]", "0 < a <= pi/2", a)])
    grid = RadialGrid(-a, 0.0, n_points)
    return WarpedBallMetric(grid, _snap_poles(np.sin(grid.r + a)), label=f"round_cap:{a!r}")


def hemisphere(n_points: int = 1025) -> WarpedBallMetric:
    m = round_cap(math.pi / 2, n_points)
    return replace(m, label="hemisphere")


def perturbed_ball(radius: float = 1.0, amplitude: float = 0.05, n_points: int = 1025) -> WarpedBallMetric:
    """Flat ball with a smooth odd bump ``w = x + A·sin³(πx/R)/π``, ``x = R + r``."""
    grid = RadialGrid(-radius, 0.0, n_points)
    x = radius + grid.r
    w = x + amplitude * np.sin(math.pi * x / radius) ** 3 / math.pi
    return WarpedBallMetric(grid, _snap_poles(w), label=f"perturbed_ball:{radius!r},{amplitude!r}")


def from_samples(r: Any, w: Any, label: str = "samples") -> WarpedBallMetric:
    grid = RadialGrid.from_samples(r)
    if abs(grid.r_max) > 1e-9 * max(1.0, abs(grid.r_min)):
        raise MetricError([issue("r", "boundary must sit at r = 0", 0.0, grid.r_max)])
    grid = RadialGrid(grid.r_min, 0.0, grid.n_points)
    return WarpedBallMetric(grid, _snap_poles(np.asarray(w, dtype=np.float64)), label=label)


_PROFILES: dict[str, Callable[..., WarpedBallMetric]] = {
    "flat_ball": flat_ball,
    "round_cap": round_cap,
    "hemisphere": hemisphere,
    "perturbed_ball": perturbed_ball,
}


def parse_profile(text: str) -> tuple[str, list[float]]:
    """``"round_cap:1.047"`` -> ``("round_cap", [1.047])``; ``"csv:path"`` keeps the path."""
    name, _, rest = text.partition(":")
    name = name.strip()
    if name == "csv":
        return name, []
    if name not in _PROFILES:
        raise PreconditionError([issue("profile", "unknown profile",
                                       " | ".join([*sorted(_PROFILES), "csv:<path>"]), name)])
    try:
        params = [float(p) for p in rest.split(",") if p.strip()]
    except ValueError:
        raise PreconditionError([issue("profile", "profile parameters must be numbers", "float list", rest)]) from None
    return name, params


def build_warped(profile: str, *params: float, n_points: int = 1025) -> WarpedBallMetric:
    """Build a named profile, or load ``csv:<path>`` samples.

    Example:
        >>> m = build_warped("flat_ball", 1.0, n_points=257)
        >>> float(m.warp[-1])
        1.0
    """
    if profile.startswith("csv:"):
        return read_warped_csv(profile[4:])
    if ":" in profile:
        profile, parsed = parse_profile(profile)
        params = (*parsed, *params)
    if profile not in _PROFILES:
        raise PreconditionError([issue("profile", "unknown profile", " | ".join(sorted(_PROFILES)), profile)])
    try:
        return _PROFILES[profile](*params, n_points=n_points)
    except TypeError as exc:
        raise PreconditionError([issue("profile", f"bad parameters for {profile}", "see build_warped", exc)]) from None


# --- band metrics ---


@dataclass(frozen=True, eq=False)
class BandMetric:
    """``dr² + g_ij(r, x) dx^i dx^j`` on a periodic unit-torus chart.

    ``components`` has shape ``(n_r, nx, ny, 2, 2)``; the chart samples
    ``x = i/nx, y = j/ny`` with the endpoint excluded, so periodicity is exact.
    """

    grid: RadialGrid
    components: FloatArray
    interfaces: tuple[float, ...] = ()
    cross_dim: int = 2
    label: str = ""

    def __post_init__(self) -> None:
        g = _frozen(self.components)
        object.__setattr__(self, "components", g)
        if self.cross_dim != 2:
            raise MetricError([issue("cross_dim", "only two-dimensional cross-sections are supported", 2, self.cross_dim)])
        if g.ndim != 5 or g.shape[0] != self.grid.n_points or g.shape[3:] != (2, 2):
            raise MetricError([issue("components", "expected shape (n_r, nx, ny, 2, 2)",
                                     f"({self.grid.n_points}, nx, ny, 2, 2)", g.shape)])
        if min(g.shape[1:3]) < 5:
            raise MetricError([issue("chart", "periodic stencils need at least 5 points per axis", ">= 5", g.shape[1:3])])
        if not np.all(np.isfinite(g)):
            raise MetricError([issue("components", "non-finite component", "finite", "nan/inf")])
        if not np.array_equal(g, np.swapaxes(g, -1, -2)):
            raise MetricError([issue("components", "slice metric is not symmetric", "g_ij = g_ji", "asymmetric")])
        lam = np.linalg.eigvalsh(g)
        if np.any(lam[..., 0] <= 0.0):
            idx = np.unravel_index(int(np.argmin(lam[..., 0])), lam.shape[:-1])
            raise MetricError([issue(f"components{list(map(int, idx))}", "slice metric not positive definite",
                                     "eigenvalues > 0", repr(float(lam[idx][0])))])

    @property
    def chart_shape(self) -> tuple[int, int]:
        return (self.components.shape[1], self.components.shape[2])

    @property
    def chart_spacing(self) -> tuple[float, float]:
        nx, ny = self.chart_shape
        return (1.0 / nx, 1.0 / ny)

    @classmethod
    def from_function(cls, grid: RadialGrid, nx: int, ny: int,
                      fn: Callable[[FloatArray, FloatArray, FloatArray], FloatArray],
                      label: str = "") -> BandMetric:
        """Sample ``fn(r, x, y) -> (..., 2, 2)`` on the grid and chart."""
        r, x, y = np.meshgrid(grid.r, np.arange(nx) / nx, np.arange(ny) / ny, indexing="ij")
        g = np.asarray(fn(r, x, y), dtype=np.float64)
        g = 0.5 * (g + np.swapaxes(g, -1, -2))
        return cls(grid, g, label=label)

    @classmethod
    def from_warped(cls, m: WarpedBallMetric, nx: int = 8, ny: int = 8) -> BandMetric:
        """Torus-chart band with slice metric ``w(r)²·identity``."""
        g = np.zeros((m.grid.n_points, nx, ny, 2, 2))
        g[..., 0, 0] = g[..., 1, 1] = (m.warp ** 2)[:, None, None]
        return cls(m.grid, g, interfaces=m.interfaces, label=f"band({m.label})")


@dataclass(frozen=True, eq=False)
class SymmetricForm:
    """A symmetric 2-tensor on a radial slice.

    ``basis="round"`` stores the scalar multiple of the round metric (any
    array shape); ``basis="chart"`` stores ``(..., 2, 2)`` matrices in the
    chart basis.
    """

    values: FloatArray
    basis: Literal["round", "chart"] = "round"

    def __post_init__(self) -> None:
        v = _frozen(self.values)
        object.__setattr__(self, "values", v)
        if self.basis == "chart" and (v.ndim < 2 or v.shape[-2:] != (2, 2)
                                      or not np.array_equal(v, np.swapaxes(v, -1, -2))):
            raise MetricError([issue("form", "chart forms must be symmetric 2x2 fields", "a_ij = a_ji", v.shape)])

    def scaled(self, k: float) -> SymmetricForm:
        return SymmetricForm(k * self.values, self.basis)

    def metric_derivative(self) -> SymmetricForm:
        """``(g^r)' = -2·II`` when this form is the second fundamental form."""
        return self.scaled(-2.0)


def relative_eigen_range(a: SymmetricForm, g: SymmetricForm) -> tuple[float, float]:
    """Range of the eigenvalues of ``a`` measured against the metric ``g``."""
    if a.basis != g.basis:
        raise MetricError([issue("form", "forms use different bases", g.basis, a.basis)])
    if a.basis == "round":
        if np.any(g.values <= 0.0):
            raise MetricError([issue("g", "slice metric is singular", "> 0", float(np.min(g.values)))])
        lam = a.values / g.values
        return float(np.min(lam)), float(np.max(lam))
    try:
        chol = np.linalg.cholesky(g.values)
    except np.linalg.LinAlgError:
        raise MetricError([issue("g", "slice metric is singular", "positive definite", "singular")]) from None
    inv = np.linalg.inv(chol)
    lam = np.linalg.eigvalsh(inv @ a.values @ np.swapaxes(inv, -1, -2))
    return float(np.min(lam)), float(np.max(lam))


# --- serialization ---


def write_warped_csv(m: WarpedBallMetric, path: str | Path) -> Path:
    """Write ``r,w`` rows with round-trip float reprs."""
    p = Path(path)
    with p.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["r", "w"])
        for r, w in zip(m.r.tolist(), m.warp.tolist()):
            writer.writerow([repr(r), repr(w)])
    return p


def read_warped_csv(path: str | Path) -> WarpedBallMetric:
    p = Path(path)
    try:
        with p.open(newline="") as fh:
            rows = list(csv.DictReader(fh))
    except FileNotFoundError:
        raise MetricError([issue(str(p), "metric file not found", "existing file", "missing")]) from None
    try:
        r = [float(row["r"]) for row in rows]
        w = [float(row["w"]) for row in rows]
    except (KeyError, TypeError, ValueError):
        raise MetricError([issue(str(p), "expected numeric columns r,w", "r,w", "malformed")]) from None
    return from_samples(r, w, label=f"csv:{p.name}")


def band_to_json(m: BandMetric) -> dict[str, Any]:
    nx, ny = m.chart_shape
    return {
        "grid": {"r_min": m.grid.r_min, "r_max": m.grid.r_max, "n_points": m.grid.n_points},
        "chart": {"nx": nx, "ny": ny},
        "interfaces": list(m.interfaces),
        "components": m.components.reshape(-1).tolist(),
    }


def band_from_json(data: dict[str, Any]) -> BandMetric:
    try:
        grid = RadialGrid(float(data["grid"]["r_min"]), float(data["grid"]["r_max"]), int(data["grid"]["n_points"]))
        nx, ny = int(data["chart"]["nx"]), int(data["chart"]["ny"])
        comps = np.asarray(data["components"], dtype=np.float64).reshape(grid.n_points, nx, ny, 2, 2)
    except (KeyError, TypeError, ValueError) as exc:
        raise MetricError([issue("band", f"malformed band metric JSON ({exc})", "grid/chart/components", "invalid")]) from None
    return BandMetric(grid, comps, interfaces=tuple(float(x) for x in data.get("interfaces", [])))


def write_band_json(m: BandMetric, path: str | Path) -> Path:
    p = Path(path)
    p.write_text(json.dumps(band_to_json(m), sort_keys=True))
    return p


def read_band_json(path: str | Path) -> BandMetric:
    try:
        return band_from_json(json.loads(Path(path).read_text()))
    except (FileNotFoundError, json.JSONDecodeError) as exc:
        raise MetricError([issue(str(path), f"cannot read band metric ({type(exc).__name__})", "JSON file", "unreadable")]) from None


__all__ = [
    "RadialGrid", "WarpedBallMetric", "BandMetric", "SymmetricForm",
    "build_warped", "parse_profile", "flat_ball", "round_cap", "hemisphere", "perturbed_ball",
    "from_samples", "piecewise_spline", "relative_eigen_range",
    "write_warped_csv", "read_warped_csv", "band_to_json", "band_from_json",
    "write_band_json", "read_band_json",
]
