"""Class-membership verdicts and sampled deformation paths between metrics.

A path is a list of stages, each a one-parameter family of warped balls
sampled at ``samples_per_stage`` parameter values. For a strictly convex
input with positive Ricci curvature the stages are

    alpha   shifts of g from 0 to ε, ending at g₁
    beta    shifts of g₂ (the glued, smoothed half) from ε down to δ₀
    sigma   δ(s)-shifts of the perturbed g₂, s running from 1 to 0
    gamma   perturbed halves of the normalized flow of the doubled g₂
    tau     δ(s)-shifts of the perturbed flow endpoint, s from 0 to 1

and an input with merely non-negative Ricci curvature is first pushed
through a conformal collar deformation (stage ``conformal``).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator, Literal, Sequence

import numpy as np

from . import __version__
from .curvature import boundary_ii_eigenvalues, warped_curvature
from .deform import (
    boundary_perturb,
    conformal_collar,
    conformal_critical_s,
    delta_schedule,
    double,
    glue_interpolate,
    scaled_perturb_path,
    shift,
    smooth_c1,
)
from .errors import CapdeformError, PreconditionError, VerdictError, issue
from .flow import FlowOptions, FlowTrajectory, resolving_points, restrict_half, run_flow
from .metrics import WarpedBallMetric

logger = logging.getLogger(__name__)

ClassName = Literal["C", "C0", "D"]
STAGES = ("conformal", "alpha", "beta", "sigma", "gamma", "tau")
TOL_SCALE = 1e-7
MAX_SEARCH_HALVINGS = 8


@dataclass(frozen=True)
class MembershipVerdict:
    class_queried: str
    min_ricci_eig: float
    max_ii_eig: float
    tol: float
    passed: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "class": self.class_queried,
            "min_ricci_eig": self.min_ricci_eig,
            "max_II_eig": self.max_ii_eig,
            "tol": self.tol,
            "pass": self.passed,
        }


def _decide(cls: str, min_ric: float, max_ii: float, tol: float) -> bool:
    if cls == "C":
        return min_ric > tol and max_ii < -tol
    if cls == "C0":
        return min_ric > tol and max_ii <= tol
    return min_ric >= -tol and max_ii < -tol


def check_membership(m: WarpedBallMetric, cls: str, tol: float) -> MembershipVerdict:
    """Whether ``m`` lies in class C, C0 or D up to ``tol``.

    Example:
        >>> from capdeform.metrics import round_cap
        >>> check_membership(round_cap(0.7853981633974483, 257), "C", 1e-7).passed
        True
    """
    if cls not in ("C", "C0", "D"):
        raise PreconditionError([issue("class", "unknown metric class", "C | C0 | D", cls)])
    if not tol >= 0.0:
        raise PreconditionError([issue("tol", "tolerance must be non-negative", ">= 0", tol)])
    if m.doubled or abs(m.grid.r_max) > 1e-12:
        raise PreconditionError([issue("m", "membership needs a ball with boundary at r = 0",
                                       "ball", "doubled" if m.doubled else m.grid.r_max)])
    min_ric = warped_curvature(m).min_ricci_eig
    _, max_ii = boundary_ii_eigenvalues(m)
    return MembershipVerdict(cls, min_ric, max_ii, tol, _decide(cls, min_ric, max_ii, tol))


@dataclass(frozen=True, eq=False)
class PathSample:
    stage: str
    param: float
    metric: WarpedBallMetric
    verdict: MembershipVerdict

    def to_row(self) -> dict[str, Any]:
        return {
            "stage": self.stage,
            "param": self.param,
            "min_ricci_eig": self.verdict.min_ricci_eig,
            "max_II_eig": self.verdict.max_ii_eig,
            "pass": self.verdict.passed,
        }


@dataclass
class PathResult:
    """Ordered path samples plus every constant the run chose."""

    samples: list[PathSample]
    constants: dict[str, Any] = field(default_factory=dict)
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def __iter__(self) -> Iterator[PathSample]:
        return iter(self.samples)

    def __len__(self) -> int:
        return len(self.samples)

    def __getitem__(self, i: int) -> PathSample:
        return self.samples[i]

    @property
    def passed(self) -> bool:
        return all(s.verdict.passed for s in self.samples)

    @property
    def failures(self) -> list[PathSample]:
        return [s for s in self.samples if not s.verdict.passed]

    def manifest(self) -> dict[str, Any]:
        per_stage: dict[str, dict[str, int]] = {}
        for s in self.samples:
            entry = per_stage.setdefault(s.stage, {"samples": 0, "passed": 0})
            entry["samples"] += 1
            entry["passed"] += int(s.verdict.passed)
        return {
            "version": __version__,
            "constants": self.constants,
            "diagnostics": self.diagnostics,
            "verdicts": per_stage,
            "passed": self.passed,
        }


# --- constants ---


@dataclass(frozen=True)
class PathConstants:
    eps: float
    rho: float
    delta_m: float
    eta: float
    r0: float
    delta0: float | None
    delta1: float
    flow_grid: int | None
    samples_per_stage: int
    tol: float
    curvature_scale: float
    collar_eps: float


def curvature_scale(m: WarpedBallMetric) -> float:
    """Largest Ricci magnitude of ``m``, floored by ``1/r_min²``."""
    field_ = warped_curvature(m)
    peak = float(np.max(np.abs(np.concatenate([field_.ricci_radial, field_.ricci_tangential]))))
    return max(peak, 1.0 / m.grid.r_min ** 2)


def resolve_constants(g: WarpedBallMetric, params: dict[str, Any] | None = None) -> PathConstants:
    """Fill every unset constant with its documented default for ``g``.

    ``eps = 0.2·|r_min|``, ``rho = eps/2``, ``delta_m = rho/4``,
    ``r0 = eps`` and ``tol = 1e-7·curvature scale``; ``delta0`` stays unset
    and is searched later. An unset ``flow_grid`` is chosen after smoothing so
    that the flow grid puts 8 spacings across the mollifier width.
    """
    p = dict(params or {})
    size = abs(g.grid.r_min)
    eps = p.get("eps") or 0.2 * size
    rho = p.get("rho") or 0.5 * eps
    delta_m = p.get("delta_m") or 0.25 * rho
    scale = curvature_scale(g)
    out = PathConstants(
        eps=float(eps),
        rho=float(rho),
        delta_m=float(delta_m),
        eta=float(p.get("eta") or 0.01),
        r0=float(p.get("r0") or eps),
        delta0=p.get("delta0"),
        delta1=float(p.get("delta1") or 0.1),
        flow_grid=None if p.get("flow_grid") is None else int(p["flow_grid"]),
        samples_per_stage=int(p.get("samples_per_stage") or 20),
        tol=float(p.get("tol") or TOL_SCALE * scale),
        curvature_scale=scale,
        collar_eps=min(0.5, 0.5 * size),
    )
    problems = []
    if not 0.0 < out.eps < size:
        problems.append(issue("eps", "shift outside the ball", f"0 < eps < {size}", out.eps))
    if not out.rho + 2.0 * out.delta_m < out.eps:
        problems.append(issue("rho", "glued band and collar must stay inside the shifted-away shell",
                              f"rho + 2*delta_m < {out.eps}", out.rho + 2.0 * out.delta_m))
    if out.delta0 is not None and not 0.0 < out.delta0 <= out.eps:
        problems.append(issue("delta0", "final shift outside (0, eps]", f"(0, {out.eps}]", out.delta0))
    if out.samples_per_stage < 2:
        problems.append(issue("samples_per_stage", "need both stage endpoints", ">= 2", out.samples_per_stage))
    if problems:
        raise PreconditionError(problems)
    return out


# --- path assembly ---


def _grid(n: int, start: float = 0.0, stop: float = 1.0) -> list[float]:
    return [start + (stop - start) * k / (n - 1) for k in range(n)]


def _stage(name: str, params: Sequence[float], make: Callable[[float], WarpedBallMetric],
           target: str, tol: float) -> list[PathSample]:
    out = []
    for u in params:
        m = make(u)
        out.append(PathSample(name, u, m, check_membership(m, target, tol)))
    bad = sum(not s.verdict.passed for s in out)
    logger.info("stage %s: %d samples, %d failing %s", name, len(out), bad, target)
    return out


def _gap(a: WarpedBallMetric, b: WarpedBallMetric, n: int = 257) -> float:
    """Sup distance of the warping functions on the radii both balls share."""
    common = np.linspace(max(a.grid.r_min, b.grid.r_min), 0.0, n)
    return float(np.max(np.abs(a.interpolant(common) - b.interpolant(common))))


def _sigma(g2: WarpedBallMetric, c: PathConstants, eta: float, delta0: float) -> Callable[[float], WarpedBallMetric]:
    def make(s: float) -> WarpedBallMetric:
        return shift(scaled_perturb_path(g2, eta, c.r0, s), delta_schedule(s, delta0, c.delta1))
    return make


def _flow_samples(traj: FlowTrajectory, n: int) -> list[int]:
    times = np.array([st.t for st in traj.states])
    picks = []
    for target in _grid(n, 0.0, float(times[-1]))[1:]:
        picks.append(int(np.argmin(np.abs(times - target))))
    return picks


def _search_eta(bases: list[WarpedBallMetric], c: PathConstants, target: str) -> float:
    eta = c.eta
    floor = c.tol if target == "C" else 0.0
    for base in bases:
        _, rep = boundary_perturb(base, eta, c.r0, ensure_positive=True, tol=floor)
        eta = min(eta, rep.eta)
    return eta


def _search_delta0(c: PathConstants, bases: list[WarpedBallMetric], eta: float, target: str) -> float:
    delta0 = c.delta0 if c.delta0 is not None else 0.25 * c.eps
    n = c.samples_per_stage
    for _ in range(MAX_SEARCH_HALVINGS + 1):
        ok = True
        for base in bases:
            for s in _grid(n):
                m = _sigma(base, c, eta, delta0)(s)
                if not check_membership(m, target, c.tol).passed:
                    ok = False
                    break
            if not ok:
                break
        if ok or c.delta0 is not None:
            return delta0
        logger.debug("delta0=%g fails %s, halving", delta0, target)
        delta0 *= 0.5
    raise PreconditionError([issue("delta0", "no final shift keeps the perturbed paths in class",
                                   target, delta0)])


def _search_s0(g: WarpedBallMetric, c: PathConstants, s_max: float) -> float:
    s0 = s_max
    for _ in range(MAX_SEARCH_HALVINGS + 1):
        try:
            m, rep = conformal_collar(g, c.collar_eps, s0)
        except CapdeformError:
            s0 *= 0.5
            continue
        # no resolvable collar point leaves min_ricci_collar at NaN
        if check_membership(m, "D", c.tol).passed and not rep.min_ricci_collar <= 0.0:
            return s0
        s0 *= 0.5
    raise PreconditionError([issue("s", "no conformal parameter gives a class-D collar", "> 0", s0)])


def build_path(g: WarpedBallMetric, theorem: int, params: dict[str, Any] | None = None,
               *, strict: bool = True, flow_options: FlowOptions | None = None) -> PathResult:
    """Sample a path from ``g`` to a strictly convex round cap.

    ``theorem=2`` inputs must be in class C and every sample is checked against
    C. ``theorem=1`` inputs must be in class D; a conformal collar stage comes
    first and every sample is checked against D. With ``strict`` a failing
    sample raises :class:`VerdictError`; otherwise failures stay in the result.
    """
    if theorem not in (1, 2):
        raise PreconditionError([issue("theorem", "unknown route", "1 | 2", theorem)])
    c = resolve_constants(g, params)
    target = "C" if theorem == 2 else "D"
    entry = check_membership(g, target, c.tol)
    if not entry.passed:
        raise PreconditionError([issue("g", f"input metric is not in class {target}", target,
                                       f"min Ric {entry.min_ricci_eig!r}, max II {entry.max_ii_eig!r}")])
    n = c.samples_per_stage
    samples: list[PathSample] = []
    constants: dict[str, Any] = {"profile": g.label, "theorem": theorem, "grid": g.grid.n_points}
    diagnostics: dict[str, Any] = {}

    base = g
    if theorem == 1:
        critical = conformal_critical_s(g, c.collar_eps)
        s0 = _search_s0(g, c, min(0.05, 0.5 * critical))
        logger.info("conformal pre-step: s0=%g (critical s=%g)", s0, critical)
        samples += _stage("conformal", _grid(n, 0.0, s0),
                          lambda s: conformal_collar(g, c.collar_eps, s)[0], target, c.tol)
        base = samples[-1].metric
        constants.update(s0=s0, collar_eps=c.collar_eps, critical_s=critical)

    eps = c.eps
    doubled = double(base)
    glued, glue_diag = glue_interpolate(doubled, c.rho)
    smoothed, smooth_rep = smooth_c1(glued, c.delta_m, c.rho, tol=c.tol)
    g2 = smoothed.half()
    logger.info("glued at rho=%g (margin %.4g), smoothed with delta_m=%g", c.rho, glue_diag.eqper_margin,
                smooth_rep.delta_m)

    n_flow = c.flow_grid or resolving_points(smoothed, smooth_rep.delta_m)
    opts = flow_options or FlowOptions(mode="normalized", gauge="arclength", n_points=n_flow)
    traj = run_flow(smoothed, opts)
    picks = _flow_samples(traj, n)
    halves = [restrict_half(traj.states[i], n_points=g.grid.n_points) for i in picks]
    g_h = halves[-1]

    eta = _search_eta([g2, *halves], c, target)
    delta0 = _search_delta0(c, [g2, g_h], eta, target)
    logger.info("searched constants: eta=%g, delta0=%g", eta, delta0)

    samples += _stage("alpha", _grid(n, 0.0, eps), lambda u: shift(base, u), target, c.tol)
    samples += _stage("beta", _grid(n), lambda u: shift(g2, eps - u * (eps - delta0)), target, c.tol)
    samples += _stage("sigma", _grid(n, 1.0, 0.0), _sigma(g2, c, eta, delta0), target, c.tol)

    gamma_metrics = {0.0: boundary_perturb(g2, eta, c.r0)[0]}
    for i, half in zip(picks, halves):
        if i == 0:
            continue
        gamma_metrics[traj.states[i].t] = boundary_perturb(half, eta, c.r0)[0]
    samples += _stage("gamma", sorted(gamma_metrics), lambda t: gamma_metrics[t], target, c.tol)
    samples += _stage("tau", _grid(n), _sigma(g_h, c, eta, delta0), target, c.tol)

    gaps = {}
    for a, b in zip(samples[:-1], samples[1:]):
        if a.stage != b.stage:
            gaps[f"{a.stage}->{b.stage}"] = _gap(a.metric, b.metric)
    constants.update(
        eps=eps, rho=c.rho, delta_m=smooth_rep.delta_m, eta=eta, r0=c.r0, delta0=delta0,
        delta1=c.delta1, flow_grid=traj.final.n_points, samples_per_stage=n, tol=c.tol,
        curvature_scale=c.curvature_scale,
    )
    diagnostics.update(
        glue=glue_diag.to_dict(),
        smoothing={"min_ricci_band": smooth_rep.min_ricci_band, "min_ricci_global": smooth_rep.min_ricci_global,
                   "attempts": len(smooth_rep.attempts)},
        flow=dict(traj.manifest(), min_ricci=traj.min_ricci),
        stage_gaps=gaps,
    )
    result = PathResult(samples, constants, diagnostics)
    if strict and not result.passed:
        first = result.failures[0]
        raise VerdictError([issue(f"{s.stage}[{s.param!r}]", f"sample fails class {target}", target,
                                  f"min Ric {s.verdict.min_ricci_eig!r}, max II {s.verdict.max_ii_eig!r}")
                            for s in result.failures], stage=first.stage, param=first.param)
    return result

