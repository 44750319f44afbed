"""Command line entry point: ``capdeform <command> [options]``.

Settings resolve in order: built-in defaults, then the ``--config`` JSON
file, then explicit flags. Exit status is 0 when every verdict passes, 2 when
a verdict fails and 1 on usage or runtime errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .config import env, load_json_config
from .curvature import boundary_ii_eigenvalues, warped_curvature
from .deform import (
    boundary_perturb,
    conformal_collar,
    double,
    equidistant_check,
    glue_interpolate,
    shift,
    smooth_c1,
)
from .errors import CapdeformError, ConfigError, issue
from .flow import FlowOptions, resolving_points, run_flow
from .metrics import WarpedBallMetric, build_warped, write_warped_csv
from .oracle import crosscheck
from .pipeline import build_path, check_membership, curvature_scale, resolve_constants
from .report import emit_report, write_json, write_trajectory
from .schema import PathConfig, check_path_config

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VERDICT = 2

EPILOG = """\
examples:
  capdeform curvature --profile round_cap:0.785 --grid 1025
  capdeform glue --profile flat_ball --rho 0.1
  capdeform flow --profile flat_ball --rho 0.1 --flow-grid 1025
  capdeform path --profile round_cap:1.0472 --theorem 2 --out run1
  capdeform report --out run1
"""


def _common(parser: argparse.ArgumentParser) -> None:
    # SUPPRESS keeps unset flags out of the namespace so config values survive
    s = argparse.SUPPRESS
    parser.add_argument("--config", default=s, help="JSON file with PathConfig keys")
    parser.add_argument("--profile", default=s, help="metric profile, e.g. flat_ball or round_cap:<a>")
    parser.add_argument("--grid", type=int, default=s, help="radial gridpoints of the input ball")
    parser.add_argument("--tol", type=float, default=s, help="verdict tolerance")
    parser.add_argument("--out", default=s, help="output directory")
    parser.add_argument("-v", "--verbose", action="store_true", default=s, help="debug logging")


def _construction(parser: argparse.ArgumentParser) -> None:
    s = argparse.SUPPRESS
    parser.add_argument("--rho", type=float, default=s, help="gluing band half-width")
    parser.add_argument("--eps", type=float, default=s, help="shift amount of the alpha stage")
    parser.add_argument("--delta-m", dest="delta_m", type=float, default=s, help="mollifier width")
    parser.add_argument("--flow-grid", dest="flow_grid", type=int, default=s,
                        help="odd flow gridpoint count (default: 8 spacings across delta_m)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="capdeform",
        description="Curvature, gluing, Ricci flow and deformation paths of rotationally symmetric 3-balls.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=EPILOG,
    )
    parser.add_argument("--version", action="version", version=f"capdeform {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("curvature", help="curvature summary and class verdicts of a profile")
    _common(p)

    p = sub.add_parser("glue", help="double, glue and smooth a ball")
    _common(p)
    _construction(p)

    p = sub.add_parser("flow", help="Ricci flow of the glued and smoothed double")
    _common(p)
    _construction(p)
    p.add_argument("--mode", choices=("normalized", "raw"), default="normalized")
    p.add_argument("--t-max", dest="t_max", type=float, default=None)
    p.add_argument("--pinching-target", dest="pinching_target", type=float, default=0.01)

    p = sub.add_parser("deform", help="apply one deformation and report verdicts")
    _common(p)
    p.add_argument("--kind", choices=("shift", "perturb", "conformal"), required=True)
    p.add_argument("--param", type=float, required=True, help="shift amount, eta or conformal s")
    p.add_argument("--r0", type=float, default=argparse.SUPPRESS, help="bump support half-width")
    p.add_argument("--collar-eps", dest="collar_eps", type=float, default=None)

    p = sub.add_parser("path", help="sample a deformation path and write the report")
    _common(p)
    _construction(p)
    s = argparse.SUPPRESS
    p.add_argument("--theorem", type=int, choices=(1, 2), default=s)
    p.add_argument("--eta", type=float, default=s)
    p.add_argument("--r0", type=float, default=s)
    p.add_argument("--delta0", type=float, default=s)
    p.add_argument("--delta1", type=float, default=s)
    p.add_argument("--samples-per-stage", dest="samples_per_stage", type=int, default=s)
    p.add_argument("--format", choices=("csv", "json"), default=s)

    p = sub.add_parser("verify", help="cross-check the curvature engine against the finite-difference oracle")
    _common(p)
    p.add_argument("--step", type=float, default=1e-4, help="oracle difference step")
    p.add_argument("--stride", type=int, default=8, help="check every stride-th gridpoint")

    p = sub.add_parser("report", help="summarize an existing report directory")
    _common(p)
    return parser


# --- settings ---


def resolve_settings(args: argparse.Namespace) -> dict[str, Any]:
    """Defaults < config file < flags, validated against :class:`PathConfig`."""
    flags = vars(args)
    merged = PathConfig.defaults()
    if "config" in flags:
        merged.update(load_json_config(flags["config"]))
    merged.update({k: v for k, v in flags.items() if k in PathConfig.__schema_fields__})
    cfg = dict(PathConfig.parse(merged))
    return check_path_config(cfg)


def configure_logging(verbose: bool) -> None:
    level_name = "DEBUG" if verbose else env("CAPDEFORM_LOG_LEVEL", str, "WARNING").upper()
    level = logging.getLevelName(level_name)
    if not isinstance(level, int):
        raise ConfigError([issue("CAPDEFORM_LOG_LEVEL", "unknown log level", "DEBUG | INFO | WARNING | ERROR",
                                 level_name)])
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _emit(data: Any) -> None:
    print(json.dumps(data, sort_keys=True, indent=2, default=str))


def _ball(cfg: dict[str, Any]) -> WarpedBallMetric:
    return build_warped(cfg["profile"], n_points=cfg["grid"])


def _verdicts(m: WarpedBallMetric, tol: float) -> dict[str, dict[str, Any]]:
    return {cls: check_membership(m, cls, tol).to_dict() for cls in ("C", "C0", "D")}


def _tol(m: WarpedBallMetric, cfg: dict[str, Any]) -> float:
    return float(cfg["tol"]) if cfg["tol"] is not None else 1e-7 * curvature_scale(m)


# --- commands ---


def cmd_curvature(args: argparse.Namespace, cfg: dict[str, Any]) -> int:
    m = _ball(cfg)
    field_ = warped_curvature(m)
    lo, hi = boundary_ii_eigenvalues(m)
    _emit({
        "profile": cfg["profile"],
        "grid": m.grid.n_points,
        "min_ricci_eig": field_.min_ricci_eig,
        "k_mixed": [float(np.min(field_.k_mixed)), float(np.max(field_.k_mixed))],
        "k_tan": [float(np.min(field_.k_tan)), float(np.max(field_.k_tan))],
        "boundary_ii_eigenvalues": [lo, hi],
        "verdicts": _verdicts(m, _tol(m, cfg)),
    })
    return EXIT_OK


def _glued(m: WarpedBallMetric, cfg: dict[str, Any]) -> tuple[Any, ...]:
    c = resolve_constants(m, cfg)
    doubled = double(m)
    glued, diag = glue_interpolate(doubled, c.rho)
    smoothed, rep = smooth_c1(glued, c.delta_m, c.rho, tol=c.tol)
    return c, doubled, glued, diag, smoothed, rep


def cmd_glue(args: argparse.Namespace, cfg: dict[str, Any]) -> int:
    m = _ball(cfg)
    c, doubled, glued, diag, smoothed, rep = _glued(m, cfg)
    eq = equidistant_check(doubled, glued, c.rho)
    out = Path(cfg["out"])
    write_warped_csv(smoothed, _mkdir(out) / "smoothed.csv")
    write_json({"glue": diag.to_dict(), "smoothing": vars(rep), "equidistant": vars(eq)}, out / "glue.json")
    ok = diag.eqper_margin > 0.0 and rep.passed and eq.passed
    _emit({"rho": c.rho, "delta_m": rep.delta_m, "eqper_margin": diag.eqper_margin,
           "min_ricci_band": rep.min_ricci_band, "min_ricci_global": rep.min_ricci_global,
           "equidistant": eq.passed, "pass": ok})
    return EXIT_OK if ok else EXIT_VERDICT


def _mkdir(p: Path) -> Path:
    p.mkdir(parents=True, exist_ok=True)
    return p


def cmd_flow(args: argparse.Namespace, cfg: dict[str, Any]) -> int:
    m = _ball(cfg)
    *_, smoothed, rep = _glued(m, cfg)
    opts = FlowOptions(mode=args.mode, gauge="arclength" if args.mode == "normalized" else "ricci",
                       n_points=cfg["flow_grid"] or resolving_points(smoothed, rep.delta_m),
                       t_max=args.t_max, pinching_target=args.pinching_target)
    traj = run_flow(smoothed, opts)
    write_trajectory(traj, cfg["out"])
    manifest = traj.manifest()
    _emit({k: manifest[k] for k in ("termination", "steps", "final_t", "final_pinching", "T_est")})
    ok = traj.termination != "t_max" or args.t_max is not None
    return EXIT_OK if ok else EXIT_VERDICT


def cmd_deform(args: argparse.Namespace, cfg: dict[str, Any]) -> int:
    m = _ball(cfg)
    if args.kind == "shift":
        out = shift(m, args.param)
    elif args.kind == "perturb":
        r0 = float(cfg["r0"]) if cfg["r0"] is not None else 0.2 * abs(m.grid.r_min)
        out, _ = boundary_perturb(m, args.param, r0)
    else:
        collar_eps = args.collar_eps if args.collar_eps is not None else min(0.5, 0.5 * abs(m.grid.r_min))
        out, _ = conformal_collar(m, collar_eps, args.param)
    write_warped_csv(out, _mkdir(Path(cfg["out"])) / "deformed.csv")
    _emit({"kind": args.kind, "param": args.param, "verdicts": _verdicts(out, _tol(out, cfg))})
    return EXIT_OK


def cmd_path(args: argparse.Namespace, cfg: dict[str, Any]) -> int:
    m = _ball(cfg)
    result = build_path(m, cfg["theorem"], cfg, strict=False)
    emit_report(result, cfg["format"], cfg["out"], result.manifest())
    summary = result.manifest()["verdicts"]
    _emit({"passed": result.passed, "samples": len(result), "stages": summary})
    if not result.passed:
        first = result.failures[0]
        logger.error("sample %s[%r] failed its class", first.stage, first.param)
        return EXIT_VERDICT
    return EXIT_OK


def cmd_verify(args: argparse.Namespace, cfg: dict[str, Any]) -> int:
    m = _ball(cfg)
    tol = float(cfg["tol"]) if cfg["tol"] is not None else max(1e-6, 10.0 * m.spacing ** 2)
    rep = crosscheck(m, tol, h=args.step, stride=args.stride)
    _emit({"tol": tol, "checked": rep.n_checked, "entries": rep.entries, "pass": rep.passed})
    return EXIT_OK if rep.passed else EXIT_VERDICT


def _read_rows(out: Path) -> list[dict[str, Any]]:
    if (out / "report.json").exists():
        rows = json.loads((out / "report.json").read_text())
        return [dict(r) for r in rows]
    if (out / "report.csv").exists():
        with (out / "report.csv").open(newline="") as fh:
            return [dict(r, **{"pass": r["pass"] == "true"}) for r in csv.DictReader(fh)]
    raise CapdeformError([issue(str(out), "no report found", "report.csv or report.json", "missing")])


def cmd_report(args: argparse.Namespace, cfg: dict[str, Any]) -> int:
    rows = _read_rows(Path(cfg["out"]))
    stages: dict[str, dict[str, int]] = {}
    for r in rows:
        entry = stages.setdefault(r["stage"], {"samples": 0, "passed": 0})
        entry["samples"] += 1
        entry["passed"] += int(bool(r["pass"]))
    ok = all(bool(r["pass"]) for r in rows)
    _emit({"samples": len(rows), "stages": stages, "passed": ok})
    return EXIT_OK if ok else EXIT_VERDICT


COMMANDS: dict[str, Callable[[argparse.Namespace, dict[str, Any]], int]] = {
    "curvature": cmd_curvature,
    "glue": cmd_glue,
    "flow": cmd_flow,
    "deform": cmd_deform,
    "path": cmd_path,
    "verify": cmd_verify,
    "report": cmd_report,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    try:
        configure_logging(bool(getattr(args, "verbose", False)))
        cfg = resolve_settings(args)
        return COMMANDS[args.command](args, cfg)
    except CapdeformError as exc:
        for d in exc.issues:
            print(f"error: {d['path']}: {d['message']} (expected {d['expected']}, got {d['got']})",
                  file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
