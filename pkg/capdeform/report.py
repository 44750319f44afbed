"""Report files: per-sample verdict tables, run manifests and flow trajectories."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from pathlib import Path
from typing import Any, Iterable, Mapping

from .errors import ReportError, issue
from .flow import FlowTrajectory
from .pipeline import PathSample

logger = logging.getLogger(__name__)

FORMATS = ("csv", "json")
COLUMNS = ("stage", "param", "min_ricci_eig", "max_II_eig", "pass")
TRAJECTORY_COLUMNS = ("t", "pinching", "asymmetry", "min_ricci", "k_max", "volume", "mean_scalar")


def _cell(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _jsonable(value: Any) -> Any:
    """Plain JSON data; non-finite floats become strings so the output stays strict JSON."""
    if isinstance(value, Mapping):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if hasattr(value, "tolist"):
        return _jsonable(value.tolist())
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    if value is None or isinstance(value, (bool, int, float, str)):
        return value
    return str(value)


def _dump(data: Any) -> str:
    return json.dumps(_jsonable(data), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _prepare(out: str | Path) -> Path:
    p = Path(out)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ReportError([issue(str(p), f"cannot create output directory ({exc.strerror})",
                                 "writable directory", "unwritable")]) from None
    return p


def _write(path: Path, text: str) -> Path:
    try:
        with path.open("w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise ReportError([issue(str(path), f"cannot write report ({exc.strerror})",
                                 "writable file", "unwritable")]) from None
    return path


def _csv_text(rows: Iterable[Mapping[str, Any]], columns: tuple[str, ...]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row[c]) for c in columns])
    return buf.getvalue()


def emit_report(samples: Iterable[PathSample], format: str, out: str | Path,
                manifest: Mapping[str, Any] | None = None) -> list[Path]:
    """Write ``report.csv`` or ``report.json`` plus ``manifest.json`` under ``out``.

    Output bytes depend only on the samples and the manifest: floats use
    ``repr``, keys are sorted and lines end in ``\\n``.
    """
    if format not in FORMATS:
        raise ReportError([issue("format", "unknown report format", " | ".join(FORMATS), format)])
    rows = [s.to_row() for s in samples]
    if not rows:
        raise ReportError([issue("samples", "nothing to report", "non-empty", 0)])
    directory = _prepare(out)
    if format == "csv":
        report = _write(directory / "report.csv", _csv_text(rows, COLUMNS))
    else:
        report = _write(directory / "report.json", _dump(rows))
    written = [report, _write(directory / "manifest.json", _dump(dict(manifest or {})))]
    failed = sum(not r["pass"] for r in rows)
    logger.info("wrote %d samples (%d failing) to %s", len(rows), failed, report)
    return written


def write_trajectory(traj: FlowTrajectory, out: str | Path) -> list[Path]:
    """``trajectory.csv`` with one row per stored state and ``flow_manifest.json``."""
    directory = _prepare(out)
    table = _write(directory / "trajectory.csv", _csv_text(traj.diagnostics, TRAJECTORY_COLUMNS))
    manifest = _write(directory / "flow_manifest.json", _dump(traj.manifest()))
    logger.info("wrote %d flow states to %s", len(traj.diagnostics), table)
    return [table, manifest]


def write_json(data: Any, path: str | Path) -> Path:
    p = Path(path)
    _prepare(p.parent)
    return _write(p, _dump(data))
