"""capdeform - curvature, gluing, Ricci flow and deformation paths of rotationally symmetric 3-balls."""

__version__: str = "0.1.0"
__all__ = [
    "__version__",
    "WarpedBallMetric",
    "BandMetric",
    "build_warped",
    "curvature",
    "warped_curvature",
    "fd_riemann",
    "crosscheck",
    "shift",
    "double",
    "glue_interpolate",
    "smooth_c1",
    "boundary_perturb",
    "conformal_collar",
    "FlowState",
    "FlowOptions",
    "run_flow",
    "restrict_half",
    "check_membership",
    "build_path",
    "emit_report",
    "CapdeformError",
]

from .errors import CapdeformError
from .metrics import BandMetric, WarpedBallMetric, build_warped
from .curvature import curvature, warped_curvature
from .oracle import crosscheck, fd_riemann
from .deform import boundary_perturb, conformal_collar, double, glue_interpolate, shift, smooth_c1
from .flow import FlowOptions, FlowState, restrict_half, run_flow
from .pipeline import build_path, check_membership
from .report import emit_report
