"""Exception hierarchy with machine-readable issue lists."""

from __future__ import annotations

from typing import Any


def issue(path: str, message: str, expected: Any = "", got: Any = "") -> dict[str, str]:
    """Build one issue dict in the shape every capdeform error carries."""
    return {
        "path": path,
        "message": message,
        "expected": str(expected),
        "got": str(got),
    }


class CapdeformError(ValueError):
    """Base error with a machine-readable issues list

    Args:
        issues: List of issue dicts, each with keys
                ``path``, ``message``, ``expected``, ``got``.
                Dicts **must** contain at least ``path`` and
                ``message``; a ``KeyError`` is raised otherwise.

    Example:
        >>> from capdeform.errors import MetricError, issue
        >>> e = MetricError([issue("warp[3]", "non-positive warp sample", "> 0", "-0.1")])
        >>> str(e)
        'warp[3]: non-positive warp sample'
    """

    issues: list[dict[str, str]]
    __slots__ = ("issues",)

    def __init__(self, issues: list[dict[str, str]]) -> None:
        self.issues = [dict(d) for d in issues]
        super().__init__("\n".join(
            f"{d['path']}: {d['message']}" for d in self.issues
        ))

    def __reduce__(self) -> tuple[object, tuple[list[dict[str, str]]]]:
        # Keep structured issues intact for copy/deepcopy/pickle.
        return (self.__class__, (self.issues,))

    @classmethod
    def single(cls, path: str, message: str, expected: Any = "", got: Any = "") -> "CapdeformError":
        return cls([issue(path, message, expected, got)])


class ConfigError(CapdeformError):
    """Configuration file or flag values failed validation."""


class MetricError(CapdeformError):
    """Metric samples violate a representation invariant."""


class PreconditionError(CapdeformError):
    """An operation was called outside its admissible parameter range."""


class FlowError(CapdeformError):
    """Ricci flow integration could not proceed."""


class SmoothingError(CapdeformError):
    """No mollifier width in the search range kept Ricci curvature positive."""


class ConformalError(CapdeformError):
    """The conformal parameter flipped the boundary convexity verdict."""

    critical_s: float

    def __init__(self, issues: list[dict[str, str]], critical_s: float = float("nan")) -> None:
        super().__init__(issues)
        self.critical_s = critical_s

    def __reduce__(self) -> tuple[object, tuple[Any, ...]]:  # type: ignore[override]
        return (self.__class__, (self.issues, self.critical_s))


class VerdictError(CapdeformError):
    """A path sample failed its target class."""

    stage: str
    param: float

    def __init__(self, issues: list[dict[str, str]], stage: str = "", param: float = float("nan")) -> None:
        super().__init__(issues)
        self.stage = stage
        self.param = param

    def __reduce__(self) -> tuple[object, tuple[Any, ...]]:  # type: ignore[override]
        return (self.__class__, (self.issues, self.stage, self.param))


class ReportError(CapdeformError):
    """Report emission failed."""
