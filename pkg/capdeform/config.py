"""Run configuration: flat dict schemas, JSON config files and environment variables."""

from __future__ import annotations

import json
import os
import types
from pathlib import Path
from typing import Any, Literal, TypeVar, cast as typing_cast, overload

from .errors import ConfigError, issue

_MISSING: object = object()
UnknownKeysMode = Literal["reject", "strip"]
_EnvCastT = TypeVar("_EnvCastT", str, int, float)


class Field:
    """Mark a schema key as optional, filled with ``default`` when absent.

    Example:
        >>> from capdeform.config import validate, Field
        >>> validate({"grid": int, "rho": Field(float, 0.1)}, {"grid": 513})
        {'grid': 513, 'rho': 0.1}
    """

    type: Any
    default: Any
    __slots__ = ("type", "default")

    def __init__(self, type: Any, default: Any = _MISSING) -> None:
        self.type = type
        self.default = default

    @property
    def has_default(self) -> bool:
        return self.default is not _MISSING

    def __repr__(self) -> str:
        if self.default is _MISSING:
            return f"Field({self.type!r})"
        return f"Field({self.type!r}, {self.default!r})"


def _matches(value: Any, expected: type) -> bool:
    # JSON has one number type; ints widen to float but bools never count.
    if type(value) is expected:
        return True
    return expected is float and type(value) is int


def _check_value(value: Any, expected: Any, key: str, errors: list[dict[str, str]]) -> Any:
    """Validate one value against a type, a union of types or a predicate."""
    options = expected.__args__ if isinstance(expected, types.UnionType) else (expected,)
    if all(type(t) is type for t in options):
        for t in options:
            if _matches(value, t):
                return float(value) if t is float else value
        names = " | ".join(t.__name__ for t in options)
        errors.append(issue(key, f"expected {names}, got {type(value).__name__}", names, type(value).__name__))
        return _MISSING
    if callable(expected):
        try:
            ok = expected(value)
        except Exception as exc:
            errors.append(issue(key, f"custom validation failed ({type(exc).__name__}: {exc})", "callable", "failed"))
            return _MISSING
        if ok:
            return value
        errors.append(issue(key, "custom validation failed", "callable", "failed"))
        return _MISSING
    raise TypeError(f"invalid schema value for key '{key}': {expected!r}")


def validate(
    schema: dict[str, Any],
    data: dict[str, Any],
    *,
    unknown_keys: UnknownKeysMode = "reject",
) -> dict[str, Any]:
    """Validate a flat config dict against a schema dict

    Args:
        schema: Dict mapping keys to expected types, unions of
                types, predicates, or `Field` markers for
                optional keys.
        data: The dict to validate.
        unknown_keys: How to handle extra keys ("reject" or
                      "strip"). Default "reject".

    Returns:
        A new plain dict with defaults filled in.

    Raises:
        ConfigError: If any key fails validation. Every failure is
                     collected before raising.
    """
    if unknown_keys not in ("reject", "strip"):
        raise ValueError("unknown_keys must be 'reject' or 'strip'")
    errors: list[dict[str, str]] = []
    result: dict[str, Any] = {}
    for key, expected in schema.items():
        if key not in data:
            if not isinstance(expected, Field):
                errors.append(issue(key, "missing required key", "required", "missing"))
            elif expected.has_default:
                result[key] = expected.default
            continue
        exp = expected.type if isinstance(expected, Field) else expected
        checked = _check_value(data[key], exp, key, errors)
        if checked is not _MISSING:
            result[key] = checked
    if unknown_keys == "reject":
        errors.extend(issue(key, "unknown key", "known", "unknown") for key in data if key not in schema)
    if errors:
        raise ConfigError(errors)
    return result


def load_json_config(path: str | Path) -> dict[str, Any]:
    """Read a JSON config file into a dict; malformed files raise ConfigError."""
    p = Path(path)
    try:
        raw = json.loads(p.read_text())
    except FileNotFoundError:
        raise ConfigError([issue(str(p), "config file not found", "existing file", "missing")]) from None
    except json.JSONDecodeError as exc:
        raise ConfigError([issue(str(p), f"invalid JSON ({exc.msg} at line {exc.lineno})",
                                 "JSON object", "malformed")]) from None
    if type(raw) is not dict:
        raise ConfigError([issue(str(p), "config root must be an object", "dict", type(raw).__name__)])
    return typing_cast(dict[str, Any], raw)


@overload
def env(name: str, cast: type[_EnvCastT]) -> _EnvCastT:
    ...


@overload
def env(name: str, cast: type[_EnvCastT], default: _EnvCastT) -> _EnvCastT:
    ...


def env(name: str, cast: type[_EnvCastT], default: object = _MISSING) -> _EnvCastT:
    """Read and type-cast an environment variable

    Args:
        name: The environment variable name.
        cast: Target type (str, int, float).
        default: Default value if env var is not set.
                 Defaults are NOT type-checked.

    Raises:
        ConfigError: If the env var is missing (with no
                     default) or cannot be cast.

    Example:
        >>> import os; os.environ["CAPDEFORM_FLOW_MAX_STEPS"] = "5000"
        >>> env("CAPDEFORM_FLOW_MAX_STEPS", int)
        5000
        >>> del os.environ["CAPDEFORM_FLOW_MAX_STEPS"]
    """
    value = os.environ.get(name)
    if value is None:
        if default is not _MISSING:
            return typing_cast(_EnvCastT, default)
        raise ConfigError([issue(name, "missing required env var", "set", "unset")])
    try:
        return cast(value.strip())
    except ValueError:
        raise ConfigError([issue(name, f"cannot coerce '{value}' to {cast.__name__}", cast.__name__, value)]) from None
