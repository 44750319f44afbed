"""Class-based config schemas compiled to plain dict schemas at definition time."""

import types
from typing import Any, ClassVar, Union, get_args, get_origin

from .config import Field, validate

_MISSING = object()


class ConfigSchema:
    """Compile annotated class attributes into a plain dict schema.

    Fields with a class-level default compile to ``Field(type, default)``;
    annotations may be plain types or unions of plain types.
    """

    __config_schema__: ClassVar[dict[str, Any]] = {}
    __schema_fields__: ClassVar[frozenset[str]] = frozenset()

    def __init__(self, *args: Any, **kwargs: Any) -> None:
        name = type(self).__name__
        raise TypeError(f"{name}: config schemas cannot be instantiated; use {name}.parse(data)")

    def __init_subclass__(cls) -> None:
        super().__init_subclass__()
        compiled: dict[str, Any] = {}
        for field_name, annotation in dict(cls.__dict__.get("__annotations__", {})).items():
            value = _compile_annotation(cls, field_name, annotation)
            default = cls.__dict__.get(field_name, _MISSING)
            compiled[field_name] = value if default is _MISSING else Field(value, default)
        cls.__config_schema__ = compiled
        cls.__schema_fields__ = frozenset(compiled)

    @classmethod
    def parse(cls, data: dict[str, Any]) -> dict[str, Any]:
        """Validate ``data`` and return a new dict with defaults filled in."""
        return validate(cls.__config_schema__, data)

    @classmethod
    def defaults(cls) -> dict[str, Any]:
        return {key: spec.default for key, spec in cls.__config_schema__.items()
                if isinstance(spec, Field) and spec.has_default}


def _compile_annotation(owner: type, field_name: str, annotation: Any) -> Any:
    if get_origin(annotation) in (types.UnionType, Union):
        args = get_args(annotation)
        if all(isinstance(option, type) for option in args):
            out = args[0]
            for option in args[1:]:
                out = out | option
            return out
    elif isinstance(annotation, type):
        return annotation
    raise TypeError(f"{owner.__name__}.{field_name}: unsupported schema annotation {annotation!r}")


_FORMATS = ("csv", "json")


class PathConfig(ConfigSchema):
    """Every knob of the path pipeline; keys mirror the CLI flags exactly.

    ``None`` means "use the documented default derived from the input metric".
    """

    profile: str = "round_cap:1.0471975511965976"
    theorem: int = 2
    rho: float | None = None
    eps: float | None = None
    eta: float = 0.01
    r0: float | None = None
    delta0: float | None = None
    delta1: float = 0.1
    delta_m: float | None = None
    grid: int = 513
    flow_grid: int | None = None
    samples_per_stage: int = 20
    tol: float | None = None
    out: str = "capdeform-out"
    format: str = "csv"


def check_path_config(cfg: dict[str, Any]) -> dict[str, Any]:
    """Range checks that types alone cannot express."""
    rules: dict[str, Any] = {
        "theorem": lambda v: v in (1, 2),
        "delta1": lambda v: 0.0 < v < 0.5,
        "eta": lambda v: v > 0.0,
        "grid": lambda v: v >= 9,
        "flow_grid": lambda v: v is None or (v >= 17 and v % 2 == 1),
        "samples_per_stage": lambda v: v >= 2,
        "format": lambda v: v in _FORMATS,
    }
    for key in ("rho", "eps", "r0", "delta0", "delta_m", "tol"):
        rules[key] = lambda v: v is None or v > 0.0
    schema = {key: Field(rule) for key, rule in rules.items()}
    validate(schema, {k: v for k, v in cfg.items() if k in rules}, unknown_keys="strip")
    return cfg
