"""Typed access to form parameters for GET and POST requests alike."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Optional, Sequence

from .errors import BadRequest

_UNSET = object()


@dataclass(frozen=True)
class ParamSpec:
    name: str
    optional: bool = False
    integer: bool = False
    min_length: Optional[int] = None
    one_of: Optional[tuple] = None
    default: Any = _UNSET

    def __post_init__(self):
        if self.min_length is not None and self.min_length < 0:
            raise ValueError("min_length must be non-negative")
        if self.one_of is not None:
            object.__setattr__(self, "one_of", tuple(self.one_of))

    @property
    def has_default(self) -> bool:
        return self.default is not _UNSET


def param(name: str, **constraints) -> ParamSpec:
    """``param("age", integer=True)``; a default makes the field optional."""
    if "default" in constraints:
        if constraints.get("optional") is False:
            raise ValueError(f"parameter {name!r}: a default conflicts with optional=False")
        constraints["optional"] = True
    return ParamSpec(name, **constraints)


def convert(spec: ParamSpec, raw: str):
    if spec.min_length is not None and len(raw) < spec.min_length:
        raise BadRequest(f"parameter {spec.name!r} must be at least {spec.min_length} characters",
                         spec.name)
    if spec.one_of is not None and raw not in spec.one_of:
        raise BadRequest(f"parameter {spec.name!r} must be one of {', '.join(spec.one_of)}", spec.name)
    if spec.integer:
        try:
            return int(raw.strip())
        except ValueError:
            raise BadRequest(f"parameter {spec.name!r} must be an integer", spec.name) from None
    return raw


def http_parameters(request, specs: Sequence[ParamSpec]) -> dict:
    """Validate and convert the request's form fields.  Missing optional
    fields are absent from the result unless the spec has a default."""
    out = {}
    for spec in specs:
        values = request.parameters.get(spec.name)
        if not values:
            if spec.has_default:
                out[spec.name] = spec.default
            elif not spec.optional:
                raise BadRequest(f"missing required parameter {spec.name!r}", spec.name)
            continue
        out[spec.name] = convert(spec, values[0])
    return out
