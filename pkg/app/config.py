"""JSON configuration files for bodies, profiles, measures and runs.

Every file may carry "schema": 1 at its top level. Unknown fields are rejected, and
errors point at the offending field and, when it can be found, its line.
"""

import json
import logging
import re
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Type, TypeVar

import numpy as np
from pydantic import ValidationError

from app.bodies import Box, ConvexBody, Dilate, EuclideanBall, LpBall, SymmetricPolytope
from app.errors import ConfigError, GeometryError, PhiError
from app.measure import Measure, NormMeasure, UniformMeasure
from app.models import (
    BallConfig,
    BoxConfig,
    ConfigSchema,
    DilateConfig,
    GaussianConfig,
    LinearConfig,
    LpBallConfig,
    MeasureConfig,
    PathologicalConfig,
    PolytopeConfig,
    PowerConfig,
    RunConfig,
)
from app.phi import GaussianNormalized, Linear, PhiFunction, Power, build_pathological_phi

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

Schema = TypeVar("Schema", bound=ConfigSchema)


def _line_of(text: str, key: Optional[str]) -> Optional[int]:
    if not text or key is None:
        return None
    found = re.search(rf'"{re.escape(key)}"\s*:', text)
    return text.count("\n", 0, found.start()) + 1 if found else None


def _validate(schema: Type[Schema], data: Any, text: str, prefix: str) -> Schema:
    if not isinstance(data, dict):
        raise ConfigError("expected a JSON object", field=prefix)
    try:
        return schema.model_validate(data)
    except ValidationError as error:
        first = error.errors()[0]
        names = [str(part) for part in first["loc"]]
        field = ".".join([prefix, *names]) if prefix else ".".join(names)
        keys = [part for part in first["loc"] if isinstance(part, str)]
        raise ConfigError(first["msg"], field=field, line=_line_of(text, keys[-1] if keys else None)) from error


def strip_schema(data: Any, text: str = "") -> Any:
    """Drop the top-level "schema" tag after checking its version."""
    if not isinstance(data, dict) or "schema" not in data:
        return data
    data = dict(data)
    version = data.pop("schema")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema version {version!r}", field="schema", line=_line_of(text, "schema"))
    return data


def read_json(path: str) -> Tuple[Any, str]:
    """Parsed JSON (schema tag removed) and the raw text, for line lookups."""
    try:
        text = Path(path).read_text()
    except OSError as error:
        raise ConfigError(f"cannot read {path}: {error.strerror}") from error
    try:
        data = json.loads(text)
    except json.JSONDecodeError as error:
        raise ConfigError(f"{path}: invalid JSON: {error.msg}", line=error.lineno) from error
    return strip_schema(data, text), text


def _type_of(data: Any, prefix: str) -> str:
    if not isinstance(data, dict):
        raise ConfigError("expected a JSON object", field=prefix)
    kind = data.get("type")
    if not isinstance(kind, str):
        raise ConfigError("missing or non-string 'type'", field=f"{prefix}.type")
    return kind


def parse_body(data: Any, text: str = "", prefix: str = "body") -> ConvexBody:
    kind = _type_of(data, prefix)
    try:
        match kind:
            case "ball":
                ball = _validate(BallConfig, data, text, prefix)
                return EuclideanBall(ball.dim, ball.radius)
            case "lpball":
                lp = _validate(LpBallConfig, data, text, prefix)
                return LpBall(lp.p, tuple(lp.semi_axes))
            case "box":
                box = _validate(BoxConfig, data, text, prefix)
                return Box(tuple(box.half_widths))
            case "polytope":
                return _parse_polytope(_validate(PolytopeConfig, data, text, prefix), text, prefix)
            case "dilate":
                dilate = _validate(DilateConfig, data, text, prefix)
                return Dilate(parse_body(dilate.body, text, f"{prefix}.body"), dilate.factor)
    except GeometryError as error:
        raise ConfigError(str(error), field=prefix, line=_line_of(text, "type")) from error
    raise ConfigError(f"unknown body type {kind!r}", field=f"{prefix}.type", line=_line_of(text, "type"))


def _parse_polytope(config: PolytopeConfig, text: str, prefix: str) -> SymmetricPolytope:
    if config.vertices is not None:
        if config.directions is not None or config.offsets is not None:
            raise ConfigError("give either vertices or directions/offsets, not both", field=prefix)
        return SymmetricPolytope.from_vertices(np.asarray(config.vertices, dtype=float))
    if config.directions is None or config.offsets is None:
        raise ConfigError("polytope needs vertices or both directions and offsets", field=prefix)
    return SymmetricPolytope(tuple(map(tuple, config.directions)), tuple(config.offsets))


def parse_phi(data: Any, text: str = "", prefix: str = "phi") -> PhiFunction:
    kind = _type_of(data, prefix)
    try:
        match kind:
            case "power":
                power = _validate(PowerConfig, data, text, prefix)
                return Power(power.p, power.scale, power.offset, power.plateau)
            case "linear":
                linear = _validate(LinearConfig, data, text, prefix)
                return Linear(linear.slope, linear.offset, linear.plateau)
            case "gaussian":
                return GaussianNormalized(_validate(GaussianConfig, data, text, prefix).n)
            case "pathological":
                phi, _ = build_pathological_phi(_validate(PathologicalConfig, data, text, prefix).k_max)
                return phi
    except PhiError as error:
        raise ConfigError(str(error), field=prefix, line=_line_of(text, "type")) from error
    raise ConfigError(f"unknown phi type {kind!r}", field=f"{prefix}.type", line=_line_of(text, "type"))


def parse_measure(data: Any, text: str = "", prefix: str = "measure") -> Measure:
    config = _validate(MeasureConfig, data, text, prefix)
    if config.uniform_on is not None:
        if config.phi is not None or config.L is not None:
            raise ConfigError("a uniform measure takes no phi or L", field=prefix)
        return UniformMeasure(parse_body(config.uniform_on, text, f"{prefix}.uniform_on"))
    if config.phi is None or config.L is None:
        raise ConfigError("a norm measure needs both phi and L", field=prefix)
    return NormMeasure(parse_phi(config.phi, text, f"{prefix}.phi"), parse_body(config.L, text, f"{prefix}.L"))


def load_body(path: str) -> ConvexBody:
    data, text = read_json(path)
    return parse_body(data, text)


def load_phi(path: str) -> PhiFunction:
    data, text = read_json(path)
    return parse_phi(data, text)


def load_measure(path: str) -> Measure:
    data, text = read_json(path)
    return parse_measure(data, text)


def load_run_config(path: str) -> RunConfig:
    data, text = read_json(path)
    return _validate(RunConfig, data, text, "")


def run_config(values: Dict[str, Any]) -> RunConfig:
    """Validate merged file and flag values."""
    return _validate(RunConfig, values, "", "")


def parse_grid(text: str, log: bool = False) -> List[float]:
    """start:end:count, linearly or logarithmically spaced."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"grid must be start:end:count, got {text!r}", field="grid")
    try:
        start, end, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as error:
        raise ConfigError(f"grid must be start:end:count, got {text!r}", field="grid") from error
    if count < 1:
        raise ConfigError("grid count must be at least 1", field="grid")
    if count == 1:
        return [start]
    if log:
        if not (start > 0.0 and end > 0.0):
            raise ConfigError("log grids need positive endpoints", field="grid")
        return [float(x) for x in np.geomspace(start, end, count)]
    return [float(x) for x in np.linspace(start, end, count)]
