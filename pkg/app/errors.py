"""Exception hierarchy shared by the numeric modules and the CLI."""

from typing import Optional


class GeometryError(ValueError):
    """Invalid body construction or a geometric query that makes no sense (zero direction, dimension mismatch)."""


class PhiError(ValueError):
    """Invalid profile parameters, broken knot continuity or a negative argument."""


class UndefinedRatioError(ValueError):
    """The large-deviation ratio has a zero denominator."""


class IntegrationError(RuntimeError):
    """Quadrature could not reach its certified tolerance."""


class DivergenceError(IntegrationError):
    """The integrand e^(-phi) is not integrable on a half-line."""


class SamplingError(RuntimeError):
    """A rejection sampler fell below the minimal acceptance rate."""


class ConfigError(ValueError):
    """Invalid JSON configuration, with the offending field and line when known."""

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        self.field = field
        self.line = line
        location = []
        if line is not None:
            location.append(f"line {line}")
        if field is not None:
            location.append(f"field '{field}'")
        prefix = f"{', '.join(location)}: " if location else ""
        super().__init__(f"{prefix}{message}")
