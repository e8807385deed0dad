"""Radial profiles phi: evaluation, left derivative, generalized inverse and validation.

A profile is an increasing convex function phi: [0, inf) -> [0, inf); the measure it
induces has density e^(-phi(||x||_L)). Values are immutable frozen dataclasses so they
hash, compare structurally and can key caches.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import mpmath
import numpy as np
from numpy.typing import ArrayLike, NDArray

from app.errors import PhiError
from app.models import PathologicalKnot, PathologicalReport, PhiValidationReport

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)

# Exponents of two beyond this cannot be held as machine integers.
MAX_KNOT_EXPONENT = 2**62


@dataclass(frozen=True)
class Power:
    """phi(t) = ((t - plateau)_+ / scale)^p / p + offset."""

    p: float = 2.0
    scale: float = 1.0
    offset: float = 0.0
    plateau: float = 0.0

    def __post_init__(self):
        if not self.p >= 1.0 or not math.isfinite(self.p):
            raise PhiError(f"power profile needs finite p >= 1, got {self.p}")
        if not self.scale > 0.0:
            raise PhiError(f"scale must be positive, got {self.scale}")
        if not self.offset >= 0.0 or not self.plateau >= 0.0:
            raise PhiError("offset and plateau must be nonnegative")


@dataclass(frozen=True)
class Linear:
    """phi(t) = slope * (t - plateau)_+ + offset."""

    slope: float = 1.0
    offset: float = 0.0
    plateau: float = 0.0

    def __post_init__(self):
        if not self.slope > 0.0 or not math.isfinite(self.slope):
            raise PhiError(f"slope must be positive, got {self.slope}")
        if not self.offset >= 0.0 or not self.plateau >= 0.0:
            raise PhiError("offset and plateau must be nonnegative")


@dataclass(frozen=True)
class GaussianNormalized:
    """phi(t) = t^2/2 + (n/2) ln(2 pi): the standard Gaussian in R^n when L is the unit ball."""

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise PhiError(f"dimension must be >= 1, got {self.n}")


@dataclass(frozen=True)
class PiecewiseQuadratic:
    """Quadratic pieces alpha_k (t-k)^2/2 + b_k (t-k) + a_k on [k, k+1]; the last piece extends to infinity.

    Knots are (a_k, b_k, alpha_k) triples. Only value and derivative continuity are
    enforced here; sign and convexity are the business of validate_phi.
    """

    knots: Tuple[Tuple[float, float, float], ...]

    def __post_init__(self):
        knots = tuple(tuple(float(c) for c in knot) for knot in self.knots)
        if not knots or any(len(knot) != 3 for knot in knots):
            raise PhiError("piecewise profile needs at least one (a, b, alpha) knot")
        for k in range(len(knots) - 1):
            a, b, alpha = knots[k]
            a_next, b_next, _ = knots[k + 1]
            end_value = alpha / 2.0 + b + a
            end_slope = alpha + b
            if not math.isclose(end_value, a_next, rel_tol=1e-9, abs_tol=1e-12):
                raise PhiError(f"value jump at knot {k + 1}: {end_value} != {a_next}")
            if not math.isclose(end_slope, b_next, rel_tol=1e-9, abs_tol=1e-12):
                raise PhiError(f"derivative jump at knot {k + 1}: {end_slope} != {b_next}")
        object.__setattr__(self, "knots", knots)


PhiFunction = Union[Power, Linear, GaussianNormalized, PiecewiseQuadratic]


def plateau(phi: PhiFunction) -> float:
    """Largest t with phi(t) = phi(0)."""
    match phi:
        case Power(plateau=t0) | Linear(plateau=t0):
            return t0
        case _:
            return 0.0


def _segments(phi: PiecewiseQuadratic, t: NDArray[np.float64]) -> Tuple[NDArray[np.int64], NDArray[np.float64]]:
    # A knot point k >= 1 belongs to the segment ending there (left-derivative convention).
    last = len(phi.knots) - 1
    k = np.clip(np.ceil(t) - 1.0, 0, last).astype(np.int64)
    return k, t - k


def phi_values(phi: PhiFunction, t: ArrayLike) -> NDArray[np.float64]:
    """Vectorized phi(t) for t >= 0 (no sign check)."""
    t = np.asarray(t, dtype=float)
    match phi:
        case Power(p, scale, offset, t0):
            s = np.maximum(t - t0, 0.0) / scale
            return s**p / p + offset
        case Linear(slope, offset, t0):
            return slope * np.maximum(t - t0, 0.0) + offset
        case GaussianNormalized(n):
            return t * t / 2.0 + 0.5 * n * LOG_2PI
        case PiecewiseQuadratic(knots):
            table = np.asarray(knots, dtype=float)
            k, s = _segments(phi, t)
            a, b, alpha = table[k, 0], table[k, 1], table[k, 2]
            with np.errstate(invalid="ignore", over="ignore"):
                quad = np.where(s > 0.0, alpha * s * s / 2.0, 0.0)
                lin = np.where(s > 0.0, b * s, 0.0)
            return quad + lin + a
    raise PhiError(f"unknown profile {phi!r}")


def phi_derivatives(phi: PhiFunction, t: ArrayLike) -> NDArray[np.float64]:
    """Vectorized left derivative; at t = 0 the right derivative is used."""
    t = np.asarray(t, dtype=float)
    match phi:
        case Power(p, scale, _, t0):
            s = np.maximum(t - t0, 0.0) / scale
            rising = t > t0
            at_start = (t == 0.0) & (t0 == 0.0)
            with np.errstate(divide="ignore", invalid="ignore"):
                slope = np.where(rising, s ** (p - 1.0) / scale, 0.0)
            return np.where(at_start, (1.0 / scale) if p == 1.0 else 0.0, slope)
        case Linear(slope, _, t0):
            return np.where((t > t0) | ((t == 0.0) & (t0 == 0.0)), slope, 0.0)
        case GaussianNormalized():
            return t.copy()
        case PiecewiseQuadratic(knots):
            table = np.asarray(knots, dtype=float)
            k, s = _segments(phi, t)
            b, alpha = table[k, 1], table[k, 2]
            with np.errstate(invalid="ignore", over="ignore"):
                return np.where(s > 0.0, alpha * s, 0.0) + b
    raise PhiError(f"unknown profile {phi!r}")


def phi_eval(phi: PhiFunction, t: float) -> Tuple[float, float]:
    """Return (phi(t), phi'(t-)) for t >= 0."""
    if not t >= 0.0:
        raise PhiError(f"phi is defined on [0, inf), got t={t}")
    return float(phi_values(phi, t)), float(phi_derivatives(phi, t))


def phi_inverse(phi: PhiFunction, u: float) -> float:
    """Generalized inverse sup{v >= 0 : phi(v) < u}, with sup of the empty set equal to 0.

    The sublevel set is strict, so phi_inverse(phi(0)) is 0 even when phi has a plateau
    [0, t0]; the plateau end t0 is only reached as the limit u -> phi(0)+.
    """
    phi0 = float(phi_values(phi, 0.0))
    if not u > phi0:
        return 0.0
    if math.isinf(u):
        return math.inf
    match phi:
        case Power(p, scale, offset, t0):
            return t0 + scale * (p * (u - offset)) ** (1.0 / p)
        case Linear(slope, offset, t0):
            return t0 + (u - offset) / slope
        case GaussianNormalized(n):
            return math.sqrt(2.0 * (u - 0.5 * n * LOG_2PI))
        case PiecewiseQuadratic(knots):
            last = len(knots) - 1
            for k, (a, b, alpha) in enumerate(knots):
                end_value = alpha / 2.0 + b + a if k < last else math.inf
                if u > end_value:
                    continue
                if math.isinf(alpha):
                    return float(k)
                root = math.sqrt(max(b * b + 2.0 * alpha * (u - a), 0.0))
                if b + root == 0.0:
                    return math.inf
                return k + 2.0 * (u - a) / (b + root)
            return math.inf
    raise PhiError(f"unknown profile {phi!r}")


def validate_phi(phi: PhiFunction, grid: ArrayLike) -> PhiValidationReport:
    """Check nonnegativity, monotone values and monotone left derivatives on a sorted grid."""
    t = np.asarray(grid, dtype=float)
    if t.size and (np.any(t < 0.0) or np.any(np.diff(t) < 0.0)):
        raise PhiError("validation grid must be sorted and nonnegative")
    values = phi_values(phi, t)
    slopes = phi_derivatives(phi, t)

    def first_drop(v: NDArray[np.float64]) -> Optional[int]:
        ok = (v[1:] >= v[:-1]) | np.isclose(v[1:], v[:-1], rtol=1e-12, atol=0.0)
        bad = np.flatnonzero(~ok)
        return int(bad[0]) + 1 if bad.size else None

    negative = np.flatnonzero(~(values >= 0.0))
    checks = [
        ("negative value", int(negative[0]) if negative.size else None),
        ("decreasing value", first_drop(values) if t.size > 1 else None),
        ("decreasing derivative", first_drop(slopes) if t.size > 1 else None),
    ]
    failures = [(index, name) for name, index in checks if index is not None]
    first = min(failures) if failures else None
    return PhiValidationReport(
        passed=first is None,
        nonnegative=checks[0][1] is None,
        monotone_values=checks[1][1] is None,
        monotone_derivatives=checks[2][1] is None,
        points=int(t.size),
        first_violation_index=first[0] if first else None,
        first_violation_t=float(t[first[0]]) if first else None,
        first_violation=first[1] if first else None,
    )


def _knot_holds(j: int, a: mpmath.mpf, b: mpmath.mpf) -> bool:
    # sqrt(alpha) + b > exp(1/2 + b/sqrt(alpha) + a), compared in logs
    root = mpmath.sqrt(mpmath.ldexp(1, j))
    return mpmath.log(root + b) > mpmath.mpf(0.5) + b / root + a


def _minimal_exponent(a: mpmath.mpf, b: mpmath.mpf) -> int:
    """Smallest j >= 0 with alpha = 2^j satisfying the knot inequality (galloping then bisection)."""
    if _knot_holds(0, a, b):
        return 0
    low, high = 0, 1
    while not _knot_holds(high, a, b):
        low, high = high, high * 2
    while high - low > 1:
        mid = (low + high) // 2
        if _knot_holds(mid, a, b):
            high = mid
        else:
            low = mid
    return high


def build_pathological_phi(k_max: int) -> Tuple[PiecewiseQuadratic, PathologicalReport]:
    """Piecewise quadratic profile whose derivative beats e^phi once on every unit interval.

    Starting from phi(0) = phi'(0) = 1, each segment takes the smallest power of two
    alpha_k with sqrt(alpha_k) + b_k > e^(1/2 + b_k/sqrt(alpha_k) + a_k), so that at
    t_k = k + 1/sqrt(alpha_k) one has phi'(t_k) > e^(phi(t_k)). Knot arithmetic is done
    with arbitrary exponents; construction stops early once the next exponent of two
    no longer fits a machine integer.
    """
    if k_max < 1:
        raise PhiError(f"k_max must be >= 1, got {k_max}")
    knots: List[Tuple[mpmath.mpf, mpmath.mpf, int]] = []
    rows: List[PathologicalKnot] = []
    truncated = False
    with mpmath.workprec(256):
        a, b = mpmath.mpf(1), mpmath.mpf(1)
        for k in range(k_max):
            estimate = 2 * (a + mpmath.mpf(0.5)) / mpmath.log(2)
            if estimate > MAX_KNOT_EXPONENT:
                truncated = True
                logger.warning(
                    "Pathological profile truncated after %d knots: next exponent ~2^%.3g exceeds machine range",
                    k,
                    float(mpmath.log(estimate, 2)),
                )
                break
            j = _minimal_exponent(a, b)
            alpha = mpmath.ldexp(1, j)
            root = mpmath.sqrt(alpha)
            phi_t = mpmath.mpf(0.5) + b / root + a
            log_dphi_t = mpmath.log(root + b)
            log_offset = -mpmath.mpf(j) * mpmath.log(2) / 2
            rows.append(
                PathologicalKnot(
                    k=k,
                    alpha_log2=j,
                    t=k + float(mpmath.exp(log_offset)),
                    log_t_offset=float(log_offset),
                    phi_t=float(phi_t),
                    log_dphi_t=float(log_dphi_t),
                    log_compare=phi_t > 700,
                    holds=bool(log_dphi_t > phi_t),
                )
            )
            knots.append((a, b, j))
            a, b = alpha / 2 + b + a, alpha + b
        float_knots = tuple((float(ka), float(kb), float(mpmath.ldexp(1, kj))) for ka, kb, kj in knots)
    logger.info("Built pathological profile with %d knots (requested %d)", len(rows), k_max)
    return PiecewiseQuadratic(float_knots), PathologicalReport(
        requested=k_max, constructed=len(rows), truncated=truncated, knots=rows
    )
