"""Log-space semi-infinite quadrature and seeded, chunked Monte Carlo.

Quadrature integrates (v - shift)^p e^(-phi(v)) on geometric panels, each rescaled by
its own peak so that nothing underflows, and stops once the convexity bound
phi(v) >= phi(b) + phi'(b)(v - b) certifies the remaining tail.

Monte Carlo draws from a Philox generator per chunk, each chunk seeded by
SeedSequence.spawn, and merges chunk statistics in chunk order, so results depend
on (seed, N, chunk size) only and never on the worker count.
"""

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Protocol, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy import integrate as sp_integrate
from scipy.special import gammaln, logsumexp

from app.errors import DivergenceError
from app.models import Estimate
from app.phi import PhiFunction, phi_derivatives, phi_inverse, phi_values

logger = logging.getLogger(__name__)

QUAD_EPSREL = 1e-12
TRUNCATION_RTOL = 1e-13
MAX_PANELS = 200
PROBE_POINTS = 9
HEAD_STEP = 5.0
DEFAULT_CHUNK = 65_536

LogDensity = Callable[[NDArray[np.float64]], NDArray[np.float64]]
Region = Callable[[NDArray[np.float64]], NDArray[np.bool_]]


def default_workers() -> int:
    """Worker count from LOGCONCAVE_THREADS, defaulting to 1."""
    raw = os.environ.get("LOGCONCAVE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        logger.warning("Ignoring non-integer LOGCONCAVE_THREADS=%r", raw)
        return 1


def derive_seed(seed: int, *keys: int) -> int:
    """Independent child seed for a (seed, keys...) path, e.g. one per grid point."""
    state = np.random.SeedSequence([seed, *keys]).generate_state(2, dtype=np.uint32)
    return int(state[0]) << 32 | int(state[1])


def exact(log_value: float, error: float = 0.0) -> Estimate:
    return Estimate(log_value=log_value, abs_log_error=error, method="exact", count=0)


def log_sub(a: float, b: float) -> float:
    """ln(e^a - e^b) for a >= b."""
    if b == -math.inf:
        return a
    if b >= a:
        return -math.inf
    return a + math.log1p(-math.exp(b - a))


def _log_integrand(phi: PhiFunction, power: int, shift: float) -> Callable[[NDArray[np.float64]], NDArray[np.float64]]:
    def g(v):
        v = np.asarray(v, dtype=float)
        if power == 0:
            return -phi_values(phi, v)
        with np.errstate(divide="ignore"):
            return power * np.log(v - shift) - phi_values(phi, v)

    return g


def _panel(g: Callable, lo: float, hi: float) -> Tuple[float, float]:
    """ln of the panel integral and its relative quadrature error."""
    peak = float(np.max(g(np.linspace(lo, hi, PROBE_POINTS))))
    if not math.isfinite(peak):
        return -math.inf, 0.0
    value, error = sp_integrate.quad(
        lambda v: math.exp(min(float(g(v)) - peak, 700.0)), lo, hi, epsabs=0.0, epsrel=QUAD_EPSREL, limit=200
    )
    if value <= 0.0:
        return -math.inf, 0.0
    return peak + math.log(value), error / value


def _tail_bound(phi: PhiFunction, power: int, shift: float, b: float) -> float:
    """ln of the linear-minorant bound on int_b^inf (v - shift)^p e^(-phi(v)) dv."""
    value = float(phi_values(phi, b))
    slope = float(phi_derivatives(phi, b))
    if math.isinf(value) or math.isinf(slope):
        return -math.inf
    if not slope > 0.0:
        return math.inf
    i = np.arange(power + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        poly = np.where(power - i > 0, (power - i) * np.log(b - shift), 0.0)
    terms = gammaln(power + 1) - gammaln(power - i + 1) + poly - (i + 1) * math.log(slope)
    return -value + float(logsumexp(terms))


def _tail_panels(phi: PhiFunction, power: int, t: float, shift: float) -> Tuple[float, float, int, float]:
    if power < 0:
        raise ValueError(f"power must be a nonnegative integer, got {power}")
    if not t >= shift >= 0.0:
        raise ValueError(f"need t >= shift >= 0, got t={t}, shift={shift}")
    g = _log_integrand(phi, power, shift)
    start = float(phi_values(phi, t))
    if math.isinf(start):
        return -math.inf, 0.0, 0, t
    width = phi_inverse(phi, start + 1.0) - t
    if not (math.isfinite(width) and width > 0.0):
        width = 1.0
    width = max(width, 1e-6 * (1.0 + t))

    logs: List[float] = []
    errors: List[float] = []
    lo = t
    for panel in range(MAX_PANELS):
        hi = lo + width
        log_part, rel_error = _panel(g, lo, hi)
        logs.append(log_part)
        errors.append(log_part + math.log(rel_error) if rel_error > 0.0 else -math.inf)
        total = float(logsumexp(logs))
        bound = _tail_bound(phi, power, shift, hi)
        if bound == -math.inf and total == -math.inf:
            return -math.inf, 0.0, panel + 1, hi
        if total > -math.inf and bound < total + math.log(TRUNCATION_RTOL):
            error = math.exp(float(logsumexp(errors)) - total) + math.exp(bound - total)
            logger.debug("Tail p=%d t=%g certified after %d panels at %g", power, t, panel + 1, hi)
            return total, error, panel + 1, hi
        lo = hi
        width *= 2.0
    raise DivergenceError(f"e^(-phi) tail not certified after {MAX_PANELS} panels from t={t}; phi is not integrable")


def log_tail_integral(phi: PhiFunction, power: int, t: float, shift: float = 0.0) -> Estimate:
    """ln int_t^inf (v - shift)^power e^(-phi(v)) dv."""
    log_value, error, panels, _ = _tail_panels(phi, power, t, shift)
    return Estimate(log_value=log_value, abs_log_error=error, method="quadrature", count=panels)


def tail_cutoff(phi: PhiFunction, power: int, t: float, shift: float = 0.0) -> float:
    """A point beyond which the tail integral is below 1e-13 of its total."""
    return _tail_panels(phi, power, t, shift)[3]


def log_head_integral(phi: PhiFunction, power: int, a: float) -> Estimate:
    """ln int_0^a v^power e^(-phi(v)) dv, split where phi has grown by HEAD_STEP."""
    if not a > 0.0:
        return exact(-math.inf)
    g = _log_integrand(phi, power, 0.0)
    base = float(phi_values(phi, 0.0))
    breaks = [0.0]
    for k in range(1, MAX_PANELS):
        x = phi_inverse(phi, base + HEAD_STEP * k)
        if not x < a:
            break
        if x > breaks[-1]:
            breaks.append(x)
    breaks.append(a)
    logs, errors = [], []
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        log_part, rel_error = _panel(g, lo, hi)
        logs.append(log_part)
        errors.append(log_part + math.log(rel_error) if rel_error > 0.0 else -math.inf)
    total = float(logsumexp(logs))
    error = math.exp(float(logsumexp(errors)) - total) if total > -math.inf else 0.0
    return Estimate(log_value=total, abs_log_error=error, method="quadrature", count=len(logs))


class Proposal(Protocol):
    """Sampling distribution for mc_region_measure."""

    def draw(self, rng: np.random.Generator, size: int) -> NDArray[np.float64]: ...

    def log_pdf(self, points: NDArray[np.float64]) -> NDArray[np.float64]: ...


@dataclass(frozen=True)
class UniformBoxProposal:
    half_widths: Tuple[float, ...]

    def draw(self, rng: np.random.Generator, size: int) -> NDArray[np.float64]:
        h = np.asarray(self.half_widths, dtype=float)
        return rng.uniform(-h, h, size=(size, h.size))

    def log_pdf(self, points: NDArray[np.float64]) -> NDArray[np.float64]:
        level = -float(np.sum(np.log(2.0 * np.asarray(self.half_widths, dtype=float))))
        return np.full(len(points), level)


def mc_region_measure(
    log_density: Optional[LogDensity],
    region: Region,
    proposal: Proposal,
    n_samples: int,
    seed: int,
    chunk_size: int = DEFAULT_CHUNK,
    workers: Optional[int] = None,
) -> Estimate:
    """Importance-sampling estimate of int_region density, with its standard error.

    With log_density=None the density is the proposal itself and the estimate is the
    proposal probability of the region.
    """
    if n_samples < 1:
        raise ValueError(f"need at least one sample, got {n_samples}")
    sizes = [min(chunk_size, n_samples - start) for start in range(0, n_samples, chunk_size)]
    children = np.random.SeedSequence(seed).spawn(len(sizes))

    def run_chunk(index: int) -> Tuple[int, float, float, int]:
        rng = np.random.Generator(np.random.Philox(children[index]))
        points = proposal.draw(rng, sizes[index])
        inside = np.asarray(region(points), dtype=bool)
        weights = np.zeros(sizes[index])
        if inside.any():
            accepted = points[inside]
            if log_density is None:
                weights[inside] = 1.0
            else:
                weights[inside] = np.exp(log_density(accepted) - proposal.log_pdf(accepted))
        mean = float(weights.mean())
        return sizes[index], mean, float(np.sum((weights - mean) ** 2)), int(inside.sum())

    with ThreadPoolExecutor(max_workers=workers or default_workers()) as pool:
        parts = list(pool.map(run_chunk, range(len(sizes))))

    count, mean, m2, hits = 0, 0.0, 0.0, 0
    for size, chunk_mean, chunk_m2, chunk_hits in parts:
        total = count + size
        delta = chunk_mean - mean
        mean += delta * size / total
        m2 += chunk_m2 + delta * delta * count * size / total
        count = total
        hits += chunk_hits
        logger.debug("MC chunk: n=%d mean=%g hits=%d", size, chunk_mean, chunk_hits)

    if hits == 0 or not mean > 0.0:
        logger.warning("Monte Carlo estimate degenerate: no accepted samples among %d", count)
        return Estimate(log_value=-math.inf, abs_log_error=math.inf, method="monte-carlo", count=count, degenerate=True)
    variance = m2 / (count - 1) if count > 1 else 0.0
    stderr = math.sqrt(max(variance, 0.0) / count)
    return Estimate(log_value=math.log(mean), abs_log_error=stderr / mean, method="monte-carlo", count=count)
