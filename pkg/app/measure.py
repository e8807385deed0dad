"""The measure with density e^(-phi(||x||_L)) / Z and the uniform measure on a body.

Masses of dilates of L reduce to one-dimensional radial integrals; masses and tails of
other bodies are bracketed by dilates of L and refined by Monte Carlo. Tails are
always computed on the complement in log space, never as 1 - mass.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, List, Optional, Union

import numpy as np
from numpy.typing import NDArray
from scipy import integrate as sp_integrate
from scipy.special import logsumexp

from app.bodies import (
    DEFAULT_BUDGET,
    Box,
    ConvexBody,
    Dilate,
    EuclideanBall,
    UniformBodyProposal,
    bracket,
    dim,
    intersection_volume,
    multiple_of,
    norm,
    uniform_points,
    unwrap,
    volume_estimate,
)
from app.integrate import (
    derive_seed,
    exact,
    log_head_integral,
    log_sub,
    log_tail_integral,
    mc_region_measure,
    tail_cutoff,
)
from app.models import Estimate, TailBracket
from app.phi import PhiFunction, phi_inverse, phi_values

logger = logging.getLogger(__name__)

RADIAL_CELLS = 8192
GAUSS_NODES = 8
LAYER_EPSREL = 1e-11


@dataclass(frozen=True)
class NormMeasure:
    """Density e^(-phi(||x||_L)) normalized by Z = n |L| int_0^inf v^(n-1) e^(-phi(v)) dv."""

    phi: PhiFunction
    L: ConvexBody

    @property
    def n(self) -> int:
        return dim(self.L)


@dataclass(frozen=True)
class UniformMeasure:
    """mu(A) = |A ∩ omega| / |omega|."""

    omega: ConvexBody

    @property
    def n(self) -> int:
        return dim(self.omega)


Measure = Union[NormMeasure, UniformMeasure]


@lru_cache(maxsize=256)
def _radial_total(mu: NormMeasure) -> Estimate:
    return log_tail_integral(mu.phi, mu.n - 1, 0.0)


@lru_cache(maxsize=256)
def log_normalizer(mu: NormMeasure) -> float:
    """ln Z, computed once per measure."""
    value = math.log(mu.n) + volume_estimate(mu.L).log_value + _radial_total(mu).log_value
    logger.debug("ln Z = %.17g for %r", value, mu)
    return value


def normalizer(mu: NormMeasure) -> float:
    return math.exp(log_normalizer(mu))


def log_tail_dilate(mu: NormMeasure, a: float) -> Estimate:
    """ln mu((aL)^c) by exact radial quadrature; |L| and Z cancel."""
    if not a > 0.0:
        return exact(0.0)
    total = _radial_total(mu)
    tail = log_tail_integral(mu.phi, mu.n - 1, a)
    return Estimate(
        log_value=min(tail.log_value - total.log_value, 0.0),
        abs_log_error=tail.abs_log_error + total.abs_log_error,
        method="quadrature",
        count=tail.count,
    )


def mass_dilate(mu: NormMeasure, a: float) -> float:
    """mu(aL) in [0, 1]."""
    if not a > 0.0:
        return 0.0
    log_tail = log_tail_dilate(mu, a).log_value
    if math.exp(log_tail) < 0.5:
        mass = -math.expm1(log_tail)
    else:
        mass = math.exp(log_head_integral(mu.phi, mu.n - 1, a).log_value - _radial_total(mu).log_value)
    return min(1.0, max(0.0, mass))


class RadialLaw:
    """Radius law with density proportional to v^(n-1) e^(-phi(v)) on [lo, hi], tabulated for inverse-CDF draws.

    Cells are integrated with Gauss-Legendre nodes; an infinite hi is replaced by the
    certified tail cutoff.
    """

    def __init__(self, phi: PhiFunction, n: int, lo: float, hi: float = math.inf):
        cutoff = tail_cutoff(phi, n - 1, lo)
        upper = min(hi, cutoff)
        if not upper > lo:
            raise ValueError(f"empty radial range [{lo}, {hi}]")
        self.edges = np.linspace(lo, upper, RADIAL_CELLS + 1)
        nodes, weights = np.polynomial.legendre.leggauss(GAUSS_NODES)
        mid = 0.5 * (self.edges[:-1] + self.edges[1:])
        half = 0.5 * (self.edges[1:] - self.edges[:-1])
        v = mid[:, None] + half[:, None] * nodes[None, :]
        log_f = -phi_values(phi, v)
        if n > 1:
            log_f = log_f + (n - 1) * np.log(v)
        log_cells = logsumexp(log_f + np.log(weights)[None, :], axis=1) + np.log(half)
        cumulative = np.logaddexp.accumulate(log_cells)
        self.cdf = np.concatenate([[0.0], np.exp(cumulative - cumulative[-1])])

    def sample(self, rng: np.random.Generator, size: int) -> NDArray[np.float64]:
        u = rng.random(size)
        index = np.clip(np.searchsorted(self.cdf, u, side="right") - 1, 0, RADIAL_CELLS - 1)
        width = self.cdf[index + 1] - self.cdf[index]
        fraction = np.where(width > 0.0, (u - self.cdf[index]) / np.where(width > 0.0, width, 1.0), 0.5)
        return self.edges[index] + fraction * (self.edges[index + 1] - self.edges[index])


@lru_cache(maxsize=64)
def _full_radial_law(mu: NormMeasure) -> RadialLaw:
    return RadialLaw(mu.phi, mu.n, 0.0)


def _cone_directions(L: ConvexBody, size: int, rng: np.random.Generator) -> NDArray[np.float64]:
    """Boundary points of L distributed by the cone measure."""
    points = uniform_points(L, size, rng)
    lengths = np.asarray(norm(L, points))
    lengths = np.where(lengths > 0.0, lengths, 1.0)
    return points / lengths[:, None]


@dataclass
class ShellProposal:
    """mu restricted to the shell lo <= ||x||_L <= hi."""

    mu: NormMeasure
    law: RadialLaw
    log_shell_mass: float

    def draw(self, rng: np.random.Generator, size: int) -> NDArray[np.float64]:
        radii = self.law.sample(rng, size)
        return radii[:, None] * _cone_directions(self.mu.L, size, rng)

    def log_pdf(self, points: NDArray[np.float64]) -> NDArray[np.float64]:
        radii = np.asarray(norm(self.mu.L, points))
        return -phi_values(self.mu.phi, radii) - log_normalizer(self.mu) - self.log_shell_mass


def tail_log_bracket(
    mu: NormMeasure,
    K: ConvexBody,
    t: float,
    budget: int = DEFAULT_BUDGET,
    seed: int = 0,
    workers: Optional[int] = None,
) -> TailBracket:
    """Bracket ln mu((tK)^c) between the exact tails of t*R_out*L and t*r_in*L, with an MC point inside."""
    if not t >= 0.0:
        raise ValueError(f"t must be nonnegative, got {t}")
    r_in, r_out = bracket(K, mu.L)
    upper = log_tail_dilate(mu, t * r_in)
    lower = log_tail_dilate(mu, t * r_out)
    collapsed = t == 0.0 or multiple_of(K, mu.L) is not None or math.isclose(r_in, r_out, rel_tol=1e-12)
    shell = log_sub(upper.log_value, lower.log_value)
    if collapsed or shell == -math.inf:
        return TailBracket(t=t, r_in=r_in, r_out=r_out, lower=lower, upper=upper, point=upper)

    law = RadialLaw(mu.phi, mu.n, t * r_in, t * r_out)
    proposal = ShellProposal(mu, law, shell)
    outside = mc_region_measure(
        None, lambda x: np.asarray(norm(K, x)) > t, proposal, budget, seed, workers=workers
    )
    if outside.degenerate:
        logger.warning("No shell sample fell outside tK at t=%g; point pinned to the lower bracket", t)
        point = Estimate(
            log_value=lower.log_value,
            abs_log_error=upper.log_value - lower.log_value,
            method="monte-carlo",
            count=outside.count,
            degenerate=True,
        )
        return TailBracket(t=t, r_in=r_in, r_out=r_out, lower=lower, upper=upper, point=point, flagged=True)

    log_part = shell + outside.log_value
    value = float(np.logaddexp(lower.log_value, log_part))
    value = min(max(value, lower.log_value), upper.log_value)
    point = Estimate(
        log_value=value,
        abs_log_error=math.exp(log_part - value) * outside.abs_log_error,
        method="monte-carlo",
        count=outside.count,
    )
    return TailBracket(t=t, r_in=r_in, r_out=r_out, lower=lower, upper=upper, point=point)


def _layer_kinks(K: ConvexBody, L: ConvexBody) -> List[float]:
    ratio = multiple_of(K, L)
    if ratio is not None:
        return [ratio]
    k_base, k_factor = unwrap(K)
    l_base, l_factor = unwrap(L)
    match k_base, l_base:
        case Box(hk), Box(hl):
            return sorted({k_factor * x / (l_factor * y) for x, y in zip(hk, hl)})
        case Box(hk), EuclideanBall():
            return sorted({k_factor * x / l_factor for x in hk})
    return []


def exact_layer_volume(K: ConvexBody, L: ConvexBody) -> Optional[Callable[[float], float]]:
    """s -> |K ∩ sL| when an exact intersection formula exists, else None."""
    if intersection_volume(K, L) is None:
        return None

    def layer(s: float) -> float:
        if not s > 0.0:
            return 0.0
        found = intersection_volume(K, Dilate(L, s))
        return 0.0 if found is None else found

    return layer


def layer_volume(K: ConvexBody, L: ConvexBody, s: float, budget: int = DEFAULT_BUDGET, seed: int = 0) -> Estimate:
    """|K ∩ sL|, exact when possible, Monte Carlo from the uniform law on K otherwise."""
    if not s > 0.0:
        return exact(-math.inf)
    layer = exact_layer_volume(K, L)
    if layer is not None:
        found = layer(s)
        return exact(math.log(found) if found > 0.0 else -math.inf)
    body_volume = volume_estimate(K, budget, derive_seed(seed, 1))
    proposal = UniformBodyProposal(K, body_volume.log_value)
    fraction = mc_region_measure(None, lambda x: np.asarray(norm(L, x)) < s, proposal, budget, seed)
    if fraction.degenerate:
        return fraction
    return fraction.model_copy(
        update={
            "log_value": fraction.log_value + body_volume.log_value,
            "abs_log_error": math.hypot(fraction.abs_log_error, body_volume.abs_log_error),
        }
    )


def layered_mass(
    mu: NormMeasure,
    K: ConvexBody,
    budget: int = DEFAULT_BUDGET,
    seed: int = 0,
    workers: Optional[int] = None,
) -> Estimate:
    """mu(K) = (1/Z) int e^(-u) |K ∩ phi^-1(u) L| du.

    The outer integral is deterministic quadrature when |K ∩ sL| has an exact formula;
    otherwise mu(K) = |K| E[e^(-phi(||Y||_L))] / Z with Y uniform in K.
    """
    if not isinstance(mu, NormMeasure):
        raise TypeError("layered_mass needs a norm-density measure")
    log_z = log_normalizer(mu)
    layer = exact_layer_volume(K, mu.L)
    if layer is None:
        return _layered_mass_mc(mu, K, log_z, budget, seed, workers)

    _, saturation = bracket(K, mu.L)
    phi0 = float(phi_values(mu.phi, 0.0))
    u_sat = float(phi_values(mu.phi, saturation))
    full = layer(saturation)
    points = [float(phi_values(mu.phi, k)) for k in _layer_kinks(K, mu.L) if 0.0 < k < saturation]
    points = [u for u in points if phi0 < u < u_sat]
    if u_sat > phi0:
        inner, error = sp_integrate.quad(
            lambda u: math.exp(phi0 - u) * layer(phi_inverse(mu.phi, u)),
            phi0,
            u_sat,
            points=points or None,
            epsabs=0.0,
            epsrel=LAYER_EPSREL,
            limit=200,
        )
    else:
        inner, error = 0.0, 0.0
    head = -phi0 + math.log(inner) if inner > 0.0 else -math.inf
    tail = math.log(full) - u_sat if full > 0.0 else -math.inf
    total = float(np.logaddexp(head, tail))
    relative = error * math.exp(-phi0 - total) if total > -math.inf else 0.0
    return Estimate(
        log_value=total - log_z,
        abs_log_error=relative + _radial_total(mu).abs_log_error,
        method="quadrature",
        count=1,
    )


def _layered_mass_mc(
    mu: NormMeasure, K: ConvexBody, log_z: float, budget: int, seed: int, workers: Optional[int]
) -> Estimate:
    body_volume = volume_estimate(K, budget, derive_seed(seed, 1))
    proposal = UniformBodyProposal(K, body_volume.log_value)

    def log_density(x: NDArray[np.float64]) -> NDArray[np.float64]:
        return -phi_values(mu.phi, np.asarray(norm(mu.L, x))) - log_z

    estimate = mc_region_measure(
        log_density, lambda x: np.ones(len(x), dtype=bool), proposal, budget, seed, workers=workers
    )
    return estimate.model_copy(
        update={"abs_log_error": math.hypot(estimate.abs_log_error, body_volume.abs_log_error)}
    )


def sample(mu: NormMeasure, size: int, seed: int = 0) -> NDArray[np.float64]:
    """size draws from mu: radius by inverse CDF, direction by the cone measure of L."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    radii = _full_radial_law(mu).sample(rng, size)
    return radii[:, None] * _cone_directions(mu.L, size, rng)


def uniform_mass_estimate(
    mu: UniformMeasure, K: ConvexBody, t: float, budget: int = DEFAULT_BUDGET, seed: int = 0
) -> Estimate:
    """ln(|tK ∩ omega| / |omega|)."""
    if not t > 0.0:
        return exact(-math.inf)
    log_omega = volume_estimate(mu.omega).log_value
    found = intersection_volume(Dilate(K, t), mu.omega)
    if found is not None:
        return exact(min(math.log(found) - log_omega, 0.0) if found > 0.0 else -math.inf)
    proposal = UniformBodyProposal(mu.omega, log_omega)
    return mc_region_measure(None, lambda x: np.asarray(norm(K, x)) <= t, proposal, budget, seed)


def uniform_mass(mu: UniformMeasure, K: ConvexBody, t: float, budget: int = DEFAULT_BUDGET, seed: int = 0) -> float:
    """|tK ∩ omega| / |omega| in [0, 1]."""
    estimate = uniform_mass_estimate(mu, K, t, budget, seed)
    return min(1.0, estimate.value) if estimate.log_value > -math.inf else 0.0
