"""Section measures, the dilate dominance checker, the dilation experiment harness,
the rectangle demonstration and the volume-to-measure comparison."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import integrate as sp_integrate

from app.bodies import (
    DEFAULT_BUDGET,
    Box,
    ConvexBody,
    Dilate,
    EuclideanBall,
    ball_volume,
    bracket,
    central_section_estimate,
    circle_box_area,
    dim,
    hyperplane_basis,
    inradius,
    multiple_of,
    norm,
    random_symmetric_polygon,
    sphere_net,
    support,
    volume_estimate,
)
from app.errors import GeometryError
from app.integrate import UniformBoxProposal, default_workers, derive_seed, exact, log_head_integral, mc_region_measure
from app.measure import (
    Measure,
    NormMeasure,
    UniformMeasure,
    layer_volume,
    layered_mass,
    log_normalizer,
    mass_dilate,
    uniform_mass,
)
from app.models import (
    DilateRow,
    DominanceReport,
    Estimate,
    FactCheckReport,
    FactSweepReport,
    RectangleDemoReport,
    RectangleDemoRow,
    SectionPair,
)
from app.phi import GaussianNormalized, PhiFunction, phi_values

__all__ = [
    "bp_experiment",
    "circle_box_area",
    "dominance_check",
    "fact_check",
    "fact_sweep",
    "rectangle_demo",
    "section_measure",
    "small_dilate_ratio",
]

logger = logging.getLogger(__name__)

SECTION_EPSREL = 1e-10
COMPARE_Z = 3.0
EQUAL_RTOL = 1e-12
FACT_RTOL = 1e-8
INNER_GRID = 32
SMALL_DILATE = 1e-3


def _unit(xi: ArrayLike, n: int) -> NDArray[np.float64]:
    direction = np.asarray(xi, dtype=float)
    if direction.shape != (n,):
        raise GeometryError(f"direction must have shape ({n},), got {direction.shape}")
    length = float(np.linalg.norm(direction))
    if length == 0.0:
        raise GeometryError("section direction must be nonzero")
    return direction / length


def section_measure(
    mu: NormMeasure,
    K: ConvexBody,
    xi: ArrayLike,
    r: float,
    budget: int = DEFAULT_BUDGET,
    seed: int = 0,
) -> Estimate:
    """ln of the (n-1)-dimensional integral of the density of mu over rK ∩ xi^perp."""
    n = mu.n
    if n < 2:
        raise GeometryError("section measures need dimension >= 2")
    if dim(K) != n:
        raise GeometryError(f"dimension mismatch: measure n={n}, body n={dim(K)}")
    direction = _unit(xi, n)
    if r < 0.0:
        raise ValueError(f"r must be nonnegative, got {r}")
    if r == 0.0:
        return exact(-math.inf)
    log_z = log_normalizer(mu)

    ratio = multiple_of(K, mu.L)
    if ratio is not None:
        # (n-1) |L ∩ xi^perp| int_0^(ra) s^(n-2) e^(-phi(s)) ds
        slice_volume = central_section_estimate(mu.L, direction, budget, seed)
        radial = log_head_integral(mu.phi, n - 2, r * ratio)
        return Estimate(
            log_value=math.log(n - 1) + slice_volume.log_value + radial.log_value - log_z,
            abs_log_error=slice_volume.abs_log_error + radial.abs_log_error,
            method=slice_volume.method if slice_volume.method == "monte-carlo" else "quadrature",
            count=radial.count,
        )

    if n == 2:
        w = np.array([-direction[1], direction[0]])
        l_norm = float(norm(mu.L, w))
        radial = log_head_integral(mu.phi, 0, r * l_norm / float(norm(K, w)))
        return radial.model_copy(update={"log_value": math.log(2.0 / l_norm) + radial.log_value - log_z})

    if n == 3:
        return _planar_section(mu, K, direction, r, log_z)

    return _slice_monte_carlo(mu, K, direction, r, log_z, budget, seed)


def _planar_section(mu: NormMeasure, K: ConvexBody, direction: NDArray[np.float64], r: float, log_z: float) -> Estimate:
    """Polar integration over the plane xi^perp in R^3."""
    basis = hyperplane_basis(direction)
    errors: List[float] = []

    def log_ray(theta: float) -> float:
        omega = basis @ np.array([math.cos(theta), math.sin(theta)])
        l_norm = float(norm(mu.L, omega))
        radial = log_head_integral(mu.phi, 1, r * l_norm / float(norm(K, omega)))
        errors.append(radial.abs_log_error)
        return radial.log_value - 2.0 * math.log(l_norm)

    # rescale by the peak over a coarse theta grid so the integrand stays near 1
    peak = max(log_ray(theta) for theta in np.linspace(0.0, math.pi, 9))
    value, error = sp_integrate.quad(
        lambda theta: math.exp(log_ray(theta) - peak), 0.0, math.pi, epsabs=0.0, epsrel=SECTION_EPSREL, limit=200
    )
    if not value > 0.0:
        return exact(-math.inf)
    return Estimate(
        log_value=math.log(2.0) + peak + math.log(value) - log_z,
        abs_log_error=error / value + max(errors, default=0.0),
        method="quadrature",
        count=len(errors),
    )


def _slice_monte_carlo(
    mu: NormMeasure, K: ConvexBody, direction: NDArray[np.float64], r: float, log_z: float, budget: int, seed: int
) -> Estimate:
    n = mu.n
    basis = hyperplane_basis(direction)
    reach = r * math.sqrt(float(np.sum(np.asarray(support(K, np.eye(n))) ** 2)))
    proposal = UniformBoxProposal((reach,) * (n - 1))

    def log_density(y: NDArray[np.float64]) -> NDArray[np.float64]:
        return -phi_values(mu.phi, np.asarray(norm(mu.L, y @ basis.T))) - log_z

    estimate = mc_region_measure(
        log_density, lambda y: np.asarray(norm(K, y @ basis.T)) <= r, proposal, budget, seed, workers=1
    )
    if estimate.degenerate:
        logger.warning("Degenerate section slice for direction %s at r=%g", direction, r)
    return estimate


def _compare(k: Estimate, ref: Estimate) -> str:
    if k.log_value == ref.log_value:
        return "equal"
    k_lo, k_hi = k.bounds(COMPARE_Z)
    l_lo, l_hi = ref.bounds(COMPARE_Z)
    deterministic = k.method != "monte-carlo" and ref.method != "monte-carlo"
    if deterministic and abs(k.log_value - ref.log_value) <= EQUAL_RTOL * max(1.0, abs(ref.log_value)):
        return "equal"
    if k_hi < l_lo:
        return "strict"
    if k_lo > l_hi:
        return "violated"
    return "overlap"


def dominance_check(
    mu: NormMeasure,
    K: ConvexBody,
    L: ConvexBody,
    r_grid: Sequence[float],
    xi_net: Optional[ArrayLike] = None,
    budget: int = DEFAULT_BUDGET,
    seed: int = 0,
    workers: Optional[int] = None,
) -> DominanceReport:
    """Certified comparison of section measures of rK and rL over an r grid and a direction net.

    The default net is sphere_net(n, 64 n). Each pair uses one seed for both bodies.
    """
    n = mu.n
    if not len(r_grid):
        raise ValueError("r_grid must be nonempty")
    net = sphere_net(n, 64 * n) if xi_net is None else np.atleast_2d(np.asarray(xi_net, dtype=float))
    if not len(net):
        raise ValueError("xi_net must be nonempty")
    pairs = [(float(r), tuple(float(x) for x in xi)) for r in r_grid for xi in net]

    def evaluate(index: int) -> SectionPair:
        r, xi = pairs[index]
        pair_seed = derive_seed(seed, index)
        k = section_measure(mu, K, xi, r, budget, pair_seed)
        ref = section_measure(mu, L, xi, r, budget, pair_seed)
        return SectionPair(
            r=r,
            xi=list(xi),
            log_k=k.log_value,
            log_l=ref.log_value,
            k_error=k.abs_log_error,
            l_error=ref.abs_log_error,
            status=_compare(k, ref),
        )

    with ThreadPoolExecutor(max_workers=workers or default_workers()) as pool:
        results = list(pool.map(evaluate, range(len(pairs))))

    volume_ratios = [
        math.exp(
            central_section_estimate(K, xi, budget, seed).log_value
            - central_section_estimate(L, xi, budget, seed).log_value
        )
        for xi in net
    ]
    failure = next((pair for pair in results if pair.status == "violated"), None)
    if failure is not None:
        verdict = "fails"
        logger.info("Section dominance fails at r=%g, xi=%s", failure.r, failure.xi)
    elif all(pair.status in ("strict", "equal") for pair in results):
        verdict = "holds"
    else:
        verdict = "inconclusive"
    return DominanceReport(
        pairs=results,
        verdict=verdict,
        failure_r=failure.r if failure else None,
        failure_xi=failure.xi if failure else None,
        volume_ratios=volume_ratios,
    )


def small_dilate_ratio(
    mu: NormMeasure, K: ConvexBody, L: ConvexBody, t: float = SMALL_DILATE, budget: int = DEFAULT_BUDGET, seed: int = 0
) -> float:
    """mu(tK) / mu(tL); tends to |K| / |L| as t -> 0+."""
    k = layered_mass(mu, Dilate(K, t), budget, seed)
    ref = layered_mass(mu, Dilate(L, t), budget, seed)
    return math.exp(k.log_value - ref.log_value)


def _mass_conclusion(k: Estimate, ref: Estimate) -> str:
    if k.log_value == ref.log_value:
        return "k_le_l"
    k_lo, k_hi = k.bounds(COMPARE_Z)
    l_lo, l_hi = ref.bounds(COMPARE_Z)
    if k_hi <= l_lo:
        return "k_le_l"
    if k_lo > l_hi:
        return "k_gt_l"
    return "overlap"


def bp_experiment(
    mu: Measure,
    K: ConvexBody,
    L: ConvexBody,
    r_grid: Sequence[float],
    xi_net: Optional[ArrayLike] = None,
    budget: int = DEFAULT_BUDGET,
    seed: int = 0,
    workers: Optional[int] = None,
) -> DominanceReport:
    """Dominance hypothesis plus the mass comparison of K and L.

    For a norm-density measure a counterexample is a run where the section hypothesis
    holds and mu(K) > mu(L) is certified. For a uniform measure the hypothesis is the
    dilate inequality mu(tK) <= mu(tL) on r_grid, and a counterexample is a run where it
    holds although K is not contained in L.
    """
    if isinstance(mu, UniformMeasure):
        return _uniform_experiment(mu, K, L, r_grid)
    report = dominance_check(mu, K, L, r_grid, xi_net, budget, seed, workers)
    mass_k = layered_mass(mu, K, budget, derive_seed(seed, 1), workers)
    mass_l = layered_mass(mu, L, budget, derive_seed(seed, 2), workers)
    conclusion = _mass_conclusion(mass_k, mass_l)
    volume_ratio = math.exp(volume_estimate(K, budget, seed).log_value - volume_estimate(L, budget, seed).log_value)
    report = report.model_copy(
        update={
            "mass_k": mass_k,
            "mass_l": mass_l,
            "conclusion": conclusion,
            "counterexample": report.verdict == "holds" and conclusion == "k_gt_l",
            "small_dilate_ratio": small_dilate_ratio(mu, K, L, SMALL_DILATE, budget, derive_seed(seed, 3)),
            "volume_ratio": volume_ratio,
        }
    )
    logger.info("bp-experiment: hypothesis %s, masses %s", report.verdict, conclusion)
    return report


def _uniform_experiment(mu: UniformMeasure, K: ConvexBody, L: ConvexBody, t_grid: Sequence[float]) -> DominanceReport:
    rows = []
    for t in t_grid:
        mass_k = uniform_mass(mu, K, float(t))
        mass_l = uniform_mass(mu, L, float(t))
        rows.append(DilateRow(t=float(t), mass_k=mass_k, mass_l=mass_l, holds=mass_k <= mass_l * (1.0 + EQUAL_RTOL)))
    holds = all(row.holds for row in rows)
    included = inradius(L, K).R >= 1.0 - EQUAL_RTOL
    return DominanceReport(
        verdict="holds" if holds else "fails",
        failure_r=next((row.t for row in rows if not row.holds), None),
        dilate_rows=rows,
        inclusion=included,
        counterexample=holds and not included,
        volume_ratio=math.exp(volume_estimate(K).log_value - volume_estimate(L).log_value),
    )


RECTANGLE = Box((math.pi / 2.0, 0.5))


def rectangle_demo(t_grid: Sequence[float]) -> RectangleDemoReport:
    """|tB ∩ omega| <= |t omega ∩ omega| for omega = [-pi/2, pi/2] x [-1/2, 1/2], exactly.

    Both bodies have area pi, and the disc is not inside omega.
    """
    omega_area = math.prod(2.0 * h for h in RECTANGLE.half_widths)
    rows = []
    for t in t_grid:
        t = float(t)
        if not t > 0.0:
            raise ValueError(f"t must be positive, got {t}")
        s = min(t, 1.0)
        area_ball = circle_box_area(t, RECTANGLE)
        area_omega = omega_area * s * s
        rows.append(RectangleDemoRow(t=t, area_ball=area_ball, area_omega=area_omega, passed=area_ball <= area_omega))
    up = np.array([0.0, 1.0])
    support_ball = float(support(EuclideanBall(2), up))
    support_omega = float(support(RECTANGLE, up))
    volume_ball = ball_volume(2)
    included = support_ball <= support_omega
    passed = (
        all(row.passed for row in rows)
        and math.isclose(volume_ball, omega_area, rel_tol=1e-12)
        and math.isclose(omega_area, math.pi, rel_tol=1e-12)
        and not included
    )
    logger.info("rectangle-demo over %d points: %s", len(rows), "pass" if passed else "fail")
    return RectangleDemoReport(
        rows=rows,
        volume_ball=volume_ball,
        volume_omega=omega_area,
        support_ball=support_ball,
        support_omega=support_omega,
        included=included,
        passed=passed,
    )


def _inner_comparison(
    K: ConvexBody, L: ConvexBody, R: float, radii: Sequence[float], budget: int, seed: int
) -> Optional[bool]:
    """|K ∩ sL| <= |RL ∩ sL| on a grid of s.

    Sampled layers only count as a failure when their lower bound clears the reference;
    a layer with no accepted samples cannot, and is skipped.
    """
    log_l = volume_estimate(L).log_value
    n = dim(L)
    for index, s in enumerate(radii):
        layer = layer_volume(K, L, s, budget, derive_seed(seed, index))
        if layer.degenerate:
            continue
        log_reference = log_l + n * math.log(min(s, R)) + math.log1p(1e-9)
        low, _ = layer.bounds(COMPARE_Z)
        if low > log_reference:
            logger.info("Layer s=%g: |K ∩ sL| exceeds |RL ∩ sL|", s)
            return False
    return True


def fact_check(
    phi: PhiFunction,
    L: ConvexBody,
    K: ConvexBody,
    R: float,
    budget: int = DEFAULT_BUDGET,
    seed: int = 0,
) -> FactCheckReport:
    """Given |K| <= |RL|, certify mu(K) <= mu(RL) for mu with density e^(-phi(||x||_L))."""
    if not R > 0.0:
        raise GeometryError(f"R must be positive, got {R}")
    n = dim(L)
    volume_k = volume_estimate(K, budget, seed)
    log_rl = volume_estimate(L).log_value + n * math.log(R)
    if volume_k.log_value > log_rl + math.log1p(1e-12):
        logger.info("Volume hypothesis fails: |K| = %g > |RL| = %g", volume_k.value, math.exp(log_rl))
        return FactCheckReport(
            status="hypothesis_violated", R=R, volume_k=volume_k.value, volume_rl=math.exp(log_rl)
        )
    mu = NormMeasure(phi, L)
    mass_k = layered_mass(mu, K, budget, seed)
    mass_rl = mass_dilate(mu, R)
    low, high = mass_k.bounds(COMPARE_Z)
    ceiling = mass_rl * (1.0 + FACT_RTOL)
    if math.exp(high) <= ceiling:
        status = "holds"
    elif math.exp(low) > ceiling:
        status = "violated"
    else:
        status = "inconclusive"

    _, outer = bracket(K, L)
    top = max(outer, R) * 2.0
    radii = [top * (i + 1) / INNER_GRID for i in range(INNER_GRID)]
    inner_ok = _inner_comparison(K, L, R, radii, max(budget // INNER_GRID, 1), derive_seed(seed, 2))
    return FactCheckReport(
        status=status,
        R=R,
        volume_k=volume_k.value,
        volume_rl=math.exp(log_rl),
        mass_k=mass_k,
        mass_rl=mass_rl,
        inner_ok=inner_ok,
        certified=mass_k.method != "monte-carlo",
    )


def fact_sweep(trials: int = 100, seed: int = 0, budget: int = DEFAULT_BUDGET) -> FactSweepReport:
    """Random symmetric quadrilaterals K against the square L = [-1, 1]^2 with R^2 |L| >= |K|."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    L = Box((1.0, 1.0))
    phi = GaussianNormalized(2)
    reports = []
    for i in range(trials):
        K = random_symmetric_polygon(rng, pairs=2)
        R = math.sqrt(volume_estimate(K).value / 4.0) * float(rng.uniform(1.0, 1.2))
        reports.append(fact_check(phi, L, K, R, budget, derive_seed(seed, i)))
    violated = sum(report.status == "violated" for report in reports)
    if violated:
        status = "violated"
    elif all(report.status == "holds" for report in reports):
        status = "holds"
    else:
        status = "inconclusive"
    logger.info("fact sweep: %d trials, %d violated, status %s", trials, violated, status)
    return FactSweepReport(trials=reports, violated=violated, status=status)
