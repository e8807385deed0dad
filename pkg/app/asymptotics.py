"""Large-deviation diagnostics: tail ratios, window suprema, the induction ladder,
pyramid lower bounds, witness searches and exceptional sets."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.bodies import DEFAULT_BUDGET, ConvexBody, central_section_estimate, inradius, support
from app.errors import GeometryError, UndefinedRatioError
from app.integrate import default_workers, derive_seed, exact, log_tail_integral
from app.measure import NormMeasure, log_normalizer, log_tail_dilate, tail_log_bracket
from app.models import (
    Estimate,
    ExceptionalSetReport,
    InductionReport,
    InductionRow,
    LdpScanReport,
    LdpScanRow,
    TailRatio,
    WitnessReport,
    WitnessStep,
)
from app.phi import PhiFunction, phi_derivatives, phi_values

logger = logging.getLogger(__name__)

APPROACH_TOL = 1e-9
IBP_RTOL = 1e-9
WITNESS_Z = 3.0


def tail_ratio(
    mu: NormMeasure,
    K: ConvexBody,
    t: float,
    budget: int = DEFAULT_BUDGET,
    seed: int = 0,
    workers: Optional[int] = None,
) -> TailRatio:
    """rho(t) = ln mu((tK)^c) / phi(r(K,L) t), with the interval implied by the bracket."""
    r = inradius(K, mu.L).R
    denominator = float(phi_values(mu.phi, r * t))
    if not denominator > 0.0:
        raise UndefinedRatioError(f"phi(r t) = {denominator} at r={r}, t={t}; the ratio is undefined")
    found = tail_log_bracket(mu, K, t, budget, seed, workers)
    rho_lo = (found.lower.log_value - found.lower.abs_log_error) / denominator
    rho_hi = min((found.upper.log_value + found.upper.abs_log_error) / denominator, 0.0)
    rho = min(max(found.point.log_value / denominator, rho_lo), rho_hi)
    return TailRatio(t=t, rho=rho, rho_lo=rho_lo, rho_hi=rho_hi, bracket=found)


def _window_suprema(grid: Sequence[float], rhos: Sequence[float], window: float) -> List[float]:
    suprema = []
    for t in grid:
        inside = [rho for s, rho in zip(grid, rhos) if t <= s <= window * t]
        suprema.append(max(inside))
    return suprema


def _approaching(distances: Sequence[float]) -> bool:
    return all(later < earlier or later <= APPROACH_TOL for earlier, later in zip(distances, distances[1:]))


def ldp_scan(
    mu: NormMeasure,
    K: ConvexBody,
    grid: Sequence[float],
    window: float = 2.0,
    delta: float = 0.15,
    budget: int = DEFAULT_BUDGET,
    seed: int = 0,
    workers: Optional[int] = None,
) -> LdpScanReport:
    """Ratios on an increasing grid, their window suprema and a trend verdict.

    The verdict is "pass" when the distances |sup + 1| keep decreasing along the grid
    and the last window supremum lies within delta of -1. It describes the scanned
    range only.
    """
    grid = [float(t) for t in grid]
    if not grid:
        return LdpScanReport(window=window, delta=delta)
    if any(later <= earlier for earlier, later in zip(grid, grid[1:])):
        raise ValueError("ldp_scan needs a strictly increasing grid")
    if not window > 1.0:
        raise ValueError(f"window factor must exceed 1, got {window}")

    def point(index: int) -> TailRatio:
        return tail_ratio(mu, K, grid[index], budget, derive_seed(seed, index), workers=1)

    with ThreadPoolExecutor(max_workers=workers or default_workers()) as pool:
        ratios = list(pool.map(point, range(len(grid))))

    suprema = _window_suprema(grid, [r.rho for r in ratios], window)
    rows = [
        LdpScanRow(t=r.t, rho=r.rho, rho_lo=r.rho_lo, rho_hi=r.rho_hi, window_sup=s) for r, s in zip(ratios, suprema)
    ]
    distances = [abs(s + 1.0) for s in suprema]
    approaching = _approaching(distances)
    verdict = "pass" if approaching and distances[-1] <= delta else "fail"
    logger.info("ldp-scan over %d points: last window sup %.6g, verdict %s", len(grid), suprema[-1], verdict)
    return LdpScanReport(window=window, delta=delta, rows=rows, approaching=approaching, verdict=verdict)


def induction_diagnostics(phi: PhiFunction, m_max: int, grid: Sequence[float]) -> InductionReport:
    """X_m(t) = ln F_m / ln F_(m-1), Y(t) = ln F_0 / phi(t) with F_m(t) = int_t^inf (v - t)^m e^(-phi(v)) dv.

    Points where some ln F is not negative are flagged and get no ratios.
    """
    if m_max < 1:
        raise ValueError(f"m_max must be at least 1, got {m_max}")
    rows: List[InductionRow] = []
    for t in grid:
        t = float(t)
        logs = [log_tail_integral(phi, m, t, shift=t).log_value for m in range(m_max + 1)]
        value = float(phi_values(phi, t))
        slope = float(phi_derivatives(phi, t))
        y = logs[0] / value if value > 0.0 and logs[0] < 0.0 else None
        for m in range(1, m_max + 1):
            log_f, log_prev = logs[m], logs[m - 1]
            flagged = not (log_f < 0.0 and log_prev < 0.0)
            x = None if flagged else log_f / log_prev
            ibp_ok = None
            if slope > 0.0 and math.isfinite(slope):
                rhs = -math.log(slope / m) - log_f
                ibp_ok = -log_prev <= rhs + IBP_RTOL * max(1.0, abs(rhs))
            rows.append(
                InductionRow(
                    t=t,
                    m=m,
                    log_f_m=log_f,
                    log_f_prev=log_prev,
                    x=x,
                    y=y,
                    xy=x * y if x is not None and y is not None else None,
                    ibp_ok=ibp_ok,
                    flagged=flagged,
                )
            )
    ibp_all_ok = all(row.ibp_ok is not False for row in rows)
    if not ibp_all_ok:
        logger.warning("Integration-by-parts inequality failed at some grid point")
    return InductionReport(rows=rows, ibp_all_ok=ibp_all_ok)


def plank_tail_lower_log(mu: NormMeasure, K: ConvexBody, t: float) -> Estimate:
    """ln of the pyramid lower bound for mu((tK)^c).

    With R = r(K,L) and n_v the tangency normal, tK lies in the slab
    |<x, n_v>| <= tR h_L(n_v), and each half-space outside it contains the tip of a
    pyramid over u(L ∩ n_v^perp), which gives
    Z mu((tK)^c) >= 2 h_L(n_v) |L ∩ n_v^perp| int_tR^inf (u - tR)^(n-1) e^(-phi(u)) du.
    """
    certificate = inradius(K, mu.L)
    normal = np.asarray(certificate.normal, dtype=float)
    n = mu.n
    height = float(support(mu.L, normal))
    section = exact(0.0) if n == 1 else central_section_estimate(mu.L, normal)
    start = t * certificate.R
    radial = log_tail_integral(mu.phi, n - 1, start, shift=start)
    log_value = math.log(2.0 * height) + section.log_value + radial.log_value - log_normalizer(mu)
    return Estimate(
        log_value=min(log_value, 0.0),
        abs_log_error=section.abs_log_error + radial.abs_log_error,
        method="quadrature" if section.method != "monte-carlo" else "monte-carlo",
        count=radial.count,
    )


def _k_tail_bounds(
    mu: NormMeasure, K: ConvexBody, t: float, budget: int, seed: int, workers: Optional[int]
) -> Tuple[float, float]:
    """Certified (lower, upper) for ln mu((tK)^c)."""
    found = tail_log_bracket(mu, K, t, budget, seed, workers)
    lowers = [found.lower.log_value - found.lower.abs_log_error]
    uppers = [found.upper.log_value + found.upper.abs_log_error]
    plank = plank_tail_lower_log(mu, K, t)
    if plank.method != "monte-carlo":
        lowers.append(plank.log_value - plank.abs_log_error)
    if found.point.method == "monte-carlo" and not found.point.degenerate:
        low, high = found.point.bounds(WITNESS_Z)
        lowers.append(low)
        uppers.append(high)
    return max(lowers), min(uppers)


def witness_search(
    mu: NormMeasure,
    K: ConvexBody,
    R: float,
    reference: ConvexBody,
    t0: float = 1.0,
    t_max: float = 20.0,
    budget: int = DEFAULT_BUDGET,
    seed: int = 0,
    workers: Optional[int] = None,
) -> WitnessReport:
    """Doubling search for t with mu(tR ref) > mu(tK), i.e. ln mu((tK)^c) > ln mu((tR ref)^c), certified.

    Status "witness" needs strictly separated intervals. "none_found" means K contains
    R ref, or the last step certifies the reverse order. Anything else is "inconclusive".
    """
    if not R > 0.0:
        raise GeometryError(f"R must be positive, got {R}")
    if reference != mu.L:
        raise ValueError("the reference body must be the norm body L of the measure")
    if not 0.0 < t0 <= t_max:
        raise ValueError(f"need 0 < t0 <= t_max, got t0={t0}, t_max={t_max}")

    steps: List[WitnessStep] = []
    t = t0
    index = 0
    while t <= t_max * (1.0 + 1e-12):
        k_lower, k_upper = _k_tail_bounds(mu, K, t, budget, derive_seed(seed, index), workers)
        reference_tail = log_tail_dilate(mu, t * R)
        ref_upper = reference_tail.log_value + reference_tail.abs_log_error
        ref_lower = reference_tail.log_value - reference_tail.abs_log_error
        separated = k_lower > ref_upper
        steps.append(
            WitnessStep(
                t=t, k_lower=k_lower, ref_upper=ref_upper, k_upper=k_upper, ref_lower=ref_lower, separated=separated
            )
        )
        logger.debug("witness t=%g: K lower %.6g vs reference upper %.6g", t, k_lower, ref_upper)
        if separated:
            logger.info("Certified witness at t=%g", t)
            return WitnessReport(status="witness", t_star=t, R=R, t_max=t_max, steps=steps)
        t *= 2.0
        index += 1

    contained = inradius(K, reference).R >= R * (1.0 - 1e-12)
    reversed_order = bool(steps) and steps[-1].k_upper <= steps[-1].ref_lower
    status = "none_found" if contained or reversed_order else "inconclusive"
    logger.info("No witness up to t_max=%g: %s", t_max, status)
    return WitnessReport(status=status, R=R, t_max=t_max, steps=steps)


def exceptional_set_measure(
    phi: PhiFunction, alpha: float, T: float, step: float = 0.01, order: int = 0
) -> ExceptionalSetReport:
    """Midpoint-rule length of E ∩ [0, T].

    order 0: E = {t : ln F_0(t) < -alpha phi(t)}.
    order m: E = {t : ln F_m(t) < alpha ln F_(m-1)(t)}, counted where ln F_(m-1) < 0.
    """
    if not alpha > 1.0:
        raise ValueError(f"alpha must exceed 1, got {alpha}")
    if not (T > 0.0 and step > 0.0):
        raise ValueError("T and step must be positive")
    if order < 0:
        raise ValueError(f"order must be nonnegative, got {order}")
    cells = max(1, math.ceil(T / step - 1e-9))
    measure, inside = 0.0, 0
    for i in range(cells):
        lo = i * step
        width = min(step, T - lo)
        t = lo + 0.5 * width
        if order == 0:
            hit = log_tail_integral(phi, 0, t).log_value < -alpha * float(phi_values(phi, t))
        else:
            log_f = log_tail_integral(phi, order, t, shift=t).log_value
            log_prev = log_tail_integral(phi, order - 1, t, shift=t).log_value
            hit = log_prev < 0.0 and log_f < alpha * log_prev
        if hit:
            measure += width
            inside += 1
    bound = exceptional_bound_integral(phi, alpha, 0.0, T) if order == 0 else None
    return ExceptionalSetReport(
        alpha=alpha,
        T=T,
        step=step,
        order=order,
        measure=measure,
        points_inside=inside,
        points_total=cells,
        integral_bound=bound,
    )


def exceptional_bound_integral(phi: PhiFunction, alpha: float, t0: float, T: float) -> float:
    """int_t0^T -F'(t) / F(t)^(1/alpha) dt with F = F_0, an upper bound for |E ∩ [t0, T]|."""
    if not alpha > 1.0:
        raise ValueError(f"alpha must exceed 1, got {alpha}")
    power = 1.0 - 1.0 / alpha
    start = log_tail_integral(phi, 0, t0).log_value
    end = log_tail_integral(phi, 0, T).log_value
    return alpha / (alpha - 1.0) * (math.exp(power * start) - math.exp(power * end))


def convexity_ratio(phi: PhiFunction, r: float, t: float) -> Tuple[float, float]:
    """(phi(rt)/phi(t), r + (1 - r) phi(0)/phi(t)); convexity puts the first below the second for r in [0, 1]."""
    value = float(phi_values(phi, t))
    if not value > 0.0:
        raise UndefinedRatioError(f"phi(t) = {value} at t={t}")
    return float(phi_values(phi, r * t)) / value, r + (1.0 - r) * float(phi_values(phi, 0.0)) / value
