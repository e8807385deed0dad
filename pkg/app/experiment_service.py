"""Service layer: one method per CLI subcommand, plus the run ledger."""

import logging
import math
from typing import Any, List, Optional

import numpy as np
from sqlmodel import desc, select

from app.asymptotics import (
    exceptional_set_measure,
    induction_diagnostics,
    ldp_scan,
    plank_tail_lower_log,
    witness_search,
)
from app.bodies import ConvexBody, Dilate, dim, sphere_net
from app.config import parse_body, parse_grid, parse_measure, parse_phi
from app.database import create_tables, get_session
from app.errors import ConfigError
from app.integrate import derive_seed
from app.measure import (
    Measure,
    NormMeasure,
    UniformMeasure,
    layered_mass,
    tail_log_bracket,
    uniform_mass_estimate,
)
from app.models import (
    DominanceReport,
    ExceptionalSetReport,
    ExperimentRecord,
    FactSweepReport,
    InductionReport,
    LdpScanReport,
    MassReport,
    PathologicalReport,
    RectangleDemoReport,
    RunConfig,
    TailReport,
    WitnessReport,
)
from app.phi import PhiFunction, build_pathological_phi, validate_phi
from app.sections import bp_experiment, dominance_check, fact_check, fact_sweep, rectangle_demo

logger = logging.getLogger(__name__)


def _measure(config: RunConfig) -> Measure:
    if config.measure is None:
        raise ConfigError("this subcommand needs a measure", field="measure")
    return parse_measure(config.measure)


def _norm_measure(config: RunConfig) -> NormMeasure:
    mu = _measure(config)
    if not isinstance(mu, NormMeasure):
        raise ConfigError("this subcommand needs a norm-density measure (phi and L)", field="measure")
    return mu


def _body(config: RunConfig, name: str = "body") -> ConvexBody:
    data = getattr(config, name)
    if data is None:
        raise ConfigError(f"this subcommand needs --{name}", field=name)
    return parse_body(data, prefix=name)


def _phi(config: RunConfig) -> PhiFunction:
    if config.phi is not None:
        return parse_phi(config.phi)
    if config.measure is not None and config.measure.get("phi") is not None:
        return parse_phi(config.measure["phi"], prefix="measure.phi")
    raise ConfigError("this subcommand needs --phi or a measure with phi", field="phi")


def _grid(config: RunConfig, default: Optional[List[float]] = None) -> List[float]:
    if config.grid is None:
        if default is None:
            raise ConfigError("this subcommand needs --grid start:end:count", field="grid")
        return default
    return parse_grid(config.grid, config.log)


def _net(config: RunConfig, n: int) -> np.ndarray:
    return sphere_net(n, config.net_size or 64 * n)


class ExperimentService:
    """Runs subcommands from a validated RunConfig and keeps the run ledger."""

    @staticmethod
    def mass(config: RunConfig) -> MassReport:
        """mu(tK) for each t of the grid (default t = 1)."""
        mu = _measure(config)
        K = _body(config)
        rows = []
        for i, t in enumerate(_grid(config, [1.0])):
            seed = derive_seed(config.seed, i)
            if isinstance(mu, UniformMeasure):
                estimate = uniform_mass_estimate(mu, K, t, config.budget, seed)
            else:
                estimate = layered_mass(mu, Dilate(K, t), config.budget, seed, config.threads)
            mass = estimate.value if estimate.log_value > -math.inf else 0.0
            rows.append({"t": t, "mass": mass, "abs_log_error": estimate.abs_log_error, "method": estimate.method})
        return MassReport(rows=rows)

    @staticmethod
    def tail(config: RunConfig) -> TailReport:
        mu = _norm_measure(config)
        K = _body(config)
        brackets, planks = [], []
        for i, t in enumerate(_grid(config)):
            brackets.append(tail_log_bracket(mu, K, t, config.budget, derive_seed(config.seed, i), config.threads))
            planks.append(plank_tail_lower_log(mu, K, t))
        return TailReport(brackets=brackets, plank=planks)

    @staticmethod
    def ldp_scan(config: RunConfig) -> LdpScanReport:
        return ldp_scan(
            _norm_measure(config),
            _body(config),
            _grid(config),
            window=config.window,
            delta=config.delta,
            budget=config.budget,
            seed=config.seed,
            workers=config.threads,
        )

    @staticmethod
    def induction(config: RunConfig) -> InductionReport:
        return induction_diagnostics(_phi(config), config.m_max, _grid(config))

    @staticmethod
    def pathological_phi(config: RunConfig) -> PathologicalReport:
        """Knot ladder plus a validation pass on 10^4 points past the last knot."""
        phi, report = build_pathological_phi(config.k_max)
        grid = np.linspace(0.0, float(report.constructed + 1), 10_000)
        return report.model_copy(update={"validation": validate_phi(phi, grid)})

    @staticmethod
    def witness(config: RunConfig) -> WitnessReport:
        mu = _norm_measure(config)
        return witness_search(
            mu,
            _body(config),
            config.R,
            mu.L,
            t0=config.t0,
            t_max=config.t_max,
            budget=config.budget,
            seed=config.seed,
            workers=config.threads,
        )

    @staticmethod
    def sections(config: RunConfig) -> DominanceReport:
        mu = _norm_measure(config)
        K = _body(config)
        return dominance_check(
            mu,
            K,
            _body(config, "body2"),
            _grid(config),
            _net(config, dim(K)),
            budget=config.budget,
            seed=config.seed,
            workers=config.threads,
        )

    @staticmethod
    def bp_experiment(config: RunConfig) -> DominanceReport:
        mu = _measure(config)
        K = _body(config)
        return bp_experiment(
            mu,
            K,
            _body(config, "body2"),
            _grid(config),
            _net(config, dim(K)),
            budget=config.budget,
            seed=config.seed,
            workers=config.threads,
        )

    @staticmethod
    def rectangle_demo(config: RunConfig) -> RectangleDemoReport:
        default = [float(t) for t in np.geomspace(config.tmin, config.tmax, config.points)]
        return rectangle_demo(_grid(config, default))

    @staticmethod
    def fact_check(config: RunConfig) -> FactSweepReport:
        """One check when a measure and body are given, otherwise the seeded polygon sweep."""
        if config.body is None:
            return fact_sweep(config.trials, config.seed, config.budget)
        mu = _norm_measure(config)
        report = fact_check(mu.phi, mu.L, _body(config), config.R, config.budget, config.seed)
        return FactSweepReport(
            trials=[report],
            violated=int(report.status == "violated"),
            status=report.status if report.status != "hypothesis_violated" else "inconclusive",
        )

    @staticmethod
    def exceptional_set(config: RunConfig) -> ExceptionalSetReport:
        return exceptional_set_measure(_phi(config), config.alpha, config.T, config.step, config.order)

    @staticmethod
    def record_run(config: RunConfig, report: Any) -> ExperimentRecord:
        """Persist a finished run in the ledger."""
        create_tables()
        record = ExperimentRecord(
            subcommand=config.subcommand or "",
            seed=config.seed,
            verdict=verdict_of(report),
            config=config.model_dump(),
            report=report.model_dump(),
        )
        with get_session() as session:
            session.add(record)
            session.commit()
            session.refresh(record)
            logger.info("Recorded run %s (%s)", record.id, record.subcommand)
            return record

    @staticmethod
    def list_runs(subcommand: Optional[str] = None) -> List[ExperimentRecord]:
        """Recorded runs, newest first."""
        create_tables()
        with get_session() as session:
            statement = select(ExperimentRecord)
            if subcommand is not None:
                statement = statement.where(ExperimentRecord.subcommand == subcommand)
            statement = statement.order_by(desc(ExperimentRecord.id))
            return list(session.exec(statement).all())


def verdict_of(report: Any) -> Optional[str]:
    """The headline verdict of a report, if it has one."""
    match report:
        case LdpScanReport(verdict=verdict) | DominanceReport(verdict=verdict):
            return verdict
        case WitnessReport(status=status) | FactSweepReport(status=status):
            return status
        case RectangleDemoReport(passed=passed):
            return "pass" if passed else "fail"
        case InductionReport(ibp_all_ok=ok):
            return "pass" if ok else "fail"
        case PathologicalReport(truncated=truncated):
            return "truncated" if truncated else "complete"
    return None


def is_inconclusive(report: Any) -> bool:
    match report:
        case WitnessReport(status="inconclusive") | FactSweepReport(status="inconclusive"):
            return True
        case DominanceReport(verdict=verdict, conclusion=conclusion):
            return verdict == "inconclusive" or conclusion == "overlap"
    return False
