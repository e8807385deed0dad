import math
from datetime import datetime
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import ConfigDict
from sqlmodel import JSON, Column, Field, SQLModel

# Persistent models


class ExperimentRecord(SQLModel, table=True):
    """One recorded CLI run: the validated config and the report it produced."""

    __tablename__ = "experiment_records"  # type: ignore[assignment]

    id: Optional[int] = Field(default=None, primary_key=True)
    subcommand: str = Field(max_length=50, index=True)
    seed: int = Field(default=0)
    verdict: Optional[str] = Field(default=None, max_length=50, description="pass, fail, witness, holds, ...")
    config: Dict[str, Any] = Field(default={}, sa_column=Column(JSON))
    report: Dict[str, Any] = Field(default={}, sa_column=Column(JSON))
    created_at: datetime = Field(default_factory=datetime.utcnow)


# Non-persistent schemas: numeric results


class Estimate(SQLModel, table=False):
    """A positive quantity carried as its natural log, with an error bound on that log."""

    log_value: float
    abs_log_error: float = Field(default=0.0, description="deterministic bound, or one standard error for MC")
    method: str = Field(default="quadrature", max_length=20, description="exact, quadrature, monte-carlo")
    count: int = Field(default=0, description="panels or samples used")
    degenerate: bool = Field(default=False)

    @property
    def value(self) -> float:
        return math.exp(self.log_value)

    def bounds(self, z: float = 3.0) -> Tuple[float, float]:
        """Log-scale interval; Monte Carlo errors are widened to z standard errors."""
        if self.method != "monte-carlo":
            return self.log_value - self.abs_log_error, self.log_value + self.abs_log_error
        spread = z * self.abs_log_error
        low = self.log_value + math.log1p(-spread) if spread < 1.0 else -math.inf
        return low, self.log_value + math.log1p(spread)


class PhiValidationReport(SQLModel, table=False):
    """Grid check of nonnegativity and monotone values/derivatives."""

    passed: bool
    nonnegative: bool
    monotone_values: bool
    monotone_derivatives: bool
    points: int
    first_violation_index: Optional[int] = None
    first_violation_t: Optional[float] = None
    first_violation: Optional[str] = None


class PathologicalKnot(SQLModel, table=False):
    k: int
    alpha_log2: int = Field(description="alpha_k = 2^alpha_log2")
    t: float
    log_t_offset: float = Field(description="ln(t_k - k)")
    phi_t: float
    log_dphi_t: float
    log_compare: bool = Field(default=False, description="e^phi(t_k) outside binary64, compared via logs")
    holds: bool


class PathologicalReport(SQLModel, table=False):
    requested: int
    constructed: int
    truncated: bool = False
    knots: List[PathologicalKnot] = []
    validation: Optional[PhiValidationReport] = None

    def table(self) -> Tuple[List[str], List[List[Any]]]:
        columns = ["k", "alpha_log2", "t", "log_t_offset", "phi_t", "log_dphi_t", "holds"]
        return columns, [[getattr(knot, c) for c in columns] for knot in self.knots]


class MassReport(SQLModel, table=False):
    """mu(tK) for one or more dilates."""

    rows: List[Dict[str, Any]] = []

    def table(self) -> Tuple[List[str], List[List[Any]]]:
        columns = ["t", "mass", "abs_log_error", "method"]
        return columns, [[row[c] for c in columns] for row in self.rows]


class TailBracket(SQLModel, table=False):
    """ln mu((tK)^c) bracketed by the dilates t*r_in*L and t*R_out*L, with an MC point inside."""

    t: float
    r_in: float
    r_out: float
    lower: Estimate
    upper: Estimate
    point: Estimate
    flagged: bool = False


class TailReport(SQLModel, table=False):
    brackets: List[TailBracket] = []
    plank: List[Estimate] = []

    def table(self) -> Tuple[List[str], List[List[Any]]]:
        columns = ["t", "log_lower", "log_point", "log_upper", "log_plank", "point_error", "flagged"]
        rows = []
        for bracket, plank in zip(self.brackets, self.plank):
            rows.append(
                [
                    bracket.t,
                    bracket.lower.log_value,
                    bracket.point.log_value,
                    bracket.upper.log_value,
                    plank.log_value,
                    bracket.point.abs_log_error,
                    bracket.flagged,
                ]
            )
        return columns, rows


class TailRatio(SQLModel, table=False):
    t: float
    rho: float
    rho_lo: float
    rho_hi: float
    bracket: TailBracket


class LdpScanRow(SQLModel, table=False):
    t: float
    rho: float
    rho_lo: float
    rho_hi: float
    window_sup: float


class LdpScanReport(SQLModel, table=False):
    """Large-deviation ratio on a grid with window suprema and a trend verdict."""

    window: float = 2.0
    delta: float = 0.15
    rows: List[LdpScanRow] = []
    approaching: bool = False
    verdict: str = Field(default="empty", description="pass, fail or empty")

    def table(self) -> Tuple[List[str], List[List[Any]]]:
        columns = ["t", "rho", "rho_lo", "rho_hi", "window_sup"]
        return columns, [[getattr(row, c) for c in columns] for row in self.rows]


class InductionRow(SQLModel, table=False):
    t: float
    m: int
    log_f_m: float
    log_f_prev: float
    x: Optional[float] = None
    y: Optional[float] = None
    xy: Optional[float] = None
    ibp_ok: Optional[bool] = None
    flagged: bool = False


class InductionReport(SQLModel, table=False):
    rows: List[InductionRow] = []
    ibp_all_ok: bool = True

    def table(self) -> Tuple[List[str], List[List[Any]]]:
        columns = ["t", "m", "log_f_m", "log_f_prev", "x", "y", "xy", "ibp_ok", "flagged"]
        return columns, [[getattr(row, c) for c in columns] for row in self.rows]


class WitnessStep(SQLModel, table=False):
    t: float
    k_lower: float = Field(description="certified lower bound of ln mu((tK)^c)")
    ref_upper: float = Field(description="certified upper bound of ln mu((tR ref)^c)")
    k_upper: float
    ref_lower: float
    separated: bool


class WitnessReport(SQLModel, table=False):
    status: str = Field(description="witness, none_found or inconclusive")
    t_star: Optional[float] = None
    R: float
    t_max: float
    steps: List[WitnessStep] = []

    def table(self) -> Tuple[List[str], List[List[Any]]]:
        columns = ["t", "k_lower", "ref_upper", "k_upper", "ref_lower", "separated"]
        return columns, [[getattr(step, c) for c in columns] for step in self.steps]


class ExceptionalSetReport(SQLModel, table=False):
    alpha: float
    T: float
    step: float
    order: int = 0
    measure: float
    points_inside: int
    points_total: int
    integral_bound: Optional[float] = None

    def table(self) -> Tuple[List[str], List[List[Any]]]:
        columns = ["alpha", "T", "step", "order", "measure", "points_inside", "points_total"]
        return columns, [[getattr(self, c) for c in columns]]


class SectionPair(SQLModel, table=False):
    r: float
    xi: List[float]
    log_k: float
    log_l: float
    k_error: float
    l_error: float
    status: str = Field(description="strict, equal, violated or overlap")


class DilateRow(SQLModel, table=False):
    t: float
    mass_k: float
    mass_l: float
    holds: bool


class DominanceReport(SQLModel, table=False):
    """Section-dominance hypothesis over (r, xi) pairs and, for full experiments, the mass comparison."""

    pairs: List[SectionPair] = []
    verdict: str = Field(default="inconclusive", description="holds, fails or inconclusive")
    failure_r: Optional[float] = None
    failure_xi: Optional[List[float]] = None
    volume_ratios: List[float] = []
    mass_k: Optional[Estimate] = None
    mass_l: Optional[Estimate] = None
    conclusion: Optional[str] = Field(default=None, description="k_le_l, k_gt_l or overlap")
    counterexample: bool = False
    small_dilate_ratio: Optional[float] = None
    volume_ratio: Optional[float] = None
    dilate_rows: List[DilateRow] = []
    inclusion: Optional[bool] = None

    def table(self) -> Tuple[List[str], List[List[Any]]]:
        if self.dilate_rows:
            columns = ["t", "mass_k", "mass_l", "holds"]
            return columns, [[getattr(row, c) for c in columns] for row in self.dilate_rows]
        columns = ["r", "xi", "log_k", "log_l", "k_error", "l_error", "status"]
        rows = [
            [p.r, " ".join(format(x, ".17g") for x in p.xi), p.log_k, p.log_l, p.k_error, p.l_error, p.status]
            for p in self.pairs
        ]
        return columns, rows


class RectangleDemoRow(SQLModel, table=False):
    t: float
    area_ball: float
    area_omega: float
    passed: bool


class RectangleDemoReport(SQLModel, table=False):
    rows: List[RectangleDemoRow] = []
    volume_ball: float
    volume_omega: float
    support_ball: float
    support_omega: float
    included: bool
    passed: bool

    def table(self) -> Tuple[List[str], List[List[Any]]]:
        return ["t", "area_ball", "area_omega", "pass"], [
            [row.t, row.area_ball, row.area_omega, row.passed] for row in self.rows
        ]


class FactCheckReport(SQLModel, table=False):
    status: str = Field(description="holds, violated, inconclusive or hypothesis_violated")
    R: float
    volume_k: float
    volume_rl: float
    mass_k: Optional[Estimate] = None
    mass_rl: Optional[float] = None
    inner_ok: Optional[bool] = None
    certified: bool = False


class FactSweepReport(SQLModel, table=False):
    trials: List[FactCheckReport] = []
    violated: int = 0
    status: str = "holds"

    def table(self) -> Tuple[List[str], List[List[Any]]]:
        columns = ["trial", "status", "R", "volume_k", "volume_rl", "mass_k", "mass_k_error", "mass_rl"]
        rows = []
        for i, trial in enumerate(self.trials):
            mass = trial.mass_k
            rows.append(
                [
                    i,
                    trial.status,
                    trial.R,
                    trial.volume_k,
                    trial.volume_rl,
                    mass.value if mass else None,
                    mass.abs_log_error if mass else None,
                    trial.mass_rl,
                ]
            )
        return columns, rows


# Non-persistent schemas: JSON configuration files


class ConfigSchema(SQLModel, table=False):
    """Base for config files: unknown fields are rejected."""

    model_config = ConfigDict(extra="forbid")  # type: ignore[assignment]


class BallConfig(ConfigSchema):
    type: Literal["ball"]
    dim: int = Field(ge=1)
    radius: float = Field(default=1.0, gt=0)


class LpBallConfig(ConfigSchema):
    type: Literal["lpball"]
    p: float = Field(ge=1)
    semi_axes: List[float]


class BoxConfig(ConfigSchema):
    type: Literal["box"]
    half_widths: List[float]


class PolytopeConfig(ConfigSchema):
    """Either facets {x : |<a_i, x>| <= b_i} or a vertex list closed under x -> -x."""

    type: Literal["polytope"]
    directions: Optional[List[List[float]]] = None
    offsets: Optional[List[float]] = None
    vertices: Optional[List[List[float]]] = None


class DilateConfig(ConfigSchema):
    type: Literal["dilate"]
    body: Dict[str, Any]
    factor: float = Field(gt=0)


class PowerConfig(ConfigSchema):
    type: Literal["power"]
    p: float = Field(default=2.0, ge=1)
    scale: float = Field(default=1.0, gt=0)
    offset: float = Field(default=0.0, ge=0)
    plateau: float = Field(default=0.0, ge=0)


class LinearConfig(ConfigSchema):
    type: Literal["linear"]
    slope: float = Field(default=1.0, gt=0)
    offset: float = Field(default=0.0, ge=0)
    plateau: float = Field(default=0.0, ge=0)


class GaussianConfig(ConfigSchema):
    type: Literal["gaussian"]
    n: int = Field(ge=1)


class PathologicalConfig(ConfigSchema):
    type: Literal["pathological"]
    k_max: int = Field(default=10, ge=1)


class MeasureConfig(ConfigSchema):
    """{"phi": ..., "L": ...} for a norm density, or {"uniform_on": ...}."""

    phi: Optional[Dict[str, Any]] = None
    L: Optional[Dict[str, Any]] = None
    uniform_on: Optional[Dict[str, Any]] = None


class RunConfig(ConfigSchema):
    """Everything a subcommand needs; CLI flags override file values."""

    subcommand: Optional[str] = None
    measure: Optional[Dict[str, Any]] = None
    phi: Optional[Dict[str, Any]] = None
    body: Optional[Dict[str, Any]] = None
    body2: Optional[Dict[str, Any]] = None
    grid: Optional[str] = Field(default=None, description="start:end:count")
    log: bool = False
    window: float = Field(default=2.0, gt=1)
    delta: float = Field(default=0.15, gt=0)
    budget: int = Field(default=200_000, ge=1)
    seed: int = 0
    out: Optional[str] = None
    format: Literal["csv", "json"] = "csv"
    strict: bool = False
    threads: Optional[int] = Field(default=None, ge=1)
    R: float = 1.0
    t0: float = Field(default=1.0, gt=0)
    t_max: float = Field(default=20.0, gt=0)
    alpha: float = 1.5
    T: float = Field(default=20.0, gt=0)
    step: float = Field(default=0.01, gt=0)
    order: int = Field(default=0, ge=0)
    k_max: int = Field(default=10, ge=1)
    m_max: int = Field(default=3, ge=1)
    net_size: Optional[int] = Field(default=None, ge=1)
    tmin: float = Field(default=0.01, gt=0)
    tmax: float = Field(default=10.0, gt=0)
    points: int = Field(default=200, ge=1)
    trials: int = Field(default=100, ge=1)
