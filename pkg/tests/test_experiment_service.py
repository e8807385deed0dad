"""Tests for the experiment service and the run ledger."""

import math

import pytest
from scipy import stats

from app.config import run_config
from app.database import reset_db
from app.errors import ConfigError
from app.experiment_service import ExperimentService, is_inconclusive, verdict_of
from app.models import DominanceReport, WitnessReport

GAUSSIAN2 = {"phi": {"type": "gaussian", "n": 2}, "L": {"type": "ball", "dim": 2}}
SQUARE = {"type": "box", "half_widths": [1, 1]}


@pytest.fixture()
def new_db():
    """Reset database for each test."""
    reset_db()
    yield
    reset_db()


def test_mass_grid():
    """Test masses of dilates of the square."""
    config = run_config({"subcommand": "mass", "measure": GAUSSIAN2, "body": SQUARE, "grid": "1:2:2"})
    report = ExperimentService.mass(config)
    assert [row["t"] for row in report.rows] == [1.0, 2.0]
    assert report.rows[0]["mass"] == pytest.approx((2.0 * stats.norm.cdf(1.0) - 1.0) ** 2, rel=1e-9)


def test_mass_uniform():
    """Test the mass of a disc under the uniform measure on the rectangle."""
    measure = {"uniform_on": {"type": "box", "half_widths": [math.pi / 2, 0.5]}}
    config = run_config({"measure": measure, "body": {"type": "ball", "dim": 2}})
    assert ExperimentService.mass(config).rows[0]["mass"] == pytest.approx(1.9132 / math.pi, abs=1e-4)


def test_tail_rows():
    """Test that tail reports carry a bracket and a plank bound per point."""
    config = run_config({"measure": GAUSSIAN2, "body": SQUARE, "grid": "1:3:3", "budget": 5000})
    report = ExperimentService.tail(config)
    assert len(report.brackets) == len(report.plank) == 3
    for bracket, plank in zip(report.brackets, report.plank):
        assert bracket.lower.log_value <= bracket.upper.log_value
        assert plank.log_value <= bracket.upper.log_value


def test_missing_inputs():
    """Test that absent measure, body or grid raise configuration errors."""
    with pytest.raises(ConfigError):
        ExperimentService.mass(run_config({"body": SQUARE}))
    with pytest.raises(ConfigError):
        ExperimentService.mass(run_config({"measure": GAUSSIAN2}))
    with pytest.raises(ConfigError):
        ExperimentService.ldp_scan(run_config({"measure": GAUSSIAN2, "body": SQUARE}))
    with pytest.raises(ConfigError):
        ExperimentService.induction(run_config({"grid": "1:2:2"}))


def test_tail_needs_norm_measure():
    """Test that the uniform measure is rejected where a profile is needed."""
    config = run_config({"measure": {"uniform_on": SQUARE}, "body": SQUARE, "grid": "1:2:2"})
    with pytest.raises(ConfigError):
        ExperimentService.tail(config)


def test_induction_from_measure_profile():
    """Test that the profile may come from the measure."""
    config = run_config({"measure": {"phi": {"type": "power"}, "L": SQUARE}, "grid": "5:10:2", "m_max": 2})
    report = ExperimentService.induction(config)
    assert len(report.rows) == 4
    assert report.ibp_all_ok


def test_pathological_phi_validation():
    """Test that the knot ladder comes with a validation pass."""
    report = ExperimentService.pathological_phi(run_config({"k_max": 10}))
    assert report.truncated
    assert report.validation.passed
    assert report.validation.points == 10_000
    assert verdict_of(report) == "truncated"


def test_exceptional_set():
    """Test the exceptional-set subcommand for a linear profile."""
    config = run_config({"phi": {"type": "linear"}, "alpha": 1.5, "T": 2.0, "step": 0.1})
    report = ExperimentService.exceptional_set(config)
    assert report.measure == 0.0
    assert report.points_total == 20


def test_uniform_experiment():
    """Test the dilation harness with the uniform measure on the rectangle."""
    rectangle = {"type": "box", "half_widths": [math.pi / 2, 0.5]}
    config = run_config(
        {
            "measure": {"uniform_on": rectangle},
            "body": {"type": "ball", "dim": 2},
            "body2": rectangle,
            "grid": "0.1:3:8",
        }
    )
    report = ExperimentService.bp_experiment(config)
    assert report.counterexample
    assert verdict_of(report) == "holds"


def test_fact_check_single():
    """Test one fact check from a measure and a body."""
    config = run_config({"measure": {"phi": {"type": "gaussian", "n": 2}, "L": SQUARE}, "body": SQUARE, "R": 1.0})
    report = ExperimentService.fact_check(config)
    assert report.status == "holds"
    assert report.violated == 0


def test_verdicts():
    """Test headline verdicts and the inconclusive test."""
    inconclusive = WitnessReport(status="inconclusive", R=1.0, t_max=4.0)
    assert verdict_of(inconclusive) == "inconclusive"
    assert is_inconclusive(inconclusive)
    assert not is_inconclusive(WitnessReport(status="witness", t_star=2.0, R=1.0, t_max=4.0))
    assert is_inconclusive(DominanceReport(verdict="holds", conclusion="overlap"))
    assert not is_inconclusive(DominanceReport(verdict="holds", conclusion="k_le_l"))
    assert verdict_of(object()) is None


def test_record_and_list_runs(new_db):
    """Test the run ledger, newest first and filtered by subcommand."""
    demo = run_config({"subcommand": "rectangle-demo", "grid": "1:2:2"})
    first = ExperimentService.record_run(demo, ExperimentService.rectangle_demo(demo))
    scan_config = run_config({"subcommand": "exceptional-set", "phi": {"type": "linear"}, "T": 1.0, "step": 0.5})
    ExperimentService.record_run(scan_config, ExperimentService.exceptional_set(scan_config))
    second = ExperimentService.record_run(demo, ExperimentService.rectangle_demo(demo))

    assert first.id is not None
    assert first.verdict == "pass"
    assert first.report["passed"] is True
    runs = ExperimentService.list_runs("rectangle-demo")
    assert [run.id for run in runs] == [second.id, first.id]
    assert len(ExperimentService.list_runs()) == 3
    assert ExperimentService.list_runs("witness") == []
