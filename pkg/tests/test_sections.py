"""Tests for section measures, dominance checks, the dilation harness and the rectangle demo."""

import math

import numpy as np
import pytest
from scipy import stats

from app.bodies import Box, Dilate, EuclideanBall, random_symmetric_polygon, sphere_net, volume
from app.errors import GeometryError
from app.measure import NormMeasure, UniformMeasure
from app.phi import GaussianNormalized
from app.sections import (
    bp_experiment,
    dominance_check,
    fact_check,
    fact_sweep,
    rectangle_demo,
    section_measure,
    small_dilate_ratio,
)

SQRT_2PI = math.sqrt(2.0 * math.pi)


def _interval(r):
    return 2.0 * stats.norm.cdf(r) - 1.0


@pytest.mark.parametrize("r", [0.5, 1.0, 3.0])
def test_section_of_ball(gaussian3, r):
    """Test the Gaussian measure of a central disc of radius r."""
    estimate = section_measure(gaussian3, EuclideanBall(3), [0.0, 0.0, 1.0], r)
    assert estimate.value == pytest.approx(-math.expm1(-r * r / 2.0) / SQRT_2PI, rel=1e-9)


def test_section_in_the_plane(gaussian2):
    """Test a segment section of a rectangle in R^2."""
    estimate = section_measure(gaussian2, Box((1.0, 2.0)), [1.0, 0.0], 0.75)
    assert estimate.value == pytest.approx(_interval(1.5) / SQRT_2PI, rel=1e-9)


def test_section_by_polar_quadrature(gaussian3):
    """Test a square section of the cube in R^3."""
    estimate = section_measure(gaussian3, Box((1.0, 1.0, 1.0)), [0.0, 0.0, 2.0], 1.0)
    assert estimate.method == "quadrature"
    assert estimate.value == pytest.approx(_interval(1.0) ** 2 / SQRT_2PI, rel=1e-7)


def test_section_by_sampling():
    """Test a cube section of the 4-cube, sampled in the hyperplane."""
    mu = NormMeasure(GaussianNormalized(4), EuclideanBall(4))
    estimate = section_measure(mu, Box((1.0,) * 4), [0.0, 0.0, 0.0, 1.0], 1.0, budget=100_000, seed=3)
    assert estimate.method == "monte-carlo"
    expected = math.log(_interval(1.0) ** 3 / SQRT_2PI)
    assert abs(estimate.log_value - expected) < 5.0 * estimate.abs_log_error


def test_section_edge_cases(gaussian2):
    """Test r = 0, the line and a zero direction."""
    assert section_measure(gaussian2, Box((1.0, 1.0)), [1.0, 0.0], 0.0).log_value == -math.inf
    line = NormMeasure(GaussianNormalized(1), Box((1.0,)))
    with pytest.raises(GeometryError):
        section_measure(line, Box((1.0,)), [1.0], 1.0)
    with pytest.raises(GeometryError):
        section_measure(gaussian2, Box((1.0, 1.0)), [0.0, 0.0], 1.0)


def test_dominance_holds_for_nested_boxes(gaussian2):
    """Test that a smaller box has smaller sections everywhere."""
    net = sphere_net(2, 8)
    report = dominance_check(gaussian2, Box((0.5, 0.5)), Box((1.0, 1.0)), [0.5, 1.0, 2.0], net)
    assert report.verdict == "holds"
    assert len(report.pairs) == 24
    assert all(pair.status == "strict" for pair in report.pairs)
    assert len(report.volume_ratios) == 8
    assert report.failure_r is None


def test_dominance_equal_bodies(gaussian2):
    """Test that identical bodies compare as equal."""
    report = dominance_check(gaussian2, Box((1.0, 1.0)), Box((1.0, 1.0)), [1.0], sphere_net(2, 4))
    assert report.verdict == "holds"
    assert {pair.status for pair in report.pairs} == {"equal"}


def test_dominance_fails_for_larger_body(gaussian2):
    """Test that the first violated pair is reported."""
    report = dominance_check(gaussian2, Box((1.0, 1.0)), Box((0.5, 0.5)), [0.5, 1.0], sphere_net(2, 4))
    assert report.verdict == "fails"
    assert report.failure_r == 0.5
    assert report.failure_xi is not None


def test_dominance_needs_a_grid(gaussian2):
    """Test that an empty r grid is rejected."""
    with pytest.raises(ValueError):
        dominance_check(gaussian2, Box((1.0, 1.0)), Box((1.0, 1.0)), [])


def test_small_dilate_ratio(gaussian2):
    """Test that mu(tK)/mu(tL) approaches the volume ratio for small t."""
    assert small_dilate_ratio(gaussian2, Box((0.5, 0.5)), Box((1.0, 1.0))) == pytest.approx(0.25, rel=1e-3)


def test_experiment_with_norm_measure(gaussian2):
    """Test the harness for nested boxes: the hypothesis holds and so does the conclusion."""
    report = bp_experiment(gaussian2, Box((0.5, 0.5)), Box((1.0, 1.0)), [0.5, 1.0], sphere_net(2, 4))
    assert report.verdict == "holds"
    assert report.conclusion == "k_le_l"
    assert not report.counterexample
    assert report.volume_ratio == pytest.approx(0.25)
    assert report.mass_k.value == pytest.approx(_interval(0.5) ** 2, rel=1e-8)


def test_experiment_with_uniform_measure(omega, uniform_omega):
    """Test that the disc and the rectangle give a counterexample for the uniform measure."""
    report = bp_experiment(uniform_omega, EuclideanBall(2), omega, [0.1, 0.5, 1.0, 2.0, 5.0])
    assert report.verdict == "holds"
    assert report.inclusion is False
    assert report.counterexample
    assert len(report.dilate_rows) == 5
    assert report.volume_ratio == pytest.approx(1.0)


def test_rectangle_demo():
    """Test the exact disc-versus-rectangle demonstration."""
    report = rectangle_demo([0.01, 0.5, 1.0, 1.5, 10.0])
    assert report.passed
    assert not report.included
    assert report.support_ball == 1.0
    assert report.support_omega == 0.5
    assert report.volume_ball == pytest.approx(math.pi)
    assert report.volume_omega == pytest.approx(math.pi)
    row = report.rows[2]
    assert row.area_ball == pytest.approx(1.9132, abs=1e-4)
    assert row.area_omega == pytest.approx(math.pi)
    assert all(r.passed for r in report.rows)


def test_rectangle_demo_rejects_zero():
    """Test that t must be positive."""
    with pytest.raises(ValueError):
        rectangle_demo([0.0])


def test_fact_check_holds():
    """Test mu(K) <= mu(RL) for a rectangle of the same area as the square."""
    report = fact_check(GaussianNormalized(2), Box((1.0, 1.0)), Box((0.5, 2.0)), 1.0)
    assert report.status == "holds"
    assert report.certified
    assert report.inner_ok
    assert report.mass_k.value == pytest.approx(_interval(0.5) * _interval(2.0), rel=1e-8)
    assert report.mass_rl == pytest.approx(_interval(1.0) ** 2, rel=1e-9)


def test_fact_check_hypothesis():
    """Test that |K| > |RL| is reported rather than checked."""
    report = fact_check(GaussianNormalized(2), Box((1.0, 1.0)), Box((0.5, 2.0)), 0.5)
    assert report.status == "hypothesis_violated"
    assert report.mass_k is None
    with pytest.raises(GeometryError):
        fact_check(GaussianNormalized(2), Box((1.0, 1.0)), Box((0.5, 2.0)), 0.0)


def test_fact_sweep():
    """Test a short seeded sweep over random quadrilaterals."""
    report = fact_sweep(trials=5, seed=0)
    assert len(report.trials) == 5
    assert report.violated == 0
    assert report.status == "holds"
    assert report == fact_sweep(trials=5, seed=0)


def test_uniform_measure_dimension():
    """Test the uniform measure exposes its dimension."""
    assert UniformMeasure(Box((1.0, 1.0, 1.0))).n == 3


def test_fact_check_equality_for_dilate():
    """Test mu(K) = mu(RL) to 1e-8 when K is RL itself."""
    square = Box((1.0, 1.0))
    report = fact_check(GaussianNormalized(2), square, Dilate(square, 0.8), 0.8)
    assert report.mass_k.value == pytest.approx(report.mass_rl, rel=1e-8)
    assert report.status == "holds"
    assert report.inner_ok


def test_fact_check_polygon_layers():
    """Test the layer comparison |K ∩ sL| <= |RL ∩ sL| for a random quadrilateral."""
    polygon = random_symmetric_polygon(np.random.default_rng(3))
    R = math.sqrt(volume(polygon) / 4.0) * 1.05
    report = fact_check(GaussianNormalized(2), Box((1.0, 1.0)), polygon, R, seed=1)
    assert report.inner_ok is True
    assert report.status != "violated"


@pytest.mark.slow
def test_fact_sweep_hundred_trials():
    """Test 100 seeded quadrilaterals: no trial puts mu(K) above mu(RL)."""
    report = fact_sweep(trials=100, seed=0)
    assert len(report.trials) == 100
    assert report.violated == 0
    assert report.status != "violated"
    for trial in report.trials:
        assert trial.volume_k <= trial.volume_rl * (1.0 + 1e-12)
        assert trial.inner_ok is True
        low, _ = trial.mass_k.bounds(3.0)
        assert math.exp(low) <= trial.mass_rl * (1.0 + 1e-8)
