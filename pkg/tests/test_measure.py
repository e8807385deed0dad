"""Tests for norm-density and uniform measures: normalizers, masses, tails and sampling."""

import math

import numpy as np
import pytest
from scipy import stats

from app.bodies import Box, Dilate, EuclideanBall
from app.integrate import UniformBoxProposal, mc_region_measure
from app.measure import (
    NormMeasure,
    RadialLaw,
    UniformMeasure,
    layer_volume,
    layered_mass,
    log_normalizer,
    log_tail_dilate,
    mass_dilate,
    sample,
    tail_log_bracket,
    uniform_mass,
    uniform_mass_estimate,
)
from app.phi import GaussianNormalized, Linear, Power


def test_gaussian_normalizer_is_one(gaussian3):
    """Test that the normalized Gaussian profile gives Z = 1."""
    assert log_normalizer(gaussian3) == pytest.approx(0.0, abs=1e-10)
    assert gaussian3.n == 3


def test_normalizer_of_box_measure():
    """Test Z = 2 int_0^inf e^(-t) dt for the Laplace law on the line."""
    mu = NormMeasure(Power(p=1.0), Box((1.0,)))
    assert log_normalizer(mu) == pytest.approx(math.log(2.0), abs=1e-11)


@pytest.mark.parametrize("t", [0.5, 2.0, 6.0, 20.0])
def test_dilate_tail_matches_chi(gaussian3, t):
    """Test ln mu((tB)^c) against the chi distribution."""
    assert log_tail_dilate(gaussian3, t).log_value == pytest.approx(float(stats.chi(3).logsf(t)), abs=1e-9)


def test_dilate_mass(gaussian2):
    """Test mu(aB) = 1 - e^(-a^2/2) in the plane."""
    assert mass_dilate(gaussian2, 1.5) == pytest.approx(-math.expm1(-1.125), rel=1e-10)
    assert mass_dilate(gaussian2, 0.01) == pytest.approx(-math.expm1(-0.00005), rel=1e-8)
    assert mass_dilate(gaussian2, 0.0) == 0.0
    assert log_tail_dilate(gaussian2, 0.0).log_value == 0.0


def test_layered_mass_of_square(gaussian2):
    """Test the Gaussian mass of [-1, 1]^2 by layered quadrature."""
    estimate = layered_mass(gaussian2, Box((1.0, 1.0)))
    assert estimate.method == "quadrature"
    assert estimate.value == pytest.approx((2.0 * stats.norm.cdf(1.0) - 1.0) ** 2, rel=1e-9)


def test_layered_mass_of_dilate(gaussian3):
    """Test that multiples of L reduce to the radial law."""
    estimate = layered_mass(gaussian3, EuclideanBall(3, 2.0))
    assert estimate.value == pytest.approx(stats.chi(3).cdf(2.0), rel=1e-9)


def test_layered_mass_monte_carlo():
    """Test the sampled mass of the cube [-1, 1]^4 under the standard Gaussian."""
    mu = NormMeasure(GaussianNormalized(4), EuclideanBall(4))
    estimate = layered_mass(mu, Box((1.0,) * 4), budget=100_000, seed=2)
    assert estimate.method == "monte-carlo"
    expected = 4.0 * math.log(2.0 * stats.norm.cdf(1.0) - 1.0)
    assert abs(estimate.log_value - expected) < 5.0 * estimate.abs_log_error


def test_layered_mass_needs_norm_measure(uniform_omega):
    """Test that a uniform measure is rejected."""
    with pytest.raises(TypeError):
        layered_mass(uniform_omega, Box((1.0, 1.0)))


def test_tail_bracket_collapses_for_dilates(gaussian3):
    """Test that K a multiple of L gives an exact, collapsed bracket."""
    found = tail_log_bracket(gaussian3, EuclideanBall(3), 2.0)
    assert found.lower == found.upper == found.point
    assert found.point.log_value == pytest.approx(float(stats.chi(3).logsf(2.0)), abs=1e-9)
    assert not found.flagged


def test_tail_bracket_at_zero(gaussian3):
    """Test that the complement of {0} has full measure."""
    found = tail_log_bracket(gaussian3, Box((1.0, 1.0, 1.0)), 0.0)
    assert found.point.log_value == 0.0


def test_tail_bracket_of_cube(gaussian3):
    """Test the bracket and its sampled point for the cube of half-width 0.8."""
    found = tail_log_bracket(gaussian3, Box((0.8, 0.8, 0.8)), 4.0, budget=40_000, seed=1)
    assert found.r_in == pytest.approx(0.8)
    assert found.r_out == pytest.approx(0.8 * math.sqrt(3.0))
    assert found.lower.log_value <= found.point.log_value <= found.upper.log_value
    expected = math.log(-math.expm1(3.0 * math.log1p(-2.0 * stats.norm.sf(3.2))))
    assert expected == pytest.approx(-5.493, abs=1e-3)
    assert abs(found.point.log_value - expected) < 5.0 * found.point.abs_log_error + 1e-9


def test_tail_bracket_rejects_negative_t(gaussian2):
    """Test that t must be nonnegative."""
    with pytest.raises(ValueError):
        tail_log_bracket(gaussian2, Box((1.0, 1.0)), -1.0)


def test_radial_law_range():
    """Test that truncated radial draws stay in their interval."""
    law = RadialLaw(Power(), 3, 1.0, 2.0)
    radii = law.sample(np.random.default_rng(0), 5000)
    assert radii.min() >= 1.0
    assert radii.max() <= 2.0
    with pytest.raises(ValueError):
        RadialLaw(Power(), 3, 2.0, 2.0)


def test_sample_moments(gaussian2):
    """Test E||X||^2 = n for draws from the planar Gaussian."""
    points = sample(gaussian2, 20_000, seed=3)
    assert points.shape == (20_000, 2)
    assert float(np.mean(np.sum(points**2, axis=1))) == pytest.approx(2.0, abs=0.1)
    assert np.array_equal(points, sample(gaussian2, 20_000, seed=3))


def test_layer_volume():
    """Test |K ∩ sL| exactly and by sampling."""
    assert layer_volume(Box((1.0, 1.0)), EuclideanBall(2), 1.0).value == pytest.approx(math.pi)
    assert layer_volume(Box((1.0, 1.0)), EuclideanBall(2), 0.0).log_value == -math.inf
    estimate = layer_volume(Box((1.0, 1.0, 1.0)), EuclideanBall(3), 1.0, budget=50_000, seed=4)
    assert estimate.method == "monte-carlo"
    assert abs(estimate.log_value - math.log(4.0 * math.pi / 3.0)) < 5.0 * estimate.abs_log_error


def test_uniform_mass(uniform_omega):
    """Test the uniform measure on the rectangle of area pi."""
    assert uniform_omega.n == 2
    assert uniform_mass(uniform_omega, EuclideanBall(2), 1.0) == pytest.approx(1.9132 / math.pi, abs=1e-4)
    assert uniform_mass(uniform_omega, EuclideanBall(2), 0.0) == 0.0
    assert uniform_mass(uniform_omega, EuclideanBall(2), 10.0) == pytest.approx(1.0)


def test_uniform_mass_monte_carlo():
    """Test the sampled uniform mass of the unit ball inside the cube."""
    mu = UniformMeasure(Box((1.0, 1.0, 1.0)))
    estimate = uniform_mass_estimate(mu, EuclideanBall(3), 1.0, budget=50_000, seed=6)
    assert estimate.method == "monte-carlo"
    assert abs(estimate.log_value - math.log(math.pi / 6.0)) < 5.0 * estimate.abs_log_error


@pytest.mark.parametrize("a", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("phi", [Linear(), Power()], ids=["exponential", "gaussian"])
@pytest.mark.parametrize("L", [EuclideanBall(3), Box((1.0, 2.0))], ids=["ball", "box"])
def test_layered_mass_matches_radial_on_dilates(L, phi, a):
    """Test the layered representation against the radial formula for K = aL."""
    mu = NormMeasure(phi, L)
    estimate = layered_mass(mu, Dilate(L, a))
    assert estimate.method == "quadrature"
    assert estimate.value == pytest.approx(mass_dilate(mu, a), rel=1e-8)


def test_ball_mass_quadrature_against_monte_carlo(gaussian3):
    """Test the radial Gaussian mass of the unit ball in R^3 against importance sampling."""

    def log_density(x):
        return -0.5 * np.sum(x * x, axis=1) - 1.5 * math.log(2.0 * math.pi)

    def in_ball(x):
        return np.linalg.norm(x, axis=1) <= 1.0

    estimate = mc_region_measure(log_density, in_ball, UniformBoxProposal((1.0, 1.0, 1.0)), 200_000, seed=3)
    mass = mass_dilate(gaussian3, 1.0)
    assert mass == pytest.approx(stats.chi(3).cdf(1.0), rel=1e-10)
    assert abs(estimate.value - mass) <= 3.0 * estimate.value * estimate.abs_log_error
