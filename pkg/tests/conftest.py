"""Shared measures and bodies for the numeric tests."""

import math

import pytest

from app.bodies import Box, EuclideanBall
from app.measure import NormMeasure, UniformMeasure
from app.phi import GaussianNormalized


@pytest.fixture
def gaussian2() -> NormMeasure:
    """Standard Gaussian measure on R^2."""
    return NormMeasure(GaussianNormalized(2), EuclideanBall(2))


@pytest.fixture
def gaussian3() -> NormMeasure:
    """Standard Gaussian measure on R^3."""
    return NormMeasure(GaussianNormalized(3), EuclideanBall(3))


@pytest.fixture
def omega() -> Box:
    """The rectangle [-pi/2, pi/2] x [-1/2, 1/2], of area pi."""
    return Box((math.pi / 2.0, 0.5))


@pytest.fixture
def uniform_omega(omega) -> UniformMeasure:
    return UniformMeasure(omega)
