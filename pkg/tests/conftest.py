"""Shared models and generators."""

from __future__ import annotations

import numpy as np
import pytest

from expwalk import FSpec, Gaussian, Lattice, ShiftedPareto, TwoPoint


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def symmetric():
    """The simple symmetric +-1 walk."""
    return Lattice(1.0, (-1, 1), (0.5, 0.5))


@pytest.fixture
def skewed():
    """A mean-zero, downward skip-free lattice walk with an upward jump of two."""
    return Lattice(1.0, (-1, 1, 2), (0.55, 0.35, 0.1))


@pytest.fixture
def drifting_lattice():
    """Negative drift with an interior minimiser of the Laplace transform."""
    return Lattice(1.0, (-1, 1, 2), (0.6, 0.3, 0.1))


@pytest.fixture
def gauss_drift():
    return Gaussian(-2.0, 1.0)


@pytest.fixture
def pareto():
    return ShiftedPareto(3.0, 1.0, -2.0)


@pytest.fixture
def coin():
    return TwoPoint(1.0, -1.0, 0.5)


@pytest.fixture
def f_unit():
    """F(x) = 1 / (1 + x)."""
    return FSpec(1.0, 1.0, 1.0)
