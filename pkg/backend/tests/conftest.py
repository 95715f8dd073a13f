import os
import sys

import numpy as np
import pytest

# Add backend and src to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from src.config import DiscriminatorSettings, Profile
from src.services.distribution_service import Distribution, make_uniform, make_zipf
from src.services.multilevel_service import FunctionalSpec, build_level_plan
from src.services.polynomial_service import constant_poly


@pytest.fixture
def rng():
    """Seeded generator for tests that draw randomness."""
    return np.random.default_rng(12345)


@pytest.fixture
def uniform4():
    return make_uniform(4)


@pytest.fixture
def zipf16():
    return make_zipf(16, 1.0)


@pytest.fixture
def point_mass():
    return Distribution([1.0])


@pytest.fixture
def two_point():
    """sqrt(p) = (0.6, 0.8): both singular values above the first threshold."""
    return Distribution([0.36, 0.64])


@pytest.fixture
def ideal():
    return DiscriminatorSettings(profile=Profile.IDEAL)


@pytest.fixture
def unit_functional():
    """g = 1 with unit bounds, for plans built from constant polynomials."""
    return FunctionalSpec(name="unit", g=lambda x: np.ones_like(np.asarray(x, dtype=float)), C=1.0, bound=lambda j: 1.0)


@pytest.fixture
def constant_plan(unit_functional):
    """Factory: plan with one constant polynomial per level and unit bounds."""

    def build(values, eps=0.1):
        polys = [constant_poly(v) for v in values]
        bounds = [0.0] + [1.0] * (len(polys) + 1) + [0.0]
        return build_level_plan(unit_functional, polys, eps, bounds=bounds)

    return build
