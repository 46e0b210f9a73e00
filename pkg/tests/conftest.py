import numpy as np
import pytest

from sivcav.models import RadiativeBudget, ThreeLevelRates


@pytest.fixture
def siv4_budget():
    """Inferred intrinsic channel rates of the deterministically placed emitter."""
    return RadiativeBudget(1.0 / 1.44e-9, 1.0 / 5.75e-9, 1.0 / 583e-12)


@pytest.fixture
def shelving_rates():
    """A representative pumped three-level rate set with visible bunching."""
    return ThreeLevelRates(100e6, 2.247e9, 315e6, 50e6)


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)
