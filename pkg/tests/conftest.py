import numpy as np
import pytest

from su_steer.config import ABAR, CNOT
from su_steer.integrator import IntegratorConfig
from su_steer.reference import FourierControl, integrate_reference
from su_steer.spin_model import spin4_generators


@pytest.fixture(scope="session")
def H4():
    return np.array(spin4_generators())


@pytest.fixture(scope="session")
def abar_fc():
    return FourierControl(T=1.0, coeffs=ABAR.copy())


@pytest.fixture(scope="session")
def cnot_ref(H4, abar_fc):
    # one period of the C-NOT preset reference at the production step
    return integrate_reference(abar_fc, H4, IntegratorConfig(step=1e-4))


@pytest.fixture(scope="session")
def cnot_goal():
    return CNOT.copy()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
