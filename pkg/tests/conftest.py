import warnings

import numpy as np
import pytest

from dispprop import fock_oracle as fo
from dispprop.channels import Circuit, CubicGate, NoisyLayer, ThermalLoss
from dispprop.gates import Rotation
from dispprop.phase_space import vacuum


def reference_circuit() -> Circuit:
    layer = NoisyLayer.from_gates([Rotation(0.7)], 1, ThermalLoss(0.7, 0.3), CubicGate(0.2))
    return Circuit(1, [layer], vacuum(1))


def near_gaussian_circuit() -> Circuit:
    layer = NoisyLayer.from_gates([Rotation(0.7)], 1, ThermalLoss(0.6, 0.5), CubicGate(1e-3))
    return Circuit(1, [layer] * 5, vacuum(1))


@pytest.fixture(scope="session")
def ref_circuit():
    return reference_circuit()


@pytest.fixture(scope="session")
def ref_state(ref_circuit):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", fo.TruncationWarning)
        return fo.run_circuit(ref_circuit, 60)


@pytest.fixture(scope="session")
def ng_circuit():
    return near_gaussian_circuit()


@pytest.fixture(scope="session")
def ng_state(ng_circuit):
    return fo.run_circuit(ng_circuit, 60)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
