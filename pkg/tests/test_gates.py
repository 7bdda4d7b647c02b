import numpy as np
import pytest

from dispprop import fock_oracle as fo
from dispprop.channels import WeightedDisplacement, gaussian_adjoint_on_displacement
from dispprop.gates import (
    Beamsplitter,
    Displacement,
    Rotation,
    Shear,
    Squeeze,
    compose_gates,
    gate_from_dict,
    gate_to_dict,
)
from dispprop.phase_space import SymplecticGaussian, coherent, input_char

D = 50
POINTS = [(0.4, -0.3), (-0.8, 0.5), (1.1, 0.9)]


def _fock_vs_adjoint(gates, m, state, points):
    rho = fo.prepare_input(state, D)
    for g in gates:
        rho = fo.apply_gate(rho, g)
    G = compose_gates(gates, m)
    for r in points:
        wd = gaussian_adjoint_on_displacement(G, WeightedDisplacement(1.0, r))
        predicted = wd.weight * input_char(state, wd.point)
        assert abs(predicted - fo.char_function(rho, r)) < 1e-7, (gates, r)


@pytest.mark.parametrize(
    "gate",
    [Rotation(0.7), Rotation(-2.0), Squeeze(0.3), Squeeze(0.25, 1.0), Shear(0.6), Displacement(0.4 - 0.3j)],
)
def test_single_mode_gate_adjoint_matches_fock(gate):
    _fock_vs_adjoint([gate], 1, coherent([0.5 + 0.2j]), POINTS)


def test_gate_sequence_adjoint_matches_fock():
    gates = [Squeeze(0.2), Rotation(0.9), Shear(-0.4), Displacement(0.3j)]
    _fock_vs_adjoint(gates, 1, coherent([0.3 - 0.1j]), POINTS)


def test_beamsplitter_adjoint_matches_fock():
    gates = [Beamsplitter(0.6), Rotation(0.3, mode=1)]
    state = coherent([0.4, -0.3j])
    rho = fo.prepare_input(state, 14)
    for g in gates:
        rho = fo.apply_gate(rho, g)
    G = compose_gates(gates, 2)
    for r in ([0.3, -0.2, 0.5, 0.1], [-0.6, 0.4, 0.0, 0.7]):
        wd = gaussian_adjoint_on_displacement(G, WeightedDisplacement(1.0, r))
        assert abs(wd.weight * input_char(state, wd.point) - fo.char_function(rho, r)) < 1e-7


def test_identity_gate_leaves_displacement_unchanged():
    wd = WeightedDisplacement(0.3 + 0.1j, [0.2, -1.0])
    out = gaussian_adjoint_on_displacement(SymplecticGaussian.identity(1), wd)
    assert out.weight == wd.weight and np.array_equal(out.point, wd.point)


def test_displacement_phase():
    g = SymplecticGaussian(np.eye(2), np.array([1.0, 0.0]))
    out = gaussian_adjoint_on_displacement(g, WeightedDisplacement(1.0, [0.0, 2.0]))
    assert out.weight == pytest.approx(np.exp(2j))
    assert np.array_equal(out.point, [0.0, 2.0])


def test_quarter_rotation_moves_point():
    out = gaussian_adjoint_on_displacement(Rotation(np.pi / 2).symplectic(1), WeightedDisplacement(1.0, [1.0, 0.0]))
    assert np.allclose(out.point, [0.0, -1.0])
    assert abs(out.weight) == 1.0


def test_full_rotation_is_identity_in_fock_space():
    rho = fo.prepare_input(coherent([0.7 + 0.4j]), 30)
    out = fo.apply_gate(rho, Rotation(2 * np.pi))
    assert np.max(np.abs(out.rho - rho.rho)) < 1e-8


def test_displacement_gate_sets_mean():
    rho = fo.apply_gate(fo.prepare_input(coherent([0.0]), 40), Displacement(0.6 - 0.2j))
    mom = fo.observable_moments(rho, 0, 2)
    assert mom["q"][0] == pytest.approx(1.2, abs=1e-8)
    assert mom["p"][0] == pytest.approx(-0.4, abs=1e-8)


@pytest.mark.parametrize(
    "gate",
    [Rotation(0.7, mode=1), Squeeze(0.3, 0.1), Shear(0.5), Displacement(0.2 - 1j), Beamsplitter(0.4, (1, 0))],
)
def test_gate_dict_round_trip(gate):
    assert gate_from_dict(gate_to_dict(gate)) == gate


def test_gate_from_dict_errors():
    with pytest.raises(ValueError, match="unknown gate"):
        gate_from_dict({"type": "kerr"})
    with pytest.raises(ValueError, match="bad parameters"):
        gate_from_dict({"type": "rotation", "angle": 1})


def test_mode_out_of_range():
    with pytest.raises(ValueError):
        Rotation(0.1, mode=2).symplectic(2)
