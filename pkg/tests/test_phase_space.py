import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dispprop import fock_oracle as fo
from dispprop.gates import Beamsplitter, Rotation, Shear, Squeeze
from dispprop.phase_space import (
    DimensionError,
    InputState,
    ObservableDescriptor,
    SupportError,
    SymplecticGaussian,
    block_to_interleaved,
    coherent,
    coherent_projector_char,
    fourier_one_norm,
    input_char,
    symplectic_form,
    thermal,
    vacuum,
    validate_symplectic,
)

finite = st.floats(-6, 6, allow_nan=False)
amps = st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False)


def test_symplectic_form_single_mode():
    assert np.array_equal(symplectic_form(1), [[0, 1], [-1, 0]])


def test_symplectic_form_direct_sum():
    W = symplectic_form(2)
    assert np.array_equal(W[:2, :2], symplectic_form(1))
    assert np.array_equal(W[2:, 2:], symplectic_form(1))
    assert not W[:2, 2:].any() and not W[2:, :2].any()


def test_symplectic_form_squares_to_minus_identity():
    W = symplectic_form(3)
    assert np.array_equal(W @ W, -np.eye(6))


def test_validate_identity():
    res = validate_symplectic(np.eye(2))
    assert res.passed and res.deviation == 0.0


def test_validate_rotation():
    assert validate_symplectic(Rotation(0.7).symplectic(1).S).passed


def test_validate_scaling_fails_with_deviation():
    res = validate_symplectic(np.diag([2.0, 2.0]))
    assert not res.passed
    # S^T W S = 4 W, so the off-diagonal entries are off by 3.
    assert res.deviation == pytest.approx(3.0)


def test_gaussian_rejects_non_symplectic():
    with pytest.raises(ValueError, match="symplectic"):
        SymplecticGaussian(np.diag([2.0, 2.0]), np.zeros(2))


def test_block_to_interleaved_matches_permutation():
    S_int = Beamsplitter(0.4).symplectic(2).S.copy()
    S_int = S_int @ Squeeze(0.3, 0.2).symplectic(2).S
    perm = [0, 2, 1, 3]  # block (q1,q2,p1,p2) <- interleaved (q1,p1,q2,p2)
    S_block = S_int[np.ix_(perm, perm)]
    assert np.allclose(block_to_interleaved(S_block), S_int)


@pytest.mark.parametrize("gate", [Rotation(1.1), Squeeze(0.5, 0.3), Shear(0.8), Beamsplitter(0.6)])
def test_gate_library_symplectic(gate):
    assert validate_symplectic(gate.symplectic(2).S).passed


def test_vacuum_origin():
    assert input_char(vacuum(), [0, 0]) == 1.0


def test_vacuum_sqrt2_point():
    assert input_char(vacuum(), [np.sqrt(2), 0]) == pytest.approx(np.exp(-1), abs=1e-15)


def test_coherent_matches_fock():
    beta = 1.0
    state = fo.prepare_input(coherent([beta]), 40)
    want = fo.char_function(state, [0.3, -0.2])
    assert abs(input_char(coherent([beta]), [0.3, -0.2]) - want) < 1e-8


def test_thermal_matches_fock():
    state = fo.prepare_input(thermal([0.4]), 60)
    for r in ([0.5, 0.2], [-1.0, 0.7]):
        assert abs(input_char(thermal([0.4]), r) - fo.char_function(state, r)) < 1e-8


def test_input_char_stack_shape():
    R = np.zeros((5, 4))
    assert input_char(vacuum(2), R).shape == (5,)


def test_input_dimension_errors():
    with pytest.raises(DimensionError):
        input_char(vacuum(2), [0.0, 0.0])
    with pytest.raises(DimensionError):
        InputState("coherent", 2, (1.0,))
    with pytest.raises(ValueError):
        thermal([-0.1])


state_strategy = st.one_of(
    st.integers(1, 3).map(vacuum),
    st.lists(amps, min_size=1, max_size=3).map(coherent),
    st.lists(st.floats(0, 5), min_size=1, max_size=3).map(thermal),
)


@given(state_strategy, st.data())
@settings(max_examples=200, deadline=None)
def test_input_char_bounded(state, data):
    r = data.draw(st.lists(finite, min_size=2 * state.m, max_size=2 * state.m))
    assert abs(input_char(state, r)) <= 1 + 1e-12


@given(state_strategy)
def test_input_char_origin_is_one(state):
    assert input_char(state, np.zeros(2 * state.m)) == 1.0


def test_projector_vacuum_origin():
    val, ok = coherent_projector_char([0], 1, [0, 0])
    assert val == 1.0 and ok


def test_projector_magnitude():
    val, _ = coherent_projector_char([0], 1, [1, 1])
    assert abs(val) == pytest.approx(np.exp(-1))


def test_projector_identity_modes_need_origin():
    coherent_projector_char([0.3], 2, [0.1, 0.2, 0.0, 0.0])
    with pytest.raises(SupportError):
        coherent_projector_char([0.3], 2, [0.1, 0.2, 0.5, 0.0])


def test_single_projector_weight_convention():
    # Fourier 1-norm of |alpha><alpha|: int |chi| d^2r / (2 pi) = 2 under hbar=2.
    x = np.linspace(-10, 10, 801)
    h = x[1] - x[0]
    Q, P = np.meshgrid(x, x)
    vals = np.exp(-0.5 * (Q**2 + P**2))
    # Normalising the Weyl integral by pi makes a single projector weigh 2.
    assert np.sum(vals) * h * h / np.pi == pytest.approx(2.0, abs=1e-9)


@pytest.mark.parametrize("k", range(9))
def test_fourier_norm_projectors(k):
    assert fourier_one_norm(ObservableDescriptor("projectors", k)) == 2.0**k


def test_fourier_norm_examples():
    assert fourier_one_norm(ObservableDescriptor("projectors", 3)) == 8
    assert fourier_one_norm(ObservableDescriptor("displacement")) == 1
    assert fourier_one_norm(ObservableDescriptor("projectors", 0)) == 1
