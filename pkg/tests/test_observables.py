import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dispprop import fock_oracle as fo
from dispprop.channels import Circuit, CubicGate, NoisyLayer, ThermalLoss
from dispprop.gates import Rotation, Squeeze
from dispprop.observables import (
    InvalidObservableError,
    ObservableSpec,
    estimate_energy,
    estimate_projector_overlap,
    estimate_quadrature,
    finite_difference_bias_bound,
    finite_difference_moment,
    first_moment_step,
    gaussian_moment_bound,
    gaussian_output_stats,
    second_moment_step,
)
from dispprop.phase_space import ObservableDescriptor, coherent, coherent_projector_char, fourier_one_norm, vacuum
from dispprop.sampling import RngStream

M_REF = 2.1475


def _empty(state):
    return Circuit(state.m, [], state)


# ----------------------------------------------------------------- projectors

def test_vacuum_self_overlap():
    res = estimate_projector_overlap(_empty(vacuum()), [0], 0.05, 0.05, 0.0, RngStream(0))
    assert abs(res.value - 1.0) <= 0.05


def test_vacuum_coherent_overlap():
    res = estimate_projector_overlap(_empty(vacuum()), [2.0], 0.05, 0.05, 0.0, RngStream(1))
    assert abs(res.value.real - math.exp(-4)) <= 0.05
    assert math.exp(-4) == pytest.approx(0.018316, abs=1e-6)


@pytest.mark.filterwarnings("ignore::dispprop.fock_oracle.TruncationWarning")
def test_reference_overlap_matches_fock(ref_circuit, ref_state):
    # Materialising the cubic gate leaks population past the cutoff, but only the
    # low levels overlap the target coherent state.
    target = fo.prepare_input(coherent([0.5]), ref_state.D)
    truth = fo.overlap(ref_state, target).real
    eps = 0.05
    res = estimate_projector_overlap(ref_circuit, [0.5], eps, 0.05, M_REF, RngStream(2))
    assert abs(res.value.real - truth) <= eps + 3 * res.stderr
    assert -eps <= res.value.real <= 1 + eps and abs(res.value.imag) <= eps


def test_two_mode_product_overlap():
    state = coherent([0.3, -0.2j])
    res = estimate_projector_overlap(_empty(state), [0.0, 0.0], 0.05, 0.05, 0.0, RngStream(3))
    assert abs(res.value.real - math.exp(-0.09 - 0.04)) <= 0.05


def test_partial_projector_traces_other_modes():
    state = coherent([0.4, 1.5])
    res = estimate_projector_overlap(_empty(state), [0.4], 0.05, 0.05, 0.0, RngStream(4))
    assert abs(res.value.real - 1.0) <= 0.05


@pytest.mark.parametrize("k", [1, 2])
def test_projector_density_normalisation(k):
    # |chi| of a k-mode coherent projector, integrated with the 1/pi^k Weyl measure,
    # divided by the 2^k normaliser, is a probability density.
    x = np.linspace(-8, 8, 161 if k == 1 else 41)
    h = x[1] - x[0]
    total = 0.0
    if k == 1:
        for q, p in itertools.product(x, x):
            total += abs(coherent_projector_char([0.3 - 0.1j], 1, [q, p])[0])
    else:
        Q = np.stack(np.meshgrid(x, x, x, x, indexing="ij"), -1).reshape(-1, 4)
        total = sum(math.exp(-0.5 * float(r @ r)) for r in Q[::1])
        # spot-check that the closed form used above is the projector's modulus
        assert abs(coherent_projector_char([0.2, 0.1j], 2, Q[12345])[0]) == pytest.approx(math.exp(-0.5 * Q[12345] @ Q[12345]))
    norm = fourier_one_norm(ObservableDescriptor("projectors", k))
    assert total * h ** (2 * k) / math.pi**k / norm == pytest.approx(1.0, abs=1e-3)


def test_projector_validation():
    with pytest.raises(InvalidObservableError):
        estimate_projector_overlap(_empty(vacuum()), [0.1, 0.2], 0.05, 0.05, 0.0)
    with pytest.raises(ValueError):
        estimate_projector_overlap(_empty(vacuum()), [0.1], 0.05, 0.05, -1.0)


# ----------------------------------------------------------------- finite differences

def test_steps():
    assert first_moment_step(0.1, 3.0) == pytest.approx(0.025)
    assert second_moment_step(0.1, 4.0) == pytest.approx(0.3 / 44)


def _fd_from_state(state, which, d):
    # chi(t) - 1 = Tr[rho (exp(i t X) - 1)] through an eigen-decomposition of the
    # padded quadrature, so tiny t keeps full relative precision.
    D = state.D
    Dp = D + 80
    _, _, q, p = fo.build_quadratures(Dp)
    gen = q if which in ("q", "q2") else -p
    lam, V = np.linalg.eigh(gen)
    rho = np.zeros((Dp, Dp), dtype=complex)
    rho[:D, :D] = fo.FockState(state.rho, D).reduced(0)

    def chi_minus_one(t):
        op = (V * np.expm1(1j * t * lam)) @ V.conj().T
        return complex(np.trace(rho @ op))

    return finite_difference_moment(chi_minus_one, which, d)


def _test_states():
    sq = fo.apply_gate(fo.prepare_input(coherent([0.3 - 0.2j]), 60), Squeeze(0.3, 0.4))
    lossy = fo.apply_thermal_loss(fo.prepare_input(coherent([0.6 + 0.2j]), 60), ThermalLoss(0.6, 0.5))
    return {"squeezed": sq, "lossy": lossy}


@pytest.mark.parametrize("which", ["q", "p", "q2", "p2"])
@pytest.mark.parametrize("d", [1e-1, 1e-2, 1e-3])
def test_fd_bias_bound_dominates(which, d):
    for name, state in _test_states().items():
        mom = fo.observable_moments(state, 0, 6)[which[0]]
        exact = mom[0] if which in ("q", "p") else mom[1]
        bound = finite_difference_bias_bound(which, d, mom[3], mom[5])
        err = abs(_fd_from_state(state, which, d) - exact)
        assert err <= bound, (name, which, d, err, bound)


def test_fd_bias_bound_on_cubic_state(ref_state):
    for which in ("q", "q2"):
        mom = fo.observable_moments(ref_state, 0, 6)["q"]
        exact = mom[0] if which == "q" else mom[1]
        for d in (1e-1, 1e-2):
            err = abs(_fd_from_state(ref_state, which, d) - exact)
            assert err <= finite_difference_bias_bound(which, d, mom[3], mom[5])


def test_bias_bound_needs_sixth_moment():
    with pytest.raises(ValueError):
        finite_difference_bias_bound("q2", 0.1, 3.0)


# ----------------------------------------------------------------- quadrature estimates

def test_vacuum_quadratures():
    circ = _empty(vacuum())
    assert abs(estimate_quadrature(circ, 0, "q", 0.01, 0.05, 0.0, 3.0).value) <= 0.01
    assert abs(estimate_quadrature(circ, 0, "q2", 0.01, 0.05, 0.0, 15.0).value - 1.0) <= 0.01


def test_coherent_first_moment():
    res = estimate_quadrature(_empty(coherent([1.0])), 0, "q", 0.01, 0.05, None, 50.0)
    assert abs(res.value.real - 2.0) <= 0.01


def test_vacuum_energy():
    res = estimate_energy(_empty(vacuum()), 0, 0.01, 0.05, None, 15.0)
    assert abs(res.value.real - 1.0) <= 0.01


def test_coherent_energy():
    circ = _empty(coherent([np.exp(0.4j)]))
    E = gaussian_moment_bound(circ, 0, 6)
    res = estimate_energy(circ, 0, 0.02, 0.05, None, E)
    assert abs(res.value.real - 3.0) <= 0.02


@pytest.mark.parametrize("eta", [0.3, 0.8])
def test_pure_loss_energy(eta):
    alpha = 0.7 + 0.3j
    layer = NoisyLayer.from_gates([], 1, ThermalLoss(eta), CubicGate(0.0))
    circ = Circuit(1, [layer], coherent([alpha]))
    E = gaussian_moment_bound(circ, 0, 6)
    res = estimate_energy(circ, 0, 0.02, 0.05, None, E)
    assert abs(res.value.real - (2 * eta * abs(alpha) ** 2 + 1)) <= 0.02


def test_reference_circuit_first_moment(ref_circuit, ref_state):
    truth = fo.observable_moments(ref_state, 0, 1)["q"][0]
    E = fo.observable_moments(ref_state, 0, 4)["q"][3] * 1.05
    eps = 0.2
    res = estimate_quadrature(ref_circuit, 0, "q", eps, 0.05, M_REF, E, RngStream(8))
    assert abs(res.value.real - truth) <= eps + 3 * res.stderr


@given(st.complex_numbers(max_magnitude=1.5, allow_nan=False, allow_infinity=False),
       st.complex_numbers(max_magnitude=1.0, allow_nan=False, allow_infinity=False))
@settings(max_examples=25, deadline=None)
def test_first_moment_linear_in_displacement(alpha, beta):
    eps = 0.01
    E = 60.0
    a = estimate_quadrature(_empty(coherent([alpha])), 0, "q", eps, 0.05, None, E).value.real
    b = estimate_quadrature(_empty(coherent([alpha + beta])), 0, "q", eps, 0.05, None, E).value.real
    assert abs((b - a) - 2 * beta.real) <= 2 * eps


def test_step_and_observable_validation():
    circ = _empty(vacuum())
    with pytest.raises(ValueError, match="exceeds"):
        estimate_quadrature(circ, 0, "q", 0.01, 0.05, 0.0, 3.0, step=0.5)
    with pytest.raises(InvalidObservableError):
        estimate_quadrature(circ, 1, "q", 0.01, 0.05, 0.0, 3.0)
    with pytest.raises(InvalidObservableError):
        estimate_quadrature(circ, 0, "x", 0.01, 0.05, 0.0, 3.0)
    with pytest.raises(ValueError, match="moment bound"):
        estimate_quadrature(circ, 0, "q", 0.01, 0.05, 0.0, 0.0)
    with pytest.raises(InvalidObservableError):
        ObservableSpec("kerr").validate(1)


# ----------------------------------------------------------------- Gaussian analytics

def test_gaussian_stats_match_fock():
    layers = [
        NoisyLayer.from_gates([Squeeze(0.2), Rotation(0.5)], 1, ThermalLoss(0.7, 0.4), 0.0),
        NoisyLayer.from_gates([Rotation(-0.3)], 1, ThermalLoss(0.9, 0.1), 0.0),
    ]
    circ = Circuit(1, layers, coherent([0.5 - 0.2j]))
    rho = fo.run_circuit(circ, 50)
    mean, cov = gaussian_output_stats(circ)
    mom = fo.observable_moments(rho, 0, 4)
    assert mean[0] == pytest.approx(mom["q"][0], abs=1e-7)
    assert mean[1] == pytest.approx(mom["p"][0], abs=1e-7)
    assert cov[0, 0] + mean[0] ** 2 == pytest.approx(mom["q"][1], abs=1e-6)
    assert cov[1, 1] + mean[1] ** 2 == pytest.approx(mom["p"][1], abs=1e-6)
    assert gaussian_moment_bound(circ, 0, 4) == pytest.approx(max(mom["q"][3], mom["p"][3]), rel=1e-5)


def test_gaussian_stats_reject_cubic(ref_circuit):
    with pytest.raises(ValueError):
        gaussian_output_stats(ref_circuit)
