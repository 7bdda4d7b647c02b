import warnings

import numpy as np
import pytest

from dispprop import fock_oracle as fo
from dispprop.channels import CubicGate, ThermalLoss
from dispprop.gates import Beamsplitter, Displacement, Rotation, Squeeze
from dispprop.phase_space import coherent, input_char, thermal, vacuum
from dispprop.regimes import curvature_bound

from oracle_values import REFERENCE_CHI


def test_ladder_at_cutoff_two():
    a, _, _, _ = fo.build_quadratures(2)
    assert np.array_equal(a, [[0, 1], [0, 0]])


@pytest.mark.parametrize("D", [3, 10, 40])
def test_vacuum_q2(D):
    _, _, q, _ = fo.build_quadratures(D)
    assert (q @ q)[0, 0].real == pytest.approx(1.0)


def test_commutator_away_from_cutoff():
    _, _, q, p = fo.build_quadratures(12)
    comm = q @ p - p @ q
    assert np.allclose(comm[:-1, :-1], 2j * np.eye(11))


def test_cutoff_too_small():
    with pytest.raises(fo.CutoffError):
        fo.build_quadratures(1)


@pytest.mark.parametrize("gamma", [0.1, -0.3, 0.5])
def test_cubic_preserves_position_moments(gamma):
    rho = fo.apply_gate(fo.prepare_input(coherent([0.3 + 0.2j]), 40), Squeeze(0.2))
    before = fo.observable_moments(rho, 0, 4)["q"]
    after = fo.observable_moments(fo.apply_gate(rho, CubicGate(gamma)), 0, 4)["q"]
    assert np.allclose(after, before, atol=1e-8, rtol=0)


def test_cubic_shifts_momentum_by_six_gamma_q2():
    rho = fo.prepare_input(coherent([0.3 + 0.2j]), 40)
    gamma = 0.1
    q2 = fo.observable_moments(rho, 0, 2)["q"][1]
    p1 = fo.observable_moments(rho, 0, 1)["p"][0]
    out = fo.observable_moments(fo.apply_gate(rho, CubicGate(gamma)), 0, 1)["p"][0]
    assert out == pytest.approx(p1 + 6 * gamma * q2, abs=1e-10)


def test_materialised_cubic_agrees_with_deferred_moments():
    rho = fo.prepare_input(coherent([0.3 + 0.2j]), 160)
    deferred = fo.apply_gate(rho, CubicGate(0.1))
    explicit = fo.materialize(deferred)
    for key in ("q", "p"):
        a = fo.observable_moments(deferred, 0, 2)[key]
        b = fo.observable_moments(explicit, 0, 2)[key]
        assert np.allclose(a, b, atol=1e-4)


def test_cubic_gates_accumulate():
    rho = fo.prepare_input(vacuum(), 10)
    out = fo.apply_gate(fo.apply_gate(rho, CubicGate(0.1)), CubicGate(0.15))
    assert out.pending_gamma == pytest.approx(0.25)


def test_unitary_gates_preserve_purity():
    rho = fo.prepare_input(coherent([0.4 - 0.3j]), 40)
    for gate in (Rotation(0.4), Squeeze(0.3, 0.5), Displacement(0.2 + 0.1j)):
        rho = fo.apply_gate(rho, gate)
        assert rho.purity() == pytest.approx(1.0, abs=1e-8)


def test_beamsplitter_preserves_purity_and_trace():
    rho = fo.apply_gate(fo.prepare_input(coherent([0.5, 0.2j]), 12), Beamsplitter(0.7))
    assert rho.trace() == pytest.approx(1.0, abs=1e-8)
    assert rho.purity() == pytest.approx(1.0, abs=1e-8)


def test_beamsplitter_mixes_coherent_amplitudes():
    rho = fo.apply_gate(fo.prepare_input(coherent([0.6, 0.0]), 14), Beamsplitter(np.pi / 4))
    a = 0.6 / np.sqrt(2)
    r = [0.3, -0.4, 0.2, 0.5]
    want = input_char(coherent([a, a]), r)
    want_flipped = input_char(coherent([a, -a]), r)
    got = fo.char_function(rho, r)
    assert min(abs(got - want), abs(got - want_flipped)) < 1e-8


def test_unit_transmissivity_channel():
    rho = fo.prepare_input(coherent([0.5]), 30)
    out = fo.apply_thermal_loss(rho, ThermalLoss(1.0, 3.0))
    assert np.max(np.abs(out.rho - rho.rho)) < 1e-10


def test_pure_loss_on_coherent_state():
    alpha, eta = 0.8 - 0.4j, 0.6
    out = fo.apply_thermal_loss(fo.prepare_input(coherent([alpha]), 40), ThermalLoss(eta))
    target = fo.prepare_input(coherent([np.sqrt(eta) * alpha]), 40)
    assert fo.overlap(out, target).real > 1 - 1e-8


@pytest.mark.parametrize("eta,nbar", [(0.3, 0.0), (0.5, 1.0), (0.8, 2.0)])
def test_thermal_loss_energy(eta, nbar):
    out = fo.apply_thermal_loss(fo.prepare_input(vacuum(), 40), ThermalLoss(eta, nbar))
    mom = fo.observable_moments(out, 0, 2)
    assert 0.5 * (mom["q"][1] + mom["p"][1]) == pytest.approx(1 + 2 * nbar * (1 - eta), abs=1e-6)


@pytest.mark.parametrize("eta,nbar", [(0.3, 0.0), (0.7, 1.0), (0.5, 3.0)])
def test_channels_preserve_trace(eta, nbar):
    rho = fo.apply_gate(fo.prepare_input(thermal([0.3]), 40), Squeeze(0.2))
    out = fo.apply_thermal_loss(rho, ThermalLoss(eta, nbar))
    assert abs(out.trace() - rho.trace()) < 1e-6


def test_ancilla_cutoff():
    assert fo.ancilla_cutoff(0.0) == 10
    assert fo.ancilla_cutoff(1.0) == 27  # 0.5^27 < 1e-8
    assert fo.ancilla_cutoff(5.0) >= 60


def test_ancilla_cutoff_too_small_raises():
    with pytest.raises(fo.CutoffError):
        fo.apply_thermal_loss(fo.prepare_input(vacuum(), 10), ThermalLoss(0.5, 2.0), ancilla_D=10)


def test_vacuum_char_grid():
    rho = fo.prepare_input(vacuum(), 60)
    for q in np.linspace(-2.8, 2.8, 5):
        for p in np.linspace(-2.8, 2.8, 5):
            assert abs(fo.char_function(rho, [q, p]) - np.exp(-0.5 * (q * q + p * p))) < 1e-8


def test_char_at_origin_is_trace():
    rho = fo.apply_thermal_loss(fo.prepare_input(coherent([0.5]), 30), ThermalLoss(0.5, 0.5))
    assert fo.char_function(rho, [0, 0]) == pytest.approx(rho.trace(), abs=1e-12)


def test_vacuum_moments():
    mom = fo.observable_moments(fo.prepare_input(vacuum(), 30), 0, 6)
    assert mom["q"][2] == pytest.approx(0.0, abs=1e-12)
    assert mom["q"][3] == pytest.approx(3.0)
    assert mom["q"][5] == pytest.approx(15.0)


def test_coherent_mean():
    mom = fo.observable_moments(fo.prepare_input(coherent([1.0]), 40), 0, 1)
    assert mom["q"][0] == pytest.approx(2.0, abs=1e-10)


def test_reference_state_matches_closed_form(ref_state):
    for r, want in REFERENCE_CHI.items():
        assert abs(fo.char_function(ref_state, r) - want) < 1e-8, r


def test_reference_trace(ref_state):
    assert ref_state.trace() == pytest.approx(1.0, abs=1e-6)


def test_empirical_curvature_unit_transmissivity():
    val = fo.empirical_curvature(fo.prepare_input(vacuum(), 40), ThermalLoss(1.0), [[0.0, 0.0]])
    assert val == pytest.approx(1.0, abs=1e-5)


def test_empirical_curvature_single_point_finite():
    val = fo.empirical_curvature(fo.prepare_input(vacuum(), 30), ThermalLoss(0.5), [[0.4, -0.3]])
    assert np.isfinite(val)


def test_empirical_curvature_below_analytic_bound():
    rho = fo.prepare_input(vacuum(), 40)
    loss = ThermalLoss(0.5)
    grid = [[q, p] for q in np.linspace(-3, 3, 7) for p in np.linspace(-3, 3, 7)]
    assert fo.empirical_curvature(rho, loss, grid) <= curvature_bound((0, 1, 0, 3), loss)


def test_small_step_warns():
    with pytest.warns(fo.TruncationWarning):
        fo.empirical_curvature(fo.prepare_input(vacuum(), 20), ThermalLoss(0.5), [[0, 0]], h=1e-6)
