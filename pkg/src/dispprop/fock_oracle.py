"""Truncated Fock-space density-matrix simulator used as ground truth.

The oracle is deliberately independent of the phase-space code: operators are
built from ladder operators or from Hermite-function quadrature in the position
representation, never from the displacement-propagation formulas.

Matrix elements are computed as exact projections of the infinite-dimensional
operators onto the first ``D`` Fock levels whenever that is cheap:

* position-diagonal unitaries (cubic gate, shear) and displacements use
  Hermite-function quadrature on a fine grid;
* beamsplitters (including the loss dilation) use exact blocks of fixed total
  photon number;
* rotations are diagonal;
* squeezers use a matrix exponential in a padded space.

Only population leaking above level ``D - 1`` is lost; every state carries a
diagnostic for it.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import expm

from .channels import Circuit, CubicGate, ThermalLoss
from .gates import Beamsplitter, Displacement, GaussianGate, Rotation, Shear, Squeeze
from .phase_space import InputState, as_point

log = logging.getLogger(__name__)

DEFAULT_CUTOFF = 60
ANCILLA_TAIL_TOL = 1e-8
OVERFLOW_WARN = 1e-6


class CutoffError(ValueError):
    """Raised when a truncation cannot meet its accuracy budget."""


class TruncationWarning(UserWarning):
    pass


def build_quadratures(D: int):
    """Return ``(a, a_dag, q, p)`` at cutoff ``D`` with ``hbar = 2``."""
    if D < 2:
        raise CutoffError(f"cutoff must be at least 2, got {D}")
    a = np.diag(np.sqrt(np.arange(1, D, dtype=float)), k=1).astype(complex)
    a_dag = a.conj().T
    q = a + a_dag
    p = -1j * (a - a_dag)
    return a, a_dag, q, p


# --------------------------------------------------------------------------
# Position-representation quadrature


def hermite_functions(x: np.ndarray, n: int) -> np.ndarray:
    """Number-state wavefunctions ``<x|k>`` for ``k < n`` (rows), hbar = 2."""
    x = np.asarray(x, dtype=float)
    out = np.empty((n, x.size))
    out[0] = (2.0 * np.pi) ** -0.25 * np.exp(-0.25 * x * x)
    if n > 1:
        out[1] = x * out[0]
    for k in range(1, n - 1):
        out[k + 1] = (x * out[k] - np.sqrt(k) * out[k - 1]) / np.sqrt(k + 1)
    return out


def _grid(D: int, bandwidth: float, shift: float = 0.0):
    half = 2.0 * math.sqrt(D + 0.5) + 10.0
    lo, hi = min(-half, -half + 2 * shift), max(half, half + 2 * shift)
    # Integrands are smooth and decay like Gaussians, so the trapezoid rule is
    # spectrally accurate once the highest wavenumber is oversampled.
    k_max = 2.0 * math.sqrt(D) + bandwidth + 1.0
    dx = min(0.05, 0.25 * math.pi / k_max)
    n = int(math.ceil((hi - lo) / dx)) + 1
    return np.linspace(lo, hi, n)


def position_function_matrix(f, D: int, bandwidth: float) -> np.ndarray:
    """Projected matrix of the position-diagonal operator ``f(q)``."""
    x = _grid(D, bandwidth)
    dx = x[1] - x[0]
    psi = hermite_functions(x, D)
    return (psi * (f(x) * dx)) @ psi.T


def displacement_matrix(q: float, p: float, D: int) -> np.ndarray:
    """Projected matrix of ``D(q, p) = exp(i p q_op - i q p_op)``.

    Uses ``<x|D(q, p)|psi> = exp(i p (x - q)) psi(x - 2q)``.
    """
    x = _grid(D, abs(p), shift=q)
    dx = x[1] - x[0]
    left = hermite_functions(x, D)
    right = hermite_functions(x - 2.0 * q, D)
    return (left * (np.exp(1j * p * (x - q)) * dx)) @ right.T


def conjugated_displacement_matrix(q: float, p: float, gamma: float, D: int) -> np.ndarray:
    """Projected matrix of ``V^dagger D(q, p) V`` with ``V = exp(i gamma q_op^3)``."""
    half = 2.0 * math.sqrt(D + 0.5) + 10.0
    x = _grid(D, abs(p) + 12.0 * abs(gamma * q) * (half + 2 * abs(q)), shift=q)
    dx = x[1] - x[0]
    left = hermite_functions(x, D)
    right = hermite_functions(x - 2.0 * q, D)
    phase = p * (x - q) - gamma * x**3 + gamma * (x - 2.0 * q) ** 3
    return (left * (np.exp(1j * phase) * dx)) @ right.T


def cubic_matrix(gamma: float, D: int) -> np.ndarray:
    half = 2.0 * math.sqrt(D + 0.5) + 10.0
    return position_function_matrix(lambda x: np.exp(1j * gamma * x**3), D, 3.0 * abs(gamma) * half**2)


def shear_matrix(s: float, D: int) -> np.ndarray:
    half = 2.0 * math.sqrt(D + 0.5) + 10.0
    return position_function_matrix(lambda x: np.exp(0.25j * s * x * x), D, 0.5 * abs(s) * half)


def rotation_matrix(theta: float, D: int) -> np.ndarray:
    return np.diag(np.exp(1j * theta * np.arange(D)))


def squeeze_matrix(r: float, phi: float, D: int, pad: int | None = None) -> np.ndarray:
    pad = max(60, D) if pad is None else pad
    a, a_dag, _, _ = build_quadratures(D + pad)
    z = r * np.exp(1j * phi)
    gen = 0.5 * (np.conj(z) * a @ a - z * a_dag @ a_dag)
    return expm(gen)[:D, :D]


@lru_cache(maxsize=32)
def _beamsplitter_blocks(theta: float, n_total: int) -> tuple:
    """Exact blocks of ``exp(theta (a b^dagger - a^dagger b))`` by total photon number.

    Block ``N`` is indexed by the photon number of the first mode, ``0..N``.
    """
    blocks = []
    for N in range(n_total + 1):
        n = np.arange(N + 1, dtype=float)
        gen = np.zeros((N + 1, N + 1))
        up = theta * np.sqrt(n[1:]) * np.sqrt(N - n[1:] + 1.0)  # a b^dag: n -> n-1
        gen[np.arange(N), np.arange(1, N + 1)] = up
        gen[np.arange(1, N + 1), np.arange(N)] = -up
        blocks.append(expm(gen))
    return tuple(blocks)


def beamsplitter_matrix(theta: float, D: int) -> np.ndarray:
    """Two-mode beamsplitter projected onto ``D x D`` levels (index ``a * D + b``)."""
    blocks = _beamsplitter_blocks(float(theta), 2 * D - 2)
    U = np.zeros((D * D, D * D))
    for N, block in enumerate(blocks):
        ns = np.arange(max(0, N - D + 1), min(N, D - 1) + 1)
        idx = ns * D + (N - ns)
        U[np.ix_(idx, idx)] = block[np.ix_(ns, ns)]
    return U


# --------------------------------------------------------------------------
# States


@dataclass
class FockState:
    """Density matrix on ``m`` modes truncated at ``D`` levels per mode."""

    rho: np.ndarray
    D: int
    m: int = 1
    # When nonzero the physical state is V rho V^dagger with V = exp(i g q_1^3).
    # Keeping a trailing cubic gate symbolic avoids truncating its heavy
    # momentum tails; measurements fold it into the observable exactly.
    pending_gamma: float = 0.0

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=complex)
        n = self.D**self.m
        if self.rho.shape != (n, n):
            raise ValueError(f"rho has shape {self.rho.shape}, expected {(n, n)}")

    @property
    def tensor(self) -> np.ndarray:
        return self.rho.reshape((self.D,) * (2 * self.m))

    def trace(self) -> float:
        return float(np.real(np.trace(self.rho)))

    def purity(self) -> float:
        return float(np.real(np.vdot(self.rho.conj().T, self.rho)))

    def reduced(self, mode: int) -> np.ndarray:
        T = self.tensor
        m = self.m
        others = [k for k in range(m) if k != mode]
        # Trace out the other modes pairwise.
        for k in sorted(others, reverse=True):
            T = np.trace(T, axis1=k, axis2=k + T.ndim // 2)
        return T.reshape(self.D, self.D) if m > 1 else T

    def trailing_population(self, levels: int = 2) -> float:
        """Largest population in the top ``levels`` Fock levels of any mode."""
        worst = 0.0
        for mode in range(self.m):
            diag = np.real(np.diag(self.reduced(mode)))
            worst = max(worst, float(np.sum(diag[-levels:])))
        return worst


def state_from_ket(ket: np.ndarray, D: int, m: int = 1) -> FockState:
    ket = np.asarray(ket, dtype=complex).reshape(-1)
    return FockState(np.outer(ket, ket.conj()), D, m)


def coherent_ket(alpha: complex, D: int) -> np.ndarray:
    n = np.arange(D)
    log_fact = np.array([math.lgamma(k + 1) for k in n])
    alpha = complex(alpha)
    if alpha == 0:
        out = np.zeros(D, dtype=complex)
        out[0] = 1.0
        return out
    logs = -0.5 * abs(alpha) ** 2 + n * np.log(abs(alpha)) - 0.5 * log_fact
    return np.exp(logs) * np.exp(1j * n * np.angle(alpha))


def thermal_populations(nbar: float, D: int) -> np.ndarray:
    if nbar == 0:
        out = np.zeros(D)
        out[0] = 1.0
        return out
    ratio = nbar / (nbar + 1.0)
    return ratio ** np.arange(D) / (nbar + 1.0)


def prepare_input(state: InputState, D: int = DEFAULT_CUTOFF) -> FockState:
    if state.kind == "vacuum":
        mats = [np.diag(np.eye(D)[0]).astype(complex)] * state.m
    elif state.kind == "coherent":
        mats = [np.outer(k, k.conj()) for k in (coherent_ket(a, D) for a in state.params)]
    else:
        mats = [np.diag(thermal_populations(n, D)).astype(complex) for n in state.params]
    rho = mats[0]
    for mat in mats[1:]:
        rho = np.kron(rho, mat)
    return FockState(rho, D, state.m)


# --------------------------------------------------------------------------
# Gates and channels


def materialize(state: FockState) -> FockState:
    """Apply any deferred cubic gate to the density matrix."""
    if state.pending_gamma == 0.0:
        return state
    bare = FockState(state.rho, state.D, state.m)
    out = _apply_local(bare, cubic_matrix(state.pending_gamma, state.D), [0])
    _warn_overflow(out, "CubicGate")
    return out


def _apply_local(state: FockState, U: np.ndarray, modes: Sequence[int]) -> FockState:
    state = materialize(state)
    D, m = state.D, state.m
    k = len(modes)
    T = state.tensor
    row_axes = list(modes)
    col_axes = [m + j for j in modes]
    Ut = U.reshape((D,) * (2 * k))
    # Rows: U acting on the selected ket indices.
    T = np.tensordot(Ut, T, axes=(list(range(k, 2 * k)), row_axes))
    T = np.moveaxis(T, list(range(k)), row_axes)
    # Columns: U^* acting on the selected bra indices.
    T = np.tensordot(T, Ut.conj(), axes=(col_axes, list(range(k, 2 * k))))
    T = np.moveaxis(T, list(range(2 * m - k, 2 * m)), col_axes)
    return FockState(T.reshape(D**m, D**m), D, m)


def gate_matrix(gate, D: int) -> np.ndarray:
    if isinstance(gate, Rotation):
        return rotation_matrix(gate.theta, D)
    if isinstance(gate, Squeeze):
        return squeeze_matrix(gate.r, gate.phi, D)
    if isinstance(gate, Shear):
        return shear_matrix(gate.s, D)
    if isinstance(gate, Displacement):
        beta = complex(gate.beta)
        return displacement_matrix(beta.real, beta.imag, D)
    if isinstance(gate, Beamsplitter):
        return beamsplitter_matrix(gate.theta, D)
    if isinstance(gate, CubicGate):
        return cubic_matrix(gate.gamma, D)
    raise TypeError(f"unsupported gate {gate!r}")


def _gate_modes(gate) -> list[int]:
    if isinstance(gate, Beamsplitter):
        return list(gate.modes)
    if isinstance(gate, CubicGate):
        return [0]
    return [gate.mode]


def _warn_overflow(state: FockState, what: str) -> None:
    tail = state.trailing_population()
    if tail > OVERFLOW_WARN:
        warnings.warn(f"{what}: population {tail:.2e} in the top cutoff levels", TruncationWarning, stacklevel=3)


def apply_gate(state: FockState, gate: GaussianGate | CubicGate) -> FockState:
    """``rho -> U rho U^dagger`` for a parametric Gaussian gate or a cubic gate on mode 1.

    Cubic gates commute with each other and are accumulated symbolically in
    ``pending_gamma``; the next non-cubic operation on the state materialises them.
    """
    if isinstance(gate, CubicGate):
        return FockState(state.rho, state.D, state.m, pending_gamma=state.pending_gamma + gate.gamma)
    out = _apply_local(state, gate_matrix(gate, state.D), _gate_modes(gate))
    _warn_overflow(out, type(gate).__name__)
    return out


def ancilla_cutoff(nbar: float, tol: float = ANCILLA_TAIL_TOL) -> int:
    """Smallest ancilla cutoff with thermal tail mass below ``tol`` (at least ``max(10, 10(nbar+1))``)."""
    base = max(10, math.ceil(10 * (nbar + 1)))
    if nbar == 0:
        return base
    ratio = nbar / (nbar + 1.0)
    needed = math.ceil(math.log(tol) / math.log(ratio))
    return max(base, needed)


def apply_thermal_loss(state: FockState, loss: ThermalLoss, mode: int = 0, ancilla_D: int | None = None) -> FockState:
    """``Tr_E[B (rho x rho_E) B^dagger]`` with a thermal ancilla of occupation ``nbar``."""
    state = materialize(state)
    if loss.eta == 1.0:
        return FockState(state.rho.copy(), state.D, state.m)
    D_E = ancilla_cutoff(loss.nbar) if ancilla_D is None else ancilla_D
    ratio = loss.nbar / (loss.nbar + 1.0)
    tail = ratio**D_E if loss.nbar > 0 else 0.0
    if tail >= ANCILLA_TAIL_TOL:
        raise CutoffError(f"ancilla cutoff {D_E} leaves thermal tail mass {tail:.2e}; increase it")
    lam = thermal_populations(loss.nbar, D_E)
    D, m = state.D, state.m
    theta = math.acos(math.sqrt(loss.eta))
    blocks = _beamsplitter_blocks(theta, D + D_E - 2)

    T = np.moveaxis(state.tensor, [mode, m + mode], [0, 1])
    out = np.zeros_like(T)
    a = np.arange(D)
    for l in range(D_E):
        if lam[l] < 1e-300:
            continue
        for e_out in range(D + l):
            shift = l - e_out  # output system photons = input + shift
            lo, hi = max(0, -shift), min(D, D - shift)
            if lo >= hi:
                continue
            src = a[lo:hi]
            k = np.array([blocks[s + l][s + shift, s] for s in src])
            if not np.any(k):
                continue
            dst = slice(lo + shift, hi + shift)
            block = T[lo:hi, lo:hi]
            w = lam[l] * np.multiply.outer(k, k)
            out[dst, dst] += w.reshape(w.shape + (1,) * (T.ndim - 2)) * block
    out = np.moveaxis(out, [0, 1], [mode, m + mode])
    result = FockState(out.reshape(D**m, D**m), D, m)
    _warn_overflow(result, "thermal loss")
    return result


def run_circuit(circuit: Circuit, D: int = DEFAULT_CUTOFF, keep: bool = False, defer_final_cubic: bool = True):
    """Simulate the circuit; with ``keep=True`` also return the state entering each loss.

    The last layer's cubic gate is kept symbolic (see ``FockState.pending_gamma``)
    unless ``defer_final_cubic`` is false.
    """
    state = prepare_input(circuit.input, D)
    before_loss = []
    for j, layer in enumerate(circuit.layers, start=1):
        gates = layer.gates
        if gates is None:
            if not (np.allclose(layer.gaussian.S, np.eye(2 * circuit.m)) and not np.any(layer.gaussian.d)):
                raise ValueError(f"layer {j}: the oracle needs the Gaussian as a parametric gate list")
            gates = ()
        for gate in gates:
            state = apply_gate(state, gate)
        before_loss.append(state)
        state = apply_thermal_loss(state, layer.loss, 0)
        if layer.cubic.gamma != 0.0:
            state = apply_gate(state, layer.cubic)
            if not (defer_final_cubic and j == circuit.L):
                state = materialize(state)
    return (state, before_loss) if keep else state


# --------------------------------------------------------------------------
# Measurements


def char_function(state: FockState, r) -> complex:
    """``Tr[rho D(r)]``."""
    r = as_point(r, state.m)
    T = state.tensor
    D, m = state.D, state.m
    # Contract mode by mode: Tr[rho (D_1 x ... x D_m)].
    for k in range(m):
        if k == 0 and state.pending_gamma != 0.0:
            Dk = conjugated_displacement_matrix(r[0], r[1], state.pending_gamma, D)
        else:
            Dk = displacement_matrix(r[2 * k], r[2 * k + 1], D)
        # T[i_k..., j_k...] -> sum_{i,j} T[i, ..., j, ...] Dk[j, i]
        T = np.tensordot(T, Dk, axes=([0, T.ndim // 2], [1, 0]))
        # tensordot removed one row axis and one column axis; remaining axes keep the order.
    return complex(T)


def char_function_many(state: FockState, points: Iterable) -> np.ndarray:
    return np.array([char_function(state, r) for r in points])


def observable_moments(state: FockState, mode: int = 0, max_order: int = 6) -> dict:
    """``<q^k>`` and ``<p^k>`` for ``k = 1..max_order`` on one mode."""
    # A deferred cubic gate acts on mode 0 only; other reduced states ignore it.
    gamma = state.pending_gamma if mode == 0 else 0.0
    bare = FockState(state.rho, state.D, state.m)
    rho = bare.reduced(mode)
    D = state.D
    # Padding keeps polynomials of degree 2 * max_order exact on the support of rho.
    Dp = D + 2 * max_order + 2
    big = np.zeros((Dp, Dp), dtype=complex)
    big[:D, :D] = rho
    _, _, q, p = build_quadratures(Dp)
    if gamma != 0.0:
        # A deferred exp(i g q^3) maps p to p + 6 g q^2 and leaves q alone.
        p = p + 6.0 * gamma * (q @ q)
    out = {"q": [], "p": []}
    for name, op in (("q", q), ("p", p)):
        power = np.eye(Dp, dtype=complex)
        for _ in range(max_order):
            power = power @ op
            out[name].append(float(np.real(np.trace(big @ power))))
    tail = float(np.real(np.sum(np.diag(rho)[-max_order:])))
    if tail > OVERFLOW_WARN:
        warnings.warn(f"moments: population {tail:.2e} near the cutoff", TruncationWarning, stacklevel=2)
    return out


def empirical_curvature(state: FockState, loss: ThermalLoss, points, h: float = 1e-3, ancilla_D: int | None = None) -> float:
    """Max over ``points`` of the central-difference ``|d^2 chi / dp_1^2|`` after the loss."""
    if h < 1e-5:
        warnings.warn("finite-difference step is below the oracle's precision floor", TruncationWarning, stacklevel=2)
    after = apply_thermal_loss(state, loss, 0, ancilla_D)
    best = 0.0
    for r in points:
        r = as_point(r, state.m)
        lo, hi = r.copy(), r.copy()
        lo[1] -= h
        hi[1] += h
        second = (char_function(after, hi) - 2.0 * char_function(after, r) + char_function(after, lo)) / h**2
        best = max(best, abs(second))
    return best


def overlap(state: FockState, other: FockState) -> complex:
    """``Tr[rho sigma]``."""
    state, other = materialize(state), materialize(other)
    return complex(np.vdot(other.rho.conj().T, state.rho))
