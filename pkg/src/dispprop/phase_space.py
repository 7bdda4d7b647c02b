"""Phase-space algebra and closed-form characteristic functions.

Conventions used throughout the package:

* hbar = 2, so ``q = a + a^dagger``, ``p = -i(a - a^dagger)`` and ``[q, p] = 2i``.
* Phase-space vectors are interleaved per mode: ``r = (q_1, p_1, ..., q_m, p_m)``.
* The displacement operator is ``D(r) = exp(i R^T Omega r)``; for one mode that
  is ``exp(i p q_op - i q p_op)``, i.e. the ladder-operator displacement with
  amplitude ``q + i p``.  It shifts ``(q_op, p_op)`` by ``2 (q, p)``.
* Coherent amplitudes ``alpha`` are eigenvalues of ``a``, so a coherent state sits
  at phase-space coordinates ``(q, p) = 2 (Re alpha, Im alpha)``.
* The characteristic function of an operator ``O`` is ``chi_O(r) = Tr[O D(r)]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

SYMPLECTIC_TOL = 1e-10


class DimensionError(ValueError):
    """Raised when array shapes disagree with the mode count."""


class SupportError(ValueError):
    """Raised when a point leaves the support of a delta-constrained function."""


def symplectic_form(m: int) -> np.ndarray:
    """Block-diagonal symplectic form for ``m`` modes in interleaved ordering."""
    if int(m) != m or m < 1:
        raise DimensionError(f"mode count must be a positive integer, got {m!r}")
    omega = np.zeros((2 * m, 2 * m))
    for j in range(m):
        omega[2 * j, 2 * j + 1] = 1.0
        omega[2 * j + 1, 2 * j] = -1.0
    return omega


@dataclass(frozen=True)
class SymplecticCheck:
    passed: bool
    deviation: float


def validate_symplectic(S, tol: float = SYMPLECTIC_TOL) -> SymplecticCheck:
    """Check ``S^T Omega S = Omega`` entrywise to ``tol``."""
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {S.shape}")
    if S.shape[0] % 2:
        raise DimensionError(f"symplectic matrices have even dimension, got {S.shape[0]}")
    omega = symplectic_form(S.shape[0] // 2)
    deviation = float(np.max(np.abs(S.T @ omega @ S - omega)))
    return SymplecticCheck(deviation <= tol, deviation)


def as_point(r, m: int | None = None) -> np.ndarray:
    """Coerce ``r`` to a finite float vector of even length (optionally ``2m``)."""
    arr = np.array(r, dtype=float).reshape(-1)
    if arr.size % 2:
        raise DimensionError(f"phase-space points have even length, got {arr.size}")
    if m is not None and arr.size != 2 * m:
        raise DimensionError(f"expected a point of length {2 * m}, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("phase-space point has non-finite entries")
    return arr


def block_to_interleaved(M) -> np.ndarray:
    """Permute a matrix from (q_1..q_m, p_1..p_m) ordering to interleaved ordering."""
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    m = n // 2
    perm = np.empty(n, dtype=int)
    perm[0::2] = np.arange(m)
    perm[1::2] = np.arange(m, 2 * m)
    return M[np.ix_(perm, perm)]


@dataclass(frozen=True, eq=False)
class SymplecticGaussian:
    """Affine Heisenberg action ``G^dagger R G = S R + d`` of a Gaussian unitary."""

    S: np.ndarray
    d: np.ndarray
    S_inv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        S = np.array(self.S, dtype=float)
        d = np.array(self.d, dtype=float).reshape(-1)
        if S.ndim != 2 or S.shape[0] != S.shape[1] or S.shape[0] % 2:
            raise DimensionError(f"S must be square of even size, got {S.shape}")
        if d.size != S.shape[0]:
            raise DimensionError(f"d has length {d.size}, expected {S.shape[0]}")
        check = validate_symplectic(S)
        if not check.passed:
            raise ValueError(f"matrix is not symplectic (max deviation {check.deviation:.3e})")
        # For a symplectic matrix the inverse is -Omega S^T Omega, which is
        # better conditioned than a generic solve.
        omega = symplectic_form(S.shape[0] // 2)
        S_inv = -omega @ S.T @ omega
        S.setflags(write=False)
        d.setflags(write=False)
        S_inv.setflags(write=False)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "S_inv", S_inv)

    @property
    def m(self) -> int:
        return self.S.shape[0] // 2

    @classmethod
    def identity(cls, m: int) -> "SymplecticGaussian":
        return cls(np.eye(2 * m), np.zeros(2 * m))

    def then(self, later: "SymplecticGaussian") -> "SymplecticGaussian":
        """Gate applying ``self`` first and ``later`` second."""
        return SymplecticGaussian(later.S @ self.S, later.S @ self.d + later.d)

    def coherence(self) -> float:
        """``|(S)_{q1,p1}|``: how much mode-1 momentum feeds mode-1 position."""
        return abs(float(self.S[0, 1]))

    def inverse_coherence(self) -> float:
        """``|(S^{-1})_{q1,p1}|``."""
        return abs(float(self.S_inv[0, 1]))

    def __eq__(self, other):
        if not isinstance(other, SymplecticGaussian):
            return NotImplemented
        return np.array_equal(self.S, other.S) and np.array_equal(self.d, other.d)

    def __hash__(self):
        return hash((self.S.tobytes(), self.d.tobytes()))


# --------------------------------------------------------------------------
# Input states


@dataclass(frozen=True)
class InputState:
    """Product input state with a closed-form characteristic function.

    ``kind`` is ``"vacuum"``, ``"coherent"`` (``params`` = complex amplitudes) or
    ``"thermal"`` (``params`` = mean photon numbers).
    """

    kind: str
    m: int
    params: tuple = ()

    def __post_init__(self):
        if self.m < 1:
            raise DimensionError("input state needs at least one mode")
        if self.kind == "vacuum":
            object.__setattr__(self, "params", ())
        elif self.kind == "coherent":
            vals = tuple(complex(a) for a in self.params)
            if len(vals) != self.m:
                raise DimensionError(f"need {self.m} coherent amplitudes, got {len(vals)}")
            if not all(np.isfinite(v.real) and np.isfinite(v.imag) for v in vals):
                raise ValueError("coherent amplitudes must be finite")
            object.__setattr__(self, "params", vals)
        elif self.kind == "thermal":
            vals = tuple(float(n) for n in self.params)
            if len(vals) != self.m:
                raise DimensionError(f"need {self.m} thermal occupations, got {len(vals)}")
            if any(not np.isfinite(n) or n < 0 for n in vals):
                raise ValueError("thermal occupations must be finite and non-negative")
            object.__setattr__(self, "params", vals)
        else:
            raise ValueError(f"unknown input-state kind {self.kind!r}")


def vacuum(m: int = 1) -> InputState:
    return InputState("vacuum", m)


def coherent(alphas: Sequence[complex]) -> InputState:
    alphas = tuple(alphas)
    return InputState("coherent", len(alphas), alphas)


def thermal(nbars: Sequence[float]) -> InputState:
    nbars = tuple(nbars)
    return InputState("thermal", len(nbars), nbars)


def _coherent_exponent(alphas: np.ndarray, R: np.ndarray) -> np.ndarray:
    q = R[..., 0::2]
    p = R[..., 1::2]
    phase = 2.0 * (p * alphas.real - q * alphas.imag)
    return np.sum(-0.5 * (q * q + p * p) + 1j * phase, axis=-1)


def log_input_char(state: InputState, R) -> np.ndarray:
    """Complex logarithm of ``chi_rho0`` at one point or a stack of points.

    Every supported input is Gaussian, so the log is a quadratic form; keeping it
    lets callers form ``chi - 1`` without cancellation.
    """
    R = np.asarray(R, dtype=float)
    if R.shape[-1] != 2 * state.m:
        raise DimensionError(f"points have length {R.shape[-1]}, state has {state.m} modes")
    q = R[..., 0::2]
    p = R[..., 1::2]
    if state.kind == "vacuum":
        out = -0.5 * np.sum(q * q + p * p, axis=-1) + 0j
    elif state.kind == "coherent":
        out = _coherent_exponent(np.asarray(state.params, dtype=complex), R)
    else:
        scale = 2.0 * np.asarray(state.params) + 1.0
        out = -0.5 * np.sum(scale * (q * q + p * p), axis=-1) + 0j
    return out


def input_char(state: InputState, r) -> complex | np.ndarray:
    """``Tr[rho0 D(r)]`` in closed form; accepts one point or an ``(N, 2m)`` stack."""
    out = np.exp(log_input_char(state, r))
    return complex(out) if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------
# Observables


def coherent_projector_char(alphas: Sequence[complex], m: int, r) -> tuple[complex, bool]:
    """Characteristic function of ``(|a_1><a_1| x ... x |a_k><a_k|) x I``.

    Returns ``(value, on_support)``.  The identity modes contribute a delta at the
    origin, so the function is only evaluated where those coordinates vanish;
    ``on_support`` is always ``True`` when a value is returned.
    """
    alphas = np.asarray(list(alphas), dtype=complex)
    k = alphas.size
    if not 1 <= k <= m:
        raise DimensionError(f"need 1 <= k <= m, got k={k}, m={m}")
    r = as_point(r, m)
    if np.any(r[2 * k:] != 0.0):
        raise SupportError("identity modes only support the origin")
    value = np.exp(_coherent_exponent(alphas, r[: 2 * k]))
    return complex(value), True


@dataclass(frozen=True)
class ObservableDescriptor:
    """Minimal observable description used for Fourier-norm bookkeeping."""

    kind: str  # "projectors", "displacement" or "identity"
    k: int = 0


def fourier_one_norm(obs: ObservableDescriptor) -> float:
    """Integrated |chi_O| normalised so that a k-projector product gives ``2^k``."""
    if obs.kind == "projectors":
        if obs.k < 0:
            raise ValueError("projector count must be non-negative")
        return float(2 ** obs.k)
    if obs.kind in ("displacement", "identity"):
        return 1.0
    raise NotImplementedError(f"no Fourier norm for observable kind {obs.kind!r}")
