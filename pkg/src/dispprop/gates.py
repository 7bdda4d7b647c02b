"""Parametric Gaussian gates with their analytic Heisenberg images.

Each gate ``G`` is described both by parameters (so the Fock oracle can build
its unitary from the generator) and by the affine map ``G^dagger R G = S R + d``.
Gates in a list act in time order: the first entry is applied first.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .phase_space import DimensionError, SymplecticGaussian


def _embed(block: np.ndarray, modes: Sequence[int], m: int) -> np.ndarray:
    S = np.eye(2 * m)
    idx = np.concatenate([[2 * j, 2 * j + 1] for j in modes])
    S[np.ix_(idx, idx)] = block
    return S


def _check_modes(modes: Sequence[int], m: int) -> None:
    if len(set(modes)) != len(modes) or any(not 0 <= j < m for j in modes):
        raise DimensionError(f"gate modes {tuple(modes)} invalid for {m} mode(s)")


@dataclass(frozen=True)
class Rotation:
    """``exp(i theta n)``: rotates ``a -> e^{i theta} a``."""

    theta: float
    mode: int = 0

    def symplectic(self, m: int) -> SymplecticGaussian:
        _check_modes([self.mode], m)
        c, s = np.cos(self.theta), np.sin(self.theta)
        return SymplecticGaussian(_embed(np.array([[c, -s], [s, c]]), [self.mode], m), np.zeros(2 * m))


@dataclass(frozen=True)
class Squeeze:
    """``exp((z^* a^2 - z a^dagger^2)/2)`` with ``z = r e^{i phi}``."""

    r: float
    phi: float = 0.0
    mode: int = 0

    def symplectic(self, m: int) -> SymplecticGaussian:
        _check_modes([self.mode], m)
        ch, sh = np.cosh(self.r), np.sinh(self.r)
        c, s = np.cos(self.phi), np.sin(self.phi)
        block = np.array([[ch - sh * c, -sh * s], [-sh * s, ch + sh * c]])
        return SymplecticGaussian(_embed(block, [self.mode], m), np.zeros(2 * m))


@dataclass(frozen=True)
class Shear:
    """``exp(i s q^2 / 4)``: maps ``p -> p + s q``."""

    s: float
    mode: int = 0

    def symplectic(self, m: int) -> SymplecticGaussian:
        _check_modes([self.mode], m)
        return SymplecticGaussian(_embed(np.array([[1.0, 0.0], [self.s, 1.0]]), [self.mode], m), np.zeros(2 * m))


@dataclass(frozen=True)
class Displacement:
    """Ladder-operator displacement by ``beta``: ``(q, p) -> (q, p) + 2 (Re beta, Im beta)``."""

    beta: complex
    mode: int = 0

    def symplectic(self, m: int) -> SymplecticGaussian:
        _check_modes([self.mode], m)
        d = np.zeros(2 * m)
        beta = complex(self.beta)
        d[2 * self.mode] = 2.0 * beta.real
        d[2 * self.mode + 1] = 2.0 * beta.imag
        return SymplecticGaussian(np.eye(2 * m), d)


@dataclass(frozen=True)
class Beamsplitter:
    """``exp(theta (a_i a_j^dagger - a_i^dagger a_j))``."""

    theta: float
    modes: tuple[int, int] = (0, 1)

    def symplectic(self, m: int) -> SymplecticGaussian:
        _check_modes(list(self.modes), m)
        c, s = np.cos(self.theta), np.sin(self.theta)
        block = np.array(
            [
                [c, 0.0, -s, 0.0],
                [0.0, c, 0.0, -s],
                [s, 0.0, c, 0.0],
                [0.0, s, 0.0, c],
            ]
        )
        return SymplecticGaussian(_embed(block, list(self.modes), m), np.zeros(2 * m))


GaussianGate = Rotation | Squeeze | Shear | Displacement | Beamsplitter


def compose_gates(gates: Sequence[GaussianGate], m: int) -> SymplecticGaussian:
    """Heisenberg image of the gate sequence applied in the given time order."""
    total = SymplecticGaussian.identity(m)
    for gate in gates:
        total = total.then(gate.symplectic(m))
    return total


_GATE_TYPES = {
    "rotation": Rotation,
    "squeeze": Squeeze,
    "shear": Shear,
    "displacement": Displacement,
    "beamsplitter": Beamsplitter,
}


def gate_to_dict(gate: GaussianGate) -> dict:
    for name, cls in _GATE_TYPES.items():
        if isinstance(gate, cls):
            break
    else:  # pragma: no cover - closed set
        raise TypeError(f"not a gate: {gate!r}")
    out = {"type": name}
    for key, value in vars(gate).items():
        if isinstance(value, complex):
            value = [value.real, value.imag]
        elif isinstance(value, tuple):
            value = list(value)
        out[key] = value
    return out


def gate_from_dict(spec: dict) -> GaussianGate:
    spec = dict(spec)
    kind = spec.pop("type", None)
    if kind not in _GATE_TYPES:
        raise ValueError(f"unknown gate type {kind!r}; expected one of {sorted(_GATE_TYPES)}")
    if kind == "displacement" and "beta" in spec:
        beta = spec["beta"]
        spec["beta"] = complex(*beta) if isinstance(beta, (list, tuple)) else complex(beta)
    if kind == "beamsplitter" and "modes" in spec:
        spec["modes"] = tuple(int(j) for j in spec["modes"])
    try:
        return _GATE_TYPES[kind](**spec)
    except TypeError as exc:
        raise ValueError(f"bad parameters for {kind} gate: {exc}") from None
