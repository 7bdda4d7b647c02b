"""Channels of a noisy layer and their action on displacement operators.

A layer is ``U_j = C_j o Lambda_j o G_j``: a Gaussian unitary, then thermal loss
on mode 1, then a cubic phase gate ``exp(i gamma q_1^3)`` on mode 1.  Estimators
work in the Heisenberg picture, pushing ``D(r)`` backwards through adjoint maps.

Adjoint actions implemented here (one mode shown, hbar = 2):

* Gaussian: ``G^dagger D(r) G = exp(i d^T Omega r) D(S^{-1} r)``.
* Thermal loss: ``Lambda^*(D(r)) = exp(-nu (q^2 + p^2)) D(sqrt(eta) r)`` with
  ``nu = (1/2 + nbar)(1 - eta)``.
* Cubic gate: ``V^dagger D(q, p) V = K(q) * int dpbar  exp(i (p - pbar)^2 / (24 gamma q)) D(q, pbar)``
  where ``K(q) = exp(-i pi/4 sgn(gamma q)) exp(-2 i gamma q^3) / sqrt(24 pi |gamma q|)``.
  The modulus ``1/sqrt(24 pi |gamma q|)`` is the "discrete" factor and the rest is
  a unit-modulus kernel.  At ``gamma q = 0`` the gate acts trivially.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .gates import GaussianGate, compose_gates
from .phase_space import DimensionError, InputState, SymplecticGaussian, as_point

CUBIC_SCALE = 24.0 * np.pi


@dataclass(frozen=True)
class ThermalLoss:
    eta: float
    nbar: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.eta <= 1.0):
            raise ValueError(f"transmissivity must lie in (0, 1], got {self.eta}")
        if not (self.nbar >= 0.0 and np.isfinite(self.nbar)):
            raise ValueError(f"thermal occupation must be finite and >= 0, got {self.nbar}")

    @property
    def nu(self) -> float:
        """Damping rate ``(1/2 + nbar)(1 - eta)`` of the adjoint action."""
        return (0.5 + self.nbar) * (1.0 - self.eta)

    @property
    def is_identity(self) -> bool:
        return self.eta == 1.0


@dataclass(frozen=True)
class CubicGate:
    gamma: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.gamma):
            raise ValueError("cubicity must be finite")


@dataclass(frozen=True)
class NoisyLayer:
    """One layer ``C o Lambda o G``.

    ``gates`` optionally records the parametric gate list that produced
    ``gaussian``; the Fock oracle needs it to build unitaries.
    """

    gaussian: SymplecticGaussian
    loss: ThermalLoss
    cubic: CubicGate = field(default_factory=CubicGate)
    gates: tuple | None = None

    @classmethod
    def from_gates(cls, gates: Sequence[GaussianGate], m: int, loss: ThermalLoss, cubic: CubicGate | float = 0.0):
        gates = tuple(gates)
        if not isinstance(cubic, CubicGate):
            cubic = CubicGate(float(cubic))
        return cls(compose_gates(gates, m), loss, cubic, gates)

    @property
    def m(self) -> int:
        return self.gaussian.m


@dataclass(frozen=True)
class Circuit:
    m: int
    layers: tuple
    input: InputState

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.input.m != self.m:
            raise DimensionError(f"input state has {self.input.m} modes, circuit has {self.m}")
        for j, layer in enumerate(self.layers, start=1):
            if layer.m != self.m:
                raise DimensionError(f"layer {j} acts on {layer.m} modes, circuit has {self.m}")

    @property
    def L(self) -> int:
        return len(self.layers)

    @property
    def gammas(self) -> np.ndarray:
        return np.array([layer.cubic.gamma for layer in self.layers], dtype=float)


@dataclass(frozen=True)
class WeightedDisplacement:
    weight: complex
    point: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "point", as_point(self.point))
        object.__setattr__(self, "weight", complex(self.weight))


# --------------------------------------------------------------------------
# Vectorised kernels used by the estimators.  ``R`` has shape (..., 2m).


def gaussian_adjoint_points(g: SymplecticGaussian, R: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(phase_angle, S^{-1} r)`` with ``phase_angle = d^T Omega r``."""
    d = g.d
    q = R[..., 0::2]
    p = R[..., 1::2]
    angle = np.sum(d[0::2] * p - d[1::2] * q, axis=-1)
    return angle, R @ g.S_inv.T


def thermal_log_damping(loss: ThermalLoss, q: np.ndarray, p: np.ndarray) -> np.ndarray:
    return -loss.nu * (q * q + p * p)


def cubic_log_discrete(gamma: float, q1) -> np.ndarray:
    """Natural log of :func:`cubic_discrete_weight`, vectorised."""
    gq = np.abs(gamma * np.asarray(q1, dtype=float))
    with np.errstate(divide="ignore"):
        return np.where(gq > 0.0, -0.5 * np.log(CUBIC_SCALE * np.where(gq > 0, gq, 1.0)), 0.0)


def cubic_kernel_angle(gamma: float, q1, p1, pbar) -> np.ndarray:
    """Phase of the unit-modulus cubic kernel (valid where ``gamma q1 != 0``)."""
    q1 = np.asarray(q1, dtype=float)
    gq = gamma * q1
    safe = np.where(gq != 0.0, gq, 1.0)
    return -0.25 * np.pi * np.sign(gq) - 2.0 * gamma * q1**3 + (np.asarray(p1) - pbar) ** 2 / (24.0 * safe)


def cubic_diagonal_angle(gamma: float, q1) -> np.ndarray:
    """Phase ``-2 gamma q1^3`` kept when the cubic kernel is replaced by a delta."""
    q1 = np.asarray(q1, dtype=float)
    return -2.0 * gamma * q1**3


# --------------------------------------------------------------------------
# Single-displacement operations


def gaussian_adjoint_on_displacement(g: SymplecticGaussian, wd: WeightedDisplacement) -> WeightedDisplacement:
    if wd.point.size != 2 * g.m:
        raise DimensionError(f"point has length {wd.point.size}, gate acts on {g.m} modes")
    if not np.all(np.isfinite(g.S_inv)) or np.linalg.cond(g.S) > 1e12:
        raise np.linalg.LinAlgError("Gaussian gate is numerically singular")
    angle, point = gaussian_adjoint_points(g, wd.point)
    return WeightedDisplacement(wd.weight * np.exp(1j * angle), point)


def _mode_slice(point: np.ndarray, mode: int) -> slice:
    if not 0 <= mode < point.size // 2:
        raise DimensionError(f"mode {mode} out of range for {point.size // 2} mode(s)")
    return slice(2 * mode, 2 * mode + 2)


def thermal_adjoint_on_displacement(t: ThermalLoss, wd: WeightedDisplacement, mode: int = 0) -> WeightedDisplacement:
    sl = _mode_slice(wd.point, mode)
    q, p = wd.point[sl]
    point = wd.point.copy()
    point[sl] *= np.sqrt(t.eta)
    return WeightedDisplacement(wd.weight * np.exp(thermal_log_damping(t, q, p)), point)


def thermal_forward_on_displacement(t: ThermalLoss, wd: WeightedDisplacement, mode: int = 0) -> WeightedDisplacement:
    """Schroedinger-picture action ``Lambda(D(r))`` on a displacement operator."""
    sl = _mode_slice(wd.point, mode)
    q, p = wd.point[sl]
    rate = (0.5 + t.nbar) * (1.0 / t.eta - 1.0)
    point = wd.point.copy()
    point[sl] /= np.sqrt(t.eta)
    return WeightedDisplacement(wd.weight * np.exp(-rate * (q * q + p * p)) / t.eta, point)


def cubic_discrete_weight(gamma: float, q1: float) -> float:
    """``(24 pi |gamma q1|)^{-1/2}``, or 1 on the identity branch ``gamma q1 = 0``."""
    return float(np.exp(cubic_log_discrete(gamma, q1)))


# --------------------------------------------------------------------------
# Layer decomposition


_MAP_KINDS = ("cubic_discrete", "loss_re", "cubic_kernel", "loss_im", "loss_shift", "gaussian")


@dataclass(frozen=True)
class ElementaryMap:
    """One factor of a layer adjoint.

    ``kind`` is one of ``cubic_discrete`` (multiply by ``1/sqrt(24 pi |gamma q1|)``),
    ``loss_re`` / ``loss_im`` (damp by ``exp(-nu q1^2)`` / ``exp(-nu p1^2)``),
    ``cubic_kernel`` (unit-modulus Fresnel kernel, replaces ``p1`` by the
    integration variable), ``loss_shift`` (scale mode 1 by ``sqrt(eta)``) and
    ``gaussian`` (phase and ``S^{-1}``).  ``layer`` is 1-based.
    """

    kind: str
    layer: int

    def apply(self, circuit: Circuit, wd: WeightedDisplacement, pbar: float | None = None) -> WeightedDisplacement:
        layer = circuit.layers[self.layer - 1]
        q, p = wd.point[0], wd.point[1]
        gamma = layer.cubic.gamma
        if self.kind == "cubic_discrete":
            return WeightedDisplacement(wd.weight * cubic_discrete_weight(gamma, q), wd.point)
        if self.kind == "loss_re":
            return WeightedDisplacement(wd.weight * np.exp(-layer.loss.nu * q * q), wd.point)
        if self.kind == "loss_im":
            return WeightedDisplacement(wd.weight * np.exp(-layer.loss.nu * p * p), wd.point)
        if self.kind == "loss_shift":
            point = wd.point.copy()
            point[:2] *= np.sqrt(layer.loss.eta)
            return WeightedDisplacement(wd.weight, point)
        if self.kind == "gaussian":
            return gaussian_adjoint_on_displacement(layer.gaussian, wd)
        # cubic_kernel
        if gamma * q == 0.0:
            return wd
        if pbar is None:
            raise ValueError("the cubic kernel needs an integration variable")
        point = wd.point.copy()
        point[1] = pbar
        return WeightedDisplacement(wd.weight * np.exp(1j * cubic_kernel_angle(gamma, q, p, pbar)), point)


def decompose_layer_adjoint(j: int, circuit: Circuit) -> list[ElementaryMap]:
    """Elementary maps of the ``j``-th block of the layered adjoint, in application order.

    Blocks are grouped so each one ends with the next layer's discrete cubic
    factor and position damping; those two depend on the new ``q1`` only, which
    is linear in the sampled momentum and can be integrated together with it.

    * ``j == L`` additionally starts with the boundary pair
      ``[cubic_discrete_L, loss_re_L]``.
    * ``j >= 2`` ends with ``[cubic_discrete_{j-1}, loss_re_{j-1}]``.

    Concatenating blocks ``L, L-1, ..., 1`` yields, for every layer, the order
    discrete, re-damping, kernel, im-damping, shift, Gaussian; moving the
    re-damping ahead of the kernel is allowed because both leave ``q1`` alone.
    """
    L = circuit.L
    if not 1 <= j <= L:
        raise IndexError(f"layer index {j} outside 1..{L}")
    maps = []
    if j == L:
        maps += [ElementaryMap("cubic_discrete", j), ElementaryMap("loss_re", j)]
    maps += [ElementaryMap(kind, j) for kind in ("cubic_kernel", "loss_im", "loss_shift", "gaussian")]
    if j >= 2:
        maps += [ElementaryMap("cubic_discrete", j - 1), ElementaryMap("loss_re", j - 1)]
    return maps


def layer_adjoint_sequence(circuit: Circuit) -> list[ElementaryMap]:
    """All elementary maps from output to input, in application order."""
    out = []
    for j in range(circuit.L, 0, -1):
        out += decompose_layer_adjoint(j, circuit)
    return out
