"""Monte Carlo primitives: weighted samplers, oracle bookkeeping, sample planning.

A sampling oracle for a linear map emits weighted points whose weighted average
is an (``bias``-close) estimate of the map, with every weight bounded in
modulus by ``magnitude``.  ``OracleSpec`` carries that pair and ``chain_specs``
composes it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy.special import gamma as _gamma_fn

from .channels import CUBIC_SCALE, ThermalLoss, cubic_kernel_angle, cubic_log_discrete

GAMMA_QUARTER = float(_gamma_fn(0.25))  # 3.625609908221908...


class SamplingError(ValueError):
    pass


class DivergentVarianceError(SamplingError):
    """Raised when a sampler would need a Gaussian measure of zero width."""


@dataclass(frozen=True)
class OracleSpec:
    bias: float = 0.0
    magnitude: float = 1.0

    def __post_init__(self):
        for name in ("bias", "magnitude"):
            value = getattr(self, name)
            if not (value >= 0.0 and math.isfinite(value)):
                raise ValueError(f"oracle {name} must be finite and >= 0, got {value}")


def chain_specs(outer: OracleSpec, inner: OracleSpec) -> OracleSpec:
    """Spec of running ``outer`` and feeding each emitted point to ``inner``."""
    return OracleSpec(outer.bias + outer.magnitude * inner.bias, outer.magnitude * inner.magnitude)


def chain_all(specs: Iterable[OracleSpec]) -> OracleSpec:
    """Fold a sequence of specs, outermost first."""
    total = OracleSpec(0.0, 1.0)
    for spec in specs:
        total = chain_specs(total, spec)
    return total


def plan_samples(magnitude: float, precision: float, delta: float) -> int:
    """Hoeffding sample count ``ceil(2 M^2 ln(2/delta) / precision^2)`` (at least 1)."""
    if not precision > 0:
        raise ValueError(f"precision must be positive, got {precision}")
    if not 0 < delta < 1:
        raise ValueError(f"failure probability must lie in (0, 1), got {delta}")
    if magnitude < 0:
        raise ValueError(f"magnitude must be non-negative, got {magnitude}")
    if magnitude == 0:
        return 1
    n = 2.0 * magnitude**2 * math.log(2.0 / delta) / precision**2
    return max(1, math.ceil(n))


# --------------------------------------------------------------------------
# Random streams


@dataclass(frozen=True)
class RngStream:
    """Reproducible stream identified by ``(seed, stream)``.

    Streams are derived with ``SeedSequence`` spawn keys and drive a Philox
    counter-based generator, so distinct indices never overlap.  ``child``
    extends the key for per-worker sub-streams.
    """

    seed: int = 0
    stream: int = 0
    path: tuple = ()

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream, *self.path))
        return np.random.Generator(np.random.Philox(seq))

    def child(self, index: int) -> "RngStream":
        return RngStream(self.seed, self.stream, self.path + (int(index),))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    if rng is None or isinstance(rng, (int, np.integer)):
        return RngStream(0 if rng is None else int(rng)).generator()
    raise TypeError(f"cannot build a generator from {rng!r}")


# --------------------------------------------------------------------------
# Weighted samplers


def sample_shifted_gaussian(a: float, b: float, A: float, rng, size=None):
    """Draw ``y`` for ``int exp(-A (a y + b)^2) G(y) dy``.

    Returns ``(weight, y)`` with ``y ~ N(-b/a, 1/(2 A a^2))`` and the constant
    weight ``sqrt(pi/A)/|a|``, so ``E[weight G(y)]`` equals the integral.
    """
    if a == 0:
        raise SamplingError("degenerate kernel: a = 0")
    if not A > 0:
        raise SamplingError(f"Gaussian rate must be positive, got {A}")
    gen = as_generator(rng)
    scale = 1.0 / (abs(a) * math.sqrt(2.0 * A))
    y = gen.normal(-b / a, scale, size=size)
    return math.sqrt(math.pi / A) / abs(a), y


def sample_gamma_quarter(a: float, b: float, A: float, B: float, rng, size=None):
    """Draw ``y`` for ``int exp(-A (a y + b)^2) / (B sqrt|a y + b|) G(y) dy``.

    With ``t = a y + b`` the weight function ``exp(-A t^2)/sqrt|t|`` is, up to
    normalisation, the law of ``s sqrt(U)`` for ``U ~ Gamma(1/4, rate A)`` and a
    fair sign ``s``.  Returns ``(weight, y)`` with ``weight = Gamma(1/4) / (|a| A^{1/4} B)``.

    Variates come from NumPy's gamma generator, whose shape < 1 branch is a
    rejection sampler on ``Gamma(shape + 1)`` with the ``U^{1/shape}`` boost.
    """
    if a == 0:
        raise SamplingError("degenerate kernel: a = 0")
    if not (A > 0 and B > 0):
        raise SamplingError(f"rate and scale must be positive, got A={A}, B={B}")
    gen = as_generator(rng)
    u = gen.gamma(0.25, 1.0 / A, size=size)
    sign = np.where(gen.random(size=size) < 0.5, -1.0, 1.0)
    t = sign * np.sqrt(u)
    y = (t - b) / a
    return GAMMA_QUARTER / (abs(a) * A**0.25 * B), y


# --------------------------------------------------------------------------
# Biased single-layer oracle for noisy cubic gates


def case2_magnitude(gamma: float, loss: ThermalLoss, threshold: float) -> float:
    """Sup of the sampled-branch weight ``exp(-nu q^2) / sqrt(24 nu |gamma q|)`` over ``|gamma q| >= threshold``."""
    if gamma == 0:
        return 0.0
    nu = loss.nu
    if nu == 0:
        return math.inf
    if threshold <= 0:
        return math.inf
    return math.exp(-nu * (threshold / abs(gamma)) ** 2) / math.sqrt(24.0 * nu * threshold)


def nominal_case2_magnitude(gamma: float, loss: ThermalLoss, M: float, eps: float) -> float:
    """Nominal form ``(1/2) sqrt(M/eps) exp(-nu eps^2 / (36 M^2 gamma^2))`` at threshold ``eps/(6M)``.

    It omits the ``nu^{-1/2}`` normalisation of the Gaussian measure that
    :func:`case2_magnitude` includes; both are reported.
    """
    if gamma == 0:
        return 0.0
    return 0.5 * math.sqrt(M / eps) * math.exp(-loss.nu * eps**2 / (36.0 * M**2 * gamma**2))


@dataclass(frozen=True)
class AdaptiveDraw:
    weight: complex
    point: np.ndarray
    branch: str  # "deterministic-phase" or "sampled"
    spec: OracleSpec


def sample_adaptive_cubic(gamma: float, loss: ThermalLoss, point, threshold: float, M: float, rng) -> AdaptiveDraw:
    """One draw from the biased oracle for ``Lambda^* o C^*`` on mode 1.

    Below the threshold the Fresnel kernel is replaced by a delta (deterministic
    phase ``exp(-2i gamma q^3)``, bias at most ``6 |gamma q| M``).  At or above it
    the kernel is sampled exactly with the Gaussian measure ``exp(-nu pbar^2)``.
    """
    if threshold < 0 or M < 0:
        raise ValueError("threshold and curvature bound must be non-negative")
    r = np.array(point, dtype=float)
    q, p = r[0], r[1]
    gq = abs(gamma * q)
    sqrt_eta = math.sqrt(loss.eta)
    if gq < threshold or gq == 0.0:
        weight = np.exp(-2j * gamma * q**3 - loss.nu * (q * q + p * p))
        r[:2] *= sqrt_eta
        return AdaptiveDraw(complex(weight), r, "deterministic-phase", OracleSpec(6.0 * gq * M, 1.0))
    if loss.nu == 0:
        raise DivergentVarianceError("noiseless layer: the sampled branch has no Gaussian measure")
    w, pbar = sample_shifted_gaussian(1.0, 0.0, loss.nu, rng)
    log_mod = -loss.nu * q * q + float(cubic_log_discrete(gamma, q))
    weight = w * math.exp(log_mod) * np.exp(1j * cubic_kernel_angle(gamma, q, p, pbar))
    r[1] = pbar
    r[:2] *= sqrt_eta
    return AdaptiveDraw(complex(weight), r, "sampled", OracleSpec(0.0, case2_magnitude(gamma, loss, threshold)))


__all__ = [
    "CUBIC_SCALE",
    "GAMMA_QUARTER",
    "AdaptiveDraw",
    "DivergentVarianceError",
    "OracleSpec",
    "RngStream",
    "SamplingError",
    "as_generator",
    "case2_magnitude",
    "chain_all",
    "chain_specs",
    "nominal_case2_magnitude",
    "plan_samples",
    "sample_adaptive_cubic",
    "sample_gamma_quarter",
    "sample_shifted_gaussian",
]
