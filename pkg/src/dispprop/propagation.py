"""Displacement-propagation estimators for ``Tr[D(r) U(rho0)]``.

The estimate pushes ``D(r)`` backwards through the layer adjoints (see
:mod:`dispprop.channels`), carrying a complex weight.  Per layer the cubic
kernel is either

* replaced by a delta (deterministic phase), when ``|gamma q1|`` is below a
  threshold, at a bias of at most ``6 |gamma q1| M``; or
* integrated by Monte Carlo.  The momentum draw uses the Gamma(1/4) sampler when
  the next layer's factor ``exp(-nu q1'^2)/sqrt(24 pi |gamma' q1'|)`` can be
  absorbed (the new ``q1'`` is linear in the draw), otherwise a Gaussian sampler.

Three drivers share that machinery:

``estimate_char_unbiased``
    samples every layer; zero bias, needs ``gamma_j != 0`` and nonzero
    ``(S_j^{-1})_{q1,p1}``.
``estimate_char_adaptive``
    walks deterministically while ``|gamma_j q1| < tau = eps/(12 M L)`` and then
    samples the remaining layers exactly.
``estimate_char_near_gaussian``
    splits every layer into the deterministic or a Gaussian-sampled branch with
    threshold ``eps'/(6M)``; cost does not depend on symplectic coherence.

Weights are stored as log-modulus plus phase per path so long circuits do not
underflow.
"""

from __future__ import annotations

import logging
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .channels import (
    CUBIC_SCALE,
    Circuit,
    cubic_kernel_angle,
    cubic_log_discrete,
    gaussian_adjoint_points,
)
from .phase_space import as_point, log_input_char
from .sampling import (
    GAMMA_QUARTER,
    DivergentVarianceError,
    OracleSpec,
    RngStream,
    case2_magnitude,
    chain_all,
    plan_samples,
    sample_gamma_quarter,
    sample_shifted_gaussian,
)

log = logging.getLogger(__name__)

UNBIASED = "unbiased"
ADAPTIVE = "adaptive"
NEAR_GAUSSIAN = "near-gaussian"
ALGORITHMS = (UNBIASED, ADAPTIVE, NEAR_GAUSSIAN)

DEFAULT_MAX_SAMPLES = 50_000_000
BATCH = 1 << 17


class EstimatorInapplicableError(ValueError):
    """The requested estimator's hypotheses fail for this circuit."""


class RegimeViolationError(ValueError):
    """The circuit lies outside the near-Gaussian regime."""


class SampleBudgetError(RuntimeError):
    """The Hoeffding sample count exceeds the configured ceiling."""


@dataclass(frozen=True)
class EstimateResult:
    value: complex
    stderr: float
    samples: int
    algorithm: str
    declared_bias: float
    oracle_spec: OracleSpec
    layer_specs: tuple = ()
    deterministic_steps: int = 0
    threshold: float = 0.0
    epsilon: float | None = None
    delta: float | None = None
    # Exact log of the value when no sampling happened; lets callers form
    # ``value - 1`` for tiny displacements without cancellation.
    log_value: complex | None = None

    def minus_one(self) -> complex:
        if self.log_value is not None:
            return complex(np.expm1(self.log_value))
        return self.value - 1.0

    def to_dict(self) -> dict:
        return {
            "value": [self.value.real, self.value.imag],
            "stderr": self.stderr,
            "samples": self.samples,
            "algorithm": self.algorithm,
            "declared_bias": self.declared_bias,
            "magnitude": self.oracle_spec.magnitude,
            "oracle_bias": self.oracle_spec.bias,
            "layer_magnitudes": [s.magnitude for s in self.layer_specs],
            "deterministic_steps": self.deterministic_steps,
            "threshold": self.threshold,
            "epsilon": self.epsilon,
            "delta": self.delta,
        }


@dataclass(frozen=True)
class PathRecord:
    layer: int
    point: np.ndarray
    weight: complex
    branch: str


# --------------------------------------------------------------------------
# Path state and per-layer updates


@dataclass
class _Paths:
    R: np.ndarray
    logmag: np.ndarray
    angle: np.ndarray
    ndet: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.ndet is None:
            self.ndet = np.zeros(self.R.shape[0], dtype=np.int64)

    @classmethod
    def replicate(cls, r: np.ndarray, n: int, logmag: float = 0.0, angle: float = 0.0) -> "_Paths":
        return cls(np.tile(r, (n, 1)), np.full(n, float(logmag)), np.full(n, float(angle)))


def _entry_log(layer, q: np.ndarray) -> np.ndarray:
    """Log of the layer's discrete cubic factor times its position damping."""
    return -layer.loss.nu * q * q + cubic_log_discrete(layer.cubic.gamma, q)


def _apply_gaussian(layer, P: _Paths, idx) -> None:
    angle, R = gaussian_adjoint_points(layer.gaussian, P.R[idx])
    P.angle[idx] += angle
    P.R[idx] = R


def _deterministic_step(layer, P: _Paths, idx) -> None:
    """Cubic kernel replaced by a delta, then the exact loss and Gaussian adjoints."""
    q = P.R[idx, 0]
    p = P.R[idx, 1]
    gamma = layer.cubic.gamma
    if gamma != 0.0:
        P.angle[idx] += -2.0 * gamma * q**3
    P.logmag[idx] += -layer.loss.nu * (q * q + p * p)
    P.R[idx, :2] *= math.sqrt(layer.loss.eta)
    _apply_gaussian(layer, P, idx)
    if gamma != 0.0:
        P.ndet[idx] += q != 0.0


@dataclass(frozen=True)
class _Plan:
    kind: str  # "gamma", "gauss" or "identity"
    magnitude: float
    a: float = 0.0
    rate: float = 0.0
    scale: float = 0.0


def _layer_plan(circuit: Circuit, k: int) -> _Plan:
    """How layer ``k`` (1-based) is sampled once a path is in exact mode."""
    layer = circuit.layers[k - 1]
    gamma = layer.cubic.gamma
    prev_gamma = circuit.layers[k - 2].cubic.gamma if k >= 2 else 0.0
    if gamma == 0.0:
        if prev_gamma != 0.0:
            raise EstimatorInapplicableError(
                f"layer {k} has no cubic gate while layer {k - 1} does; the exact estimator "
                "cannot bound the deterministic discrete factor (use the near-Gaussian estimator)"
            )
        return _Plan("identity", 1.0)
    if layer.loss.nu == 0.0:
        raise DivergentVarianceError(f"layer {k} is noiseless; its cubic kernel has no Gaussian measure to sample")
    if prev_gamma != 0.0:
        a = math.sqrt(layer.loss.eta) * float(layer.gaussian.S_inv[0, 1])
        if a == 0.0:
            raise EstimatorInapplicableError(
                f"layer {k} has zero symplectic coherence (S^-1)_(q1,p1) = 0; use the adaptive or near-Gaussian estimator"
            )
        rate = circuit.layers[k - 2].loss.nu
        if rate == 0.0:
            raise DivergentVarianceError(f"layer {k - 1} is noiseless; the Gamma(1/4) measure degenerates")
        scale = math.sqrt(CUBIC_SCALE * abs(prev_gamma))
        return _Plan("gamma", GAMMA_QUARTER / (abs(a) * rate**0.25 * scale), a, rate, scale)
    return _Plan("gauss", math.sqrt(math.pi / layer.loss.nu))


def _exact_step(circuit: Circuit, k: int, plan: _Plan, P: _Paths, idx: np.ndarray, gen) -> None:
    """Sample layer ``k`` exactly for paths ``idx`` whose entry factor is already applied."""
    layer = circuit.layers[k - 1]
    gamma = layer.cubic.gamma
    nu = layer.loss.nu
    sqrt_eta = math.sqrt(layer.loss.eta)
    R = P.R[idx]
    q, p = R[:, 0], R[:, 1]
    logmag = P.logmag[idx]
    angle = P.angle[idx]
    active = gamma * q != 0.0
    absorbed = np.zeros(q.size, dtype=bool)
    pbar = p.copy()
    n_act = int(active.sum())
    if n_act:
        if plan.kind == "gamma":
            s_inv = layer.gaussian.S_inv
            b = sqrt_eta * s_inv[0, 0] * q[active] + R[active, 2:] @ s_inv[0, 2:]
            w, y = sample_gamma_quarter(plan.a, b, plan.rate, plan.scale, gen, size=n_act)
            logmag[active] += math.log(w) - nu * y * y
            absorbed[active] = True
        else:
            if nu == 0.0:
                raise DivergentVarianceError(f"layer {k} is noiseless; its cubic kernel has no Gaussian measure to sample")
            w, y = sample_shifted_gaussian(1.0, 0.0, nu, gen, size=n_act)
            logmag[active] += math.log(w)
        angle[active] += cubic_kernel_angle(gamma, q[active], p[active], y)
        pbar[active] = y
    inactive = ~active
    if inactive.any():
        logmag[inactive] += -nu * p[inactive] ** 2
    R[:, 1] = pbar
    R[:, :2] *= sqrt_eta
    phase, R = gaussian_adjoint_points(layer.gaussian, R)
    angle += phase
    if k >= 2:
        rest = ~absorbed
        if rest.any():
            logmag[rest] += _entry_log(circuit.layers[k - 2], R[rest, 0])
    P.R[idx] = R
    P.logmag[idx] = logmag
    P.angle[idx] = angle


def _near_gaussian_step(circuit: Circuit, k: int, lam: float, P: _Paths, gen) -> None:
    layer = circuit.layers[k - 1]
    gamma = layer.cubic.gamma
    gq = np.abs(gamma * P.R[:, 0])
    case1 = gq < lam
    if gamma == 0.0:
        case1[:] = True
    case2 = ~case1
    idx1 = np.nonzero(case1)[0]
    if idx1.size:
        q, p = P.R[idx1, 0], P.R[idx1, 1]
        if gamma != 0.0:
            P.angle[idx1] += -2.0 * gamma * q**3
        P.logmag[idx1] += -layer.loss.nu * (q * q + p * p)
        if gamma != 0.0:
            P.ndet[idx1] += q != 0.0
    idx2 = np.nonzero(case2)[0]
    if idx2.size:
        nu = layer.loss.nu
        if nu == 0.0:
            raise DivergentVarianceError(f"layer {k} is noiseless; the sampled branch has no Gaussian measure")
        q, p = P.R[idx2, 0], P.R[idx2, 1]
        w, y = sample_shifted_gaussian(1.0, 0.0, nu, gen, size=idx2.size)
        P.logmag[idx2] += _entry_log(layer, q) + math.log(w)
        P.angle[idx2] += cubic_kernel_angle(gamma, q, p, y)
        P.R[idx2, 1] = y
    P.R[:, :2] *= math.sqrt(layer.loss.eta)
    _apply_gaussian(layer, P, slice(None))


# --------------------------------------------------------------------------
# Drivers


def _walk(circuit: Circuit, r: np.ndarray, tau: float):
    """Deterministic prefix: layers handled by the delta branch, starting from the output."""
    P = _Paths.replicate(r, 1)
    k = circuit.L
    damping = []
    while k >= 1:
        layer = circuit.layers[k - 1]
        gq = float(abs(layer.cubic.gamma * P.R[0, 0]))
        if not (gq == 0.0 or gq < tau):
            break
        before = P.logmag[0]
        _deterministic_step(layer, P, slice(None))
        damping.append((gq, math.exp(float(P.logmag[0] - before))))
        k -= 1
    return k, P, damping


def _finalize_exact(circuit: Circuit, P: _Paths, algorithm: str, specs, ndet: int, threshold: float, eps, delta, bias: float):
    logv = complex(P.logmag[0] + 1j * P.angle[0] + log_input_char(circuit.input, P.R[0]))
    spec = chain_all(specs) if specs else OracleSpec(0.0, 1.0)
    return EstimateResult(
        value=complex(np.exp(logv)),
        stderr=0.0,
        samples=1,
        algorithm=algorithm,
        declared_bias=bias,
        oracle_spec=OracleSpec(bias, spec.magnitude),
        layer_specs=tuple(specs),
        deterministic_steps=ndet,
        threshold=threshold,
        epsilon=eps,
        delta=delta,
        log_value=logv,
    )


def _normalize_rng(rng) -> RngStream:
    if isinstance(rng, RngStream):
        return rng
    if rng is None:
        return RngStream(0)
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng))
    raise TypeError("rng must be an RngStream, an integer seed or None")


def _run_sampled(n: int, start: Callable[[int], _Paths], propagate: Callable, circuit: Circuit, rng, workers: int, log_bound: float):
    """Run ``n`` paths split across ``workers`` streams; return (mean, stderr)."""
    stream = _normalize_rng(rng)
    workers = max(1, int(workers))
    counts = [n // workers + (1 if w < n % workers else 0) for w in range(workers)]

    def work(w: int):
        gen = stream.child(w).generator()
        total, mean, m2 = 0, 0j, 0.0
        remaining = counts[w]
        while remaining > 0:
            size = min(BATCH, remaining)
            P = start(size)
            propagate(P, gen)
            if size and np.max(P.logmag) > log_bound + 1e-9:
                raise AssertionError("a path weight exceeded its declared oracle magnitude")
            lc = log_input_char(circuit.input, P.R)
            mod = np.exp(P.logmag + lc.real)
            ang = P.angle + lc.imag
            bm = complex(np.dot(mod, np.cos(ang)), np.dot(mod, np.sin(ang))) / size
            bm2 = max(float(np.dot(mod, mod)) - size * abs(bm) ** 2, 0.0)
            # Chan et al. pairwise update keeps the reduction order fixed.
            tot = total + size
            d = bm - mean
            mean = mean + d * size / tot
            m2 = m2 + bm2 + abs(d) ** 2 * total * size / tot
            total = tot
            remaining -= size
        return total, mean, m2

    if workers == 1:
        parts = [work(0)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, range(workers)))
    total, mean, m2 = 0, 0j, 0.0
    for cnt, mu, q in parts:
        if cnt == 0:
            continue
        tot = total + cnt
        d = mu - mean
        mean = mean + d * cnt / tot
        m2 = m2 + q + abs(d) ** 2 * total * cnt / tot
        total = tot
    stderr = math.sqrt(m2 / (total - 1) / total) if total > 1 else 0.0
    return complex(mean), stderr


def _check_budget(n: int, max_samples: int, magnitude: float):
    if n > max_samples:
        raise SampleBudgetError(
            f"Hoeffding plan needs {n:.3e} samples (chained magnitude {magnitude:.3e}); "
            f"the ceiling is {max_samples:.3e}. Loosen epsilon/delta or raise max_samples."
        )


def _exact_tail(circuit: Circuit, k0: int, P0: _Paths, algorithm: str, eps: float, delta: float, rng, workers: int,
                max_samples: int, precision: float, bias: float, walk_specs: list, ndet: int, threshold: float):
    """Sample layers ``k0..1`` exactly, starting from the walked point ``P0``."""
    r = P0.R[0]
    layer = circuit.layers[k0 - 1]
    entry = float(_entry_log(layer, np.array([r[0]]))[0])
    plans = [_layer_plan(circuit, k) for k in range(k0, 0, -1)]
    # ``walk_specs`` already carry the walked prefix's damping (P0.logmag).
    start_spec = OracleSpec(0.0, math.exp(entry))
    specs = walk_specs + [start_spec] + [OracleSpec(0.0, p.magnitude) for p in plans]
    total = chain_all(specs)
    n = plan_samples(total.magnitude, precision, delta)
    _check_budget(n, max_samples, total.magnitude)
    log_bound = math.log(total.magnitude) if total.magnitude > 0 else -math.inf

    def start(size):
        return _Paths.replicate(r, size, P0.logmag[0] + entry, P0.angle[0])

    def propagate(P, gen):
        for k, plan in zip(range(k0, 0, -1), plans):
            _exact_step(circuit, k, plan, P, slice(None), gen)

    mean, stderr = _run_sampled(n, start, propagate, circuit, rng, workers, log_bound)
    return EstimateResult(
        value=mean,
        stderr=stderr,
        samples=n,
        algorithm=algorithm,
        declared_bias=bias,
        oracle_spec=OracleSpec(bias, total.magnitude),
        layer_specs=tuple(specs),
        deterministic_steps=ndet,
        threshold=threshold,
        epsilon=eps,
        delta=delta,
    )


def _zero_depth(circuit: Circuit, r: np.ndarray, algorithm: str, eps, delta) -> EstimateResult:
    P = _Paths.replicate(r, 1)
    return _finalize_exact(circuit, P, algorithm, [], 0, 0.0, eps, delta, 0.0)


def estimate_char_unbiased(circuit: Circuit, r, epsilon: float = 0.05, delta: float = 0.05, rng=None, *,
                           workers: int = 1, max_samples: int = DEFAULT_MAX_SAMPLES) -> EstimateResult:
    """Unbiased estimate of ``chi(r)``; ``|value - truth| <= epsilon`` with probability ``1 - delta``.

    Requires a cubic gate in every layer and nonzero ``(S_j^{-1})_{q1,p1}`` for
    ``j >= 2`` (layer 1's coherence never enters).  A point with ``q1 = 0`` takes
    the identity branch of the outermost cubic gate.
    """
    r = as_point(r, circuit.m)
    if circuit.L == 0:
        return _zero_depth(circuit, r, UNBIASED, epsilon, delta)
    for k in range(1, circuit.L + 1):
        if circuit.layers[k - 1].cubic.gamma == 0.0:
            raise EstimatorInapplicableError(f"layer {k} has zero cubicity; use the adaptive or near-Gaussian estimator")
        _layer_plan(circuit, k)
    k0, P0, damping = _walk(circuit, r, 0.0)
    walk_specs = [OracleSpec(0.0, d) for _, d in damping]
    if k0 == 0:
        return _finalize_exact(circuit, P0, UNBIASED, walk_specs, 0, 0.0, epsilon, delta, 0.0)
    return _exact_tail(circuit, k0, P0, UNBIASED, epsilon, delta, rng, workers, max_samples, epsilon, 0.0,
                       walk_specs, 0, 0.0)


def adaptive_threshold(epsilon: float, M: float, L: int) -> float:
    """``tau = eps / (12 M L)`` (infinite when ``M = 0``)."""
    if M == 0:
        return math.inf
    return epsilon / (12.0 * M * max(L, 1))


def estimate_char_adaptive(circuit: Circuit, r, epsilon: float, delta: float, M: float, rng=None, *,
                           threshold: float | None = None, workers: int = 1,
                           max_samples: int = DEFAULT_MAX_SAMPLES) -> EstimateResult:
    """Adaptive estimate: deterministic delta branch while ``|gamma_j q1| < tau``, exact sampling afterwards.

    The declared bias is ``6 tau M`` per deterministic step, at most ``eps/2``;
    the remaining ``eps/2`` goes to sampling error.
    """
    if M < 0:
        raise ValueError("curvature bound M must be non-negative")
    r = as_point(r, circuit.m)
    if circuit.L == 0:
        return _zero_depth(circuit, r, ADAPTIVE, epsilon, delta)
    tau = adaptive_threshold(epsilon, M, circuit.L) if threshold is None else float(threshold)
    k0, P0, damping = _walk(circuit, r, tau)
    ndet = sum(1 for gq, _ in damping if gq > 0)
    bias = 0.0 if M == 0 else 6.0 * tau * M * ndet
    walk_specs = [OracleSpec(6.0 * tau * M if (M and gq > 0) else 0.0, d) for gq, d in damping]
    if k0 == 0:
        return _finalize_exact(circuit, P0, ADAPTIVE, walk_specs, ndet, tau, epsilon, delta, bias)
    return _exact_tail(circuit, k0, P0, ADAPTIVE, epsilon, delta, rng, workers, max_samples, epsilon / 2.0, bias,
                       walk_specs, ndet, tau)


def near_gaussian_threshold(epsilon: float, M: float, loss) -> float:
    """Largest cubicity admitted by the near-Gaussian regime for one layer's noise."""
    ratio = 2.0 * M / epsilon
    if ratio <= 1.0:
        return math.inf
    noise = (1.0 + 2.0 * loss.nbar) * (1.0 - loss.eta)
    return (epsilon / (6.0 * M)) * math.sqrt(noise / (2.0 * math.log(2.0) * math.log(ratio)))


def near_gaussian_violations(circuit: Circuit, epsilon: float, M: float) -> list[int]:
    bad = []
    for k, layer in enumerate(circuit.layers, start=1):
        if abs(layer.cubic.gamma) >= near_gaussian_threshold(epsilon, M, layer.loss):
            bad.append(k)
    return bad


def estimate_char_near_gaussian(circuit: Circuit, r, epsilon: float, delta: float, M: float, rng=None, *,
                                layer_bias: float | None = None, workers: int = 1,
                                max_samples: int = DEFAULT_MAX_SAMPLES) -> EstimateResult:
    """Estimate for circuits whose cubicities sit below the near-Gaussian threshold.

    Each layer uses the biased oracle with per-layer bias ``layer_bias``
    (default ``eps/4``) and threshold ``layer_bias/(6M)``.  The declared bias
    chains the per-layer specs; a deterministic branch has weight modulus up to
    1, so the chained bias grows like the number of layers when the sampled
    branch magnitude stays below 1.
    """
    if M <= 0:
        raise ValueError("curvature bound M must be positive for the near-Gaussian estimator")
    r = as_point(r, circuit.m)
    if circuit.L == 0:
        return _zero_depth(circuit, r, NEAR_GAUSSIAN, epsilon, delta)
    bad = near_gaussian_violations(circuit, epsilon, M)
    if bad:
        k = bad[0]
        raise RegimeViolationError(
            f"layer {k}: |gamma| = {abs(circuit.layers[k - 1].cubic.gamma):.3e} is not below the near-Gaussian "
            f"threshold {near_gaussian_threshold(epsilon, M, circuit.layers[k - 1].loss):.3e}"
        )
    eps_layer = epsilon / 4.0 if layer_bias is None else float(layer_bias)
    lam = eps_layer / (6.0 * M)
    k0, P0, damping = _walk(circuit, r, lam)
    specs = [OracleSpec(6.0 * gq * M, d) for gq, d in damping]
    ndet = sum(1 for gq, _ in damping if gq > 0)
    if k0 == 0:
        spec = chain_all(specs)
        return _finalize_exact(circuit, P0, NEAR_GAUSSIAN, specs, ndet, lam, epsilon, delta, spec.bias)
    layer = circuit.layers[k0 - 1]
    q0 = P0.R[0, 0]
    if layer.loss.nu == 0.0:
        raise DivergentVarianceError(f"layer {k0} is noiseless; the sampled branch has no Gaussian measure")
    first = math.exp(float(_entry_log(layer, np.array([q0]))[0])) * math.sqrt(math.pi / layer.loss.nu)
    specs.append(OracleSpec(0.0, first))
    for k in range(k0 - 1, 0, -1):
        lyr = circuit.layers[k - 1]
        if lyr.cubic.gamma == 0.0:
            specs.append(OracleSpec(0.0, 1.0))
        else:
            specs.append(OracleSpec(6.0 * lam * M, max(1.0, case2_magnitude(lyr.cubic.gamma, lyr.loss, lam))))
    # The walked prefix carries the path's own modulus; include it once.
    total = chain_all(specs)
    if total.bias > epsilon / 2.0 * (1 + 1e-12):
        warnings.warn(
            f"chained bias bound {total.bias:.3e} exceeds eps/2 = {epsilon / 2:.3e}; "
            "pass a smaller layer_bias for a certified estimate",
            RuntimeWarning,
            stacklevel=2,
        )
    n = plan_samples(total.magnitude, epsilon / 2.0, delta)
    _check_budget(n, max_samples, total.magnitude)
    log_bound = math.log(total.magnitude)
    r0 = P0.R[0]
    entry = P0.logmag[0]

    def start(size):
        return _Paths.replicate(r0, size, entry, P0.angle[0])

    def propagate(P, gen):
        for k in range(k0, 0, -1):
            _near_gaussian_step(circuit, k, lam, P, gen)

    mean, stderr = _run_sampled(n, start, propagate, circuit, rng, workers, log_bound)
    return EstimateResult(
        value=mean,
        stderr=stderr,
        samples=n,
        algorithm=NEAR_GAUSSIAN,
        declared_bias=total.bias,
        oracle_spec=total,
        layer_specs=tuple(specs),
        deterministic_steps=ndet,
        threshold=lam,
        epsilon=epsilon,
        delta=delta,
    )


@dataclass(frozen=True)
class EstimatorChoice:
    algorithm: str
    rationale: str
    coefficients: dict


def select_estimator(circuit: Circuit, r, epsilon: float, M: float) -> EstimatorChoice:
    """Near-Gaussian when every layer meets its threshold, otherwise adaptive."""
    from .regimes import circuit_coefficients  # local import: regimes depends on this module

    coeffs = circuit_coefficients(circuit, M, epsilon)
    if M > 0 and not near_gaussian_violations(circuit, epsilon, M):
        return EstimatorChoice(NEAR_GAUSSIAN, "all cubicities lie below the near-Gaussian threshold", coeffs)
    if M == 0:
        return EstimatorChoice(ADAPTIVE, "M = 0: no curvature budget, so every delta step is exact and the adaptive walk is deterministic", coeffs)
    return EstimatorChoice(ADAPTIVE, "near-Gaussian threshold violated; adaptive estimator is the general fallback", coeffs)


def estimate_char(circuit: Circuit, r, epsilon: float, delta: float, M: float | None = None, rng=None, *,
                  algorithm: str = "auto", workers: int = 1, max_samples: int = DEFAULT_MAX_SAMPLES) -> EstimateResult:
    """Dispatch to one of the three estimators."""
    if algorithm == "auto":
        if M is None:
            raise ValueError("automatic selection needs a curvature bound M")
        algorithm = select_estimator(circuit, r, epsilon, M).algorithm
    if algorithm == UNBIASED:
        return estimate_char_unbiased(circuit, r, epsilon, delta, rng, workers=workers, max_samples=max_samples)
    if M is None:
        raise ValueError(f"the {algorithm} estimator needs a curvature bound M")
    if algorithm == ADAPTIVE:
        return estimate_char_adaptive(circuit, r, epsilon, delta, M, rng, workers=workers, max_samples=max_samples)
    if algorithm == NEAR_GAUSSIAN:
        return estimate_char_near_gaussian(circuit, r, epsilon, delta, M, rng, workers=workers, max_samples=max_samples)
    raise ValueError(f"unknown algorithm {algorithm!r}; choose from auto, {', '.join(ALGORITHMS)}")


# --------------------------------------------------------------------------
# Batched propagation from many starting points (used by overlap estimation)


def propagate_points(circuit: Circuit, R0: np.ndarray, tau: float, gen) -> tuple[np.ndarray, np.ndarray]:
    """One adaptive path per starting point; returns ``(log_values, deterministic_steps)``.

    Each path walks with the delta branch while ``|gamma q1| < tau`` and is
    sampled exactly from its first layer above the threshold.
    """
    R0 = np.atleast_2d(np.asarray(R0, dtype=float))
    n = R0.shape[0]
    P = _Paths(R0.copy(), np.zeros(n), np.zeros(n))
    switched = np.zeros(n, dtype=bool)
    plans = {}
    for k in range(circuit.L, 0, -1):
        layer = circuit.layers[k - 1]
        gq = np.abs(layer.cubic.gamma * P.R[:, 0])
        det = ~switched & ((gq == 0.0) | (gq < tau))
        new = ~switched & ~det
        idx = np.nonzero(det)[0]
        if idx.size:
            _deterministic_step(layer, P, idx)
        idx = np.nonzero(new)[0]
        if idx.size:
            P.logmag[idx] += _entry_log(layer, P.R[idx, 0])
            switched |= new
        idx = np.nonzero(switched)[0]
        if idx.size:
            if k not in plans:
                plans[k] = _layer_plan(circuit, k)
            _exact_step(circuit, k, plans[k], P, idx, gen)
    logv = P.logmag + 1j * P.angle + log_input_char(circuit.input, P.R)
    return logv, P.ndet


def adaptive_magnitude_bound(circuit: Circuit, tau: float) -> float:
    """Upper bound on a path weight under :func:`propagate_points` at threshold ``tau``.

    A path that switches at layer ``k`` has entry factor at most
    ``1/sqrt(24 pi tau)`` and then the exact-mode magnitudes of layers ``k..1``.
    """
    if circuit.L == 0:
        return 1.0
    if tau <= 0:
        return math.inf
    best = 1.0
    entry = max(1.0, 1.0 / math.sqrt(CUBIC_SCALE * tau))
    for k0 in range(circuit.L, 0, -1):
        if circuit.layers[k0 - 1].cubic.gamma == 0.0:
            continue
        prod = entry
        for k in range(k0, 0, -1):
            prod *= _layer_plan(circuit, k).magnitude
        best = max(best, prod)
    return best


def trace_path(circuit: Circuit, r, tau: float = 0.0, rng=None) -> list[PathRecord]:
    """Per-layer record of a single adaptive path (diagnostic)."""
    r = as_point(r, circuit.m)
    gen = _normalize_rng(rng).generator()
    P = _Paths.replicate(r, 1)
    switched = False
    records = [PathRecord(circuit.L + 1, P.R[0].copy(), 1.0 + 0j, "start")]
    for k in range(circuit.L, 0, -1):
        layer = circuit.layers[k - 1]
        gq = abs(layer.cubic.gamma * P.R[0, 0])
        if not switched and (gq == 0.0 or gq < tau):
            _deterministic_step(layer, P, slice(None))
            branch = "deterministic-phase"
        else:
            if not switched:
                P.logmag[0] += float(_entry_log(layer, P.R[:1, 0])[0])
                switched = True
            _exact_step(circuit, k, _layer_plan(circuit, k), P, slice(None), gen)
            branch = "sampled"
        weight = complex(np.exp(P.logmag[0] + 1j * P.angle[0]))
        records.append(PathRecord(k, P.R[0].copy(), weight, branch))
    return records


def workers_from_env(default: int = 1) -> int:
    try:
        return max(1, int(os.environ.get("DISPPROP_WORKERS", default)))
    except ValueError:
        return default
