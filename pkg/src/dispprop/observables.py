"""Physical quantities from characteristic-function estimates.

* Overlap with a product of coherent projectors on the first ``k`` modes,
  ``Tr[rho (|a_1><a_1| x ... x I)] = 2^k E[ phase(chi_O(r)) conj(chi_rho(r)) ]``
  with ``r`` drawn from ``|chi_O|`` normalised (standard normal per coordinate
  of the ``k`` modes, the origin elsewhere).
* Quadrature moments from finite differences of ``chi`` along one axis:
  ``<q> ~ Re (chi(0, d) - 1)/(i d)`` and
  ``<q^2> ~ Re (2/d^2) [(1 - chi(0, d)) + (chi(0, d^2) - 1)/d]``;
  the momentum versions use ``chi(d, 0)`` with the opposite sign for ``<p>``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .channels import Circuit
from .phase_space import coherent, log_input_char
from .propagation import (
    ADAPTIVE,
    DEFAULT_MAX_SAMPLES,
    EstimateResult,
    _check_budget,
    _normalize_rng,
    adaptive_magnitude_bound,
    adaptive_threshold,
    estimate_char,
    propagate_points,
)
from .sampling import OracleSpec, RngStream, plan_samples

QUADRATURES = ("q", "p", "q2", "p2")


class InvalidObservableError(ValueError):
    pass


@dataclass(frozen=True)
class ObservableSpec:
    kind: str  # "projectors", "quadrature", "energy" or "displacement"
    alphas: tuple = ()
    mode: int = 0
    which: str = "q"
    step: float | None = None
    point: tuple = ()

    def validate(self, m: int) -> None:
        if self.kind == "projectors":
            if not 1 <= len(self.alphas) <= m:
                raise InvalidObservableError(f"need 1..{m} coherent amplitudes, got {len(self.alphas)}")
        elif self.kind in ("quadrature", "energy"):
            if not 0 <= self.mode < m:
                raise InvalidObservableError(f"mode {self.mode} out of range for {m} mode(s)")
            if self.kind == "quadrature" and self.which not in QUADRATURES:
                raise InvalidObservableError(f"quadrature must be one of {QUADRATURES}, got {self.which!r}")
            if self.step is not None and not self.step > 0:
                raise InvalidObservableError("finite-difference step must be positive")
        elif self.kind == "displacement":
            if len(self.point) != 2 * m:
                raise InvalidObservableError(f"displacement point needs {2 * m} coordinates")
        else:
            raise InvalidObservableError(f"unknown observable kind {self.kind!r}")


# --------------------------------------------------------------------------
# Coherent projectors


def projector_threshold(epsilon: float, k: int, M: float, L: int) -> float:
    """Inner deterministic threshold ``eps / (12 * 2^k * M * L)``."""
    return adaptive_threshold(epsilon / 2.0**k, M, L)


def estimate_projector_overlap(circuit: Circuit, alphas, epsilon: float, delta: float, M: float, rng=None, *,
                               workers: int = 1, max_samples: int = DEFAULT_MAX_SAMPLES) -> EstimateResult:
    """Monte Carlo estimate of the overlap with ``|a_1><a_1| x ... x |a_k><a_k| x I``.

    Every outer point is followed by one adaptive inner path.  Half of
    ``epsilon`` bounds the inner delta-branch bias, half the sampling error.
    The returned ``value`` is complex; its real part estimates the overlap.
    """
    alphas = tuple(complex(a) for a in alphas)
    k, m = len(alphas), circuit.m
    if not 1 <= k <= m:
        raise InvalidObservableError(f"need 1..{m} coherent amplitudes, got {k}")
    if M < 0:
        raise ValueError("curvature bound M must be non-negative")
    norm1 = 2.0**k
    tau = projector_threshold(epsilon, k, M, circuit.L) if circuit.L else math.inf
    bound = norm1 * adaptive_magnitude_bound(circuit, tau)
    n = plan_samples(bound, epsilon / 2.0, delta)
    _check_budget(n, max_samples, bound)
    bias = 0.0 if (M == 0 or circuit.L == 0) else norm1 * 6.0 * tau * M * circuit.L
    stream = _normalize_rng(rng)
    workers = max(1, int(workers))
    counts = [n // workers + (1 if w < n % workers else 0) for w in range(workers)]
    total, mean, m2 = 0, 0j, 0.0
    for w, cnt in enumerate(counts):
        gen = stream.child(w).generator()
        left = cnt
        while left > 0:
            size = min(1 << 16, left)
            R = np.zeros((size, 2 * m))
            R[:, : 2 * k] = gen.standard_normal((size, 2 * k))
            phase = _projector_phase(alphas, m, R)
            logv, _ = propagate_points(circuit, R, tau, gen)
            vals = norm1 * phase * np.conj(np.exp(logv))
            if np.max(np.abs(vals)) > bound * (1 + 1e-9):
                raise AssertionError("an overlap sample exceeded its declared magnitude")
            bm = complex(vals.mean())
            bm2 = float(np.sum(np.abs(vals - bm) ** 2))
            tot = total + size
            d = bm - mean
            mean = mean + d * size / tot
            m2 = m2 + bm2 + abs(d) ** 2 * total * size / tot
            total = tot
            left -= size
    stderr = math.sqrt(m2 / (total - 1) / total) if total > 1 else 0.0
    return EstimateResult(
        value=complex(mean),
        stderr=stderr,
        samples=n,
        algorithm=f"projector-overlap/{ADAPTIVE}",
        declared_bias=bias,
        oracle_spec=OracleSpec(bias, bound),
        threshold=tau,
        epsilon=epsilon,
        delta=delta,
    )


def _projector_phase(alphas, m: int, R: np.ndarray) -> np.ndarray:
    """Unit-modulus phase of the projector characteristic function on the first ``k`` modes."""
    k = len(alphas)
    return np.exp(1j * log_input_char(coherent(alphas), R[:, : 2 * k]).imag)


# --------------------------------------------------------------------------
# Quadratures


def first_moment_step(epsilon: float, E: float) -> float:
    return epsilon / (E + 1.0)


def second_moment_step(epsilon: float, E: float) -> float:
    """Step ``3 eps / (8E + 12)``: bias ``(8/3) d E`` plus ``4 d`` from the two inner estimates equals ``eps``."""
    return 3.0 * epsilon / (8.0 * E + 12.0)


def _axis_point(m: int, mode: int, which: str, t: float) -> np.ndarray:
    r = np.zeros(2 * m)
    if which in ("q", "q2"):
        r[2 * mode + 1] = t  # D(0, t) = exp(i t q)
    else:
        r[2 * mode] = t  # D(t, 0) = exp(-i t p)
    return r


def finite_difference_moment(chi_minus_one, which: str, step: float) -> float:
    """Finite-difference estimate from a callable returning ``chi(point) - 1`` along the axis parameter."""
    d = step
    if which == "q":
        return float(((chi_minus_one(d)) / (1j * d)).real)
    if which == "p":
        return float((-(chi_minus_one(d)) / (1j * d)).real)
    if which in ("q2", "p2"):
        return float((2.0 / d**2 * (-chi_minus_one(d) + chi_minus_one(d * d) / d)).real)
    raise InvalidObservableError(f"unknown quadrature {which!r}")


def finite_difference_bias_bound(which: str, step: float, fourth: float, sixth: float | None = None) -> float:
    """``d <x^4>`` for first moments, ``(2/3) d <x^6> + 2 d <x^4>`` for second moments."""
    if which in ("q", "p"):
        return step * fourth
    if sixth is None:
        raise ValueError("second-moment bias bound needs the sixth moment")
    return 2.0 / 3.0 * step * sixth + 2.0 * step * fourth


def estimate_quadrature(circuit: Circuit, mode: int, which: str, epsilon: float, delta: float, M: float | None,
                        E: float, rng=None, *, step: float | None = None, algorithm: str = ADAPTIVE,
                        workers: int = 1, max_samples: int = DEFAULT_MAX_SAMPLES) -> EstimateResult:
    """Estimate ``<q>``, ``<p>``, ``<q^2>`` or ``<p^2>`` of ``mode`` to accuracy ``epsilon``.

    ``E`` bounds the fourth (first moments) or sixth (second moments)
    quadrature moment of the output state.
    """
    ObservableSpec("quadrature", mode=mode, which=which, step=step).validate(circuit.m)
    if not E > 0:
        raise ValueError(f"moment bound E must be positive, got {E}")
    first = which in ("q", "p")
    limit = first_moment_step(epsilon, E) if first else second_moment_step(epsilon, E)
    d = limit if step is None else float(step)
    if d > limit * (1 + 1e-12):
        raise ValueError(f"step {d:g} exceeds the admissible {limit:g} for eps = {epsilon:g}, E = {E:g}")
    if M is None and (circuit.L == 0 or not np.any(circuit.gammas)):
        M = 0.0  # no cubic gate: every step is exact and M never enters
    stream = _normalize_rng(rng)
    precisions = [(d, d * d)] if first else [(d, d**3), (d * d, d**4)]
    results = {}
    for i, (t, prec) in enumerate(precisions):
        sub = RngStream(stream.seed, stream.stream, stream.path + (i,))
        results[t] = estimate_char(circuit, _axis_point(circuit.m, mode, which, t), prec, delta / len(precisions),
                                   M, sub, algorithm=algorithm, workers=workers, max_samples=max_samples)
    value = finite_difference_moment(lambda t: results[t].minus_one(), which, d)
    if first:
        scale = [1.0 / d]
        fd_bias = d * E
    else:
        scale = [2.0 / d**2, 2.0 / d**3]
        fd_bias = (8.0 / 3.0) * d * E
    parts = list(results.values())
    stderr = math.sqrt(sum((s * r.stderr) ** 2 for s, r in zip(scale, parts)))
    bias = fd_bias + sum(s * r.declared_bias for s, r in zip(scale, parts))
    mag = sum(s * r.oracle_spec.magnitude for s, r in zip(scale, parts))
    return EstimateResult(
        value=complex(value),
        stderr=stderr,
        samples=sum(r.samples for r in parts),
        algorithm=f"quadrature-{which}/{parts[0].algorithm}",
        declared_bias=bias,
        oracle_spec=OracleSpec(bias, mag),
        layer_specs=tuple(r.oracle_spec for r in parts),
        deterministic_steps=sum(r.deterministic_steps for r in parts),
        threshold=d,
        epsilon=epsilon,
        delta=delta,
    )


def estimate_energy(circuit: Circuit, mode: int, epsilon: float, delta: float, M: float | None, E: float, rng=None,
                    *, algorithm: str = ADAPTIVE, workers: int = 1, max_samples: int = DEFAULT_MAX_SAMPLES) -> EstimateResult:
    """``(<q^2> + <p^2>)/2``, equal to ``2<n> + 1`` in these units."""
    stream = _normalize_rng(rng)
    parts = []
    for i, which in enumerate(("q2", "p2")):
        sub = RngStream(stream.seed, stream.stream, stream.path + (10 + i,))
        parts.append(estimate_quadrature(circuit, mode, which, epsilon, delta / 2.0, M, E, sub,
                                         algorithm=algorithm, workers=workers, max_samples=max_samples))
    value = 0.5 * (parts[0].value.real + parts[1].value.real)
    bias = 0.5 * (parts[0].declared_bias + parts[1].declared_bias)
    return EstimateResult(
        value=complex(value),
        stderr=0.5 * math.hypot(parts[0].stderr, parts[1].stderr),
        samples=parts[0].samples + parts[1].samples,
        algorithm=f"energy/{parts[0].algorithm.split('/', 1)[1]}",
        declared_bias=bias,
        oracle_spec=OracleSpec(bias, 0.5 * (parts[0].oracle_spec.magnitude + parts[1].oracle_spec.magnitude)),
        layer_specs=(parts[0].oracle_spec, parts[1].oracle_spec),
        deterministic_steps=parts[0].deterministic_steps + parts[1].deterministic_steps,
        epsilon=epsilon,
        delta=delta,
    )


# --------------------------------------------------------------------------
# Analytic moments for Gaussian circuits


def gaussian_output_stats(circuit: Circuit) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of the output when no layer has a cubic gate.

    Covariance convention: vacuum has the identity matrix.
    """
    if np.any(circuit.gammas != 0):
        raise ValueError("output statistics are analytic only for circuits without cubic gates")
    m = circuit.m
    inp = circuit.input
    mean = np.zeros(2 * m)
    cov = np.eye(2 * m)
    if inp.kind == "coherent":
        a = np.asarray(inp.params, dtype=complex)
        mean[0::2], mean[1::2] = 2 * a.real, 2 * a.imag
    elif inp.kind == "thermal":
        cov = np.diag(np.repeat(2 * np.asarray(inp.params, dtype=float) + 1, 2))
    for layer in circuit.layers:
        g = layer.gaussian
        mean = g.S @ mean + g.d
        cov = g.S @ cov @ g.S.T
        eta, nbar = layer.loss.eta, layer.loss.nbar
        se = math.sqrt(eta)
        mean[:2] *= se
        cov[:2, :] *= se
        cov[:, :2] *= se
        cov[:2, :2] += (1 - eta) * (2 * nbar + 1) * np.eye(2)
    return mean, cov


def gaussian_moment_bound(circuit: Circuit, mode: int, order: int) -> float:
    """Largest raw moment of order ``order`` over the q and p quadratures of ``mode``."""
    mean, cov = gaussian_output_stats(circuit)
    out = 0.0
    for i in (2 * mode, 2 * mode + 1):
        out = max(out, float(norm(loc=mean[i], scale=math.sqrt(cov[i, i])).moment(order)))
    return out
