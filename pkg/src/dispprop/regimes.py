"""Contraction coefficients, regime predicates and analytic bounds.

For a circuit with uniform thermal loss ``(eta, nbar)``, write
``nu = (1/2 + nbar)(1 - eta)``.  The three per-layer growth factors are

* ``c1 = Gamma(1/4) / (sigma_min eta^{1/4} sqrt(24 pi gamma_min) nu^{1/4})``
* ``c2 = Gamma(1/4) / (sigma_inv_min eta^{1/2} sqrt(24 pi gamma_min) nu^{1/4})``
* ``d_eps = sqrt(M/eps) exp(-nu eps^2 / (36 M^2 gamma_max^2))``

with ``sigma = |S_{q1,p1}|`` and ``sigma_inv = |(S^{-1})_{q1,p1}|`` of every
layer's Gaussian.  Values below one mark classically easy regimes.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .channels import CUBIC_SCALE, Circuit, ThermalLoss
from .sampling import GAMMA_QUARTER

REGIMES = ("trivial-concentration", "efficient-c2", "efficient-shallow", "efficient-near-gaussian", "unclassified")
DEPTH_CONSTANT = 1.0
SHALLOW_CONSTANT = 1.0


class BoundaryRegimeError(ValueError):
    """Noise parameters outside the open interval where the coefficients are defined."""


class MomentError(ValueError):
    pass


class GridError(ValueError):
    pass


def _nu(eta: float, nbar: float) -> float:
    if not 0.0 < eta < 1.0:
        raise BoundaryRegimeError(
            f"transmissivity {eta} is outside (0, 1): eta = 1 is noiseless and eta -> 0 is full loss"
        )
    if nbar < 0:
        raise ValueError(f"thermal occupation must be >= 0, got {nbar}")
    return (0.5 + nbar) * (1.0 - eta)


def c1_value(eta: float, nbar: float, gamma_min: float, sigma_min: float) -> float:
    nu = _nu(eta, nbar)
    if gamma_min <= 0 or sigma_min <= 0:
        return math.inf
    return GAMMA_QUARTER / (sigma_min * eta**0.25 * math.sqrt(CUBIC_SCALE * gamma_min) * nu**0.25)


def c2_value(eta: float, nbar: float, gamma_min: float, sigma_inv_min: float) -> float:
    nu = _nu(eta, nbar)
    if gamma_min <= 0 or sigma_inv_min <= 0:
        return math.inf
    return GAMMA_QUARTER / (sigma_inv_min * math.sqrt(eta) * math.sqrt(CUBIC_SCALE * gamma_min) * nu**0.25)


def c2_value_grouped(eta: float, nbar: float, gamma_min: float, sigma_inv_min: float) -> float:
    """Same coefficient with ``eta`` moved under the root: ``sqrt(24 pi eta gamma)``."""
    nu = _nu(eta, nbar)
    if gamma_min <= 0 or sigma_inv_min <= 0:
        return math.inf
    return GAMMA_QUARTER / (sigma_inv_min * math.sqrt(CUBIC_SCALE * eta * gamma_min) * nu**0.25)


def d_eps_value(eta: float, nbar: float, gamma_max: float, M: float, epsilon: float) -> float:
    nu = _nu(eta, nbar)
    if M <= 0 or epsilon <= 0:
        raise ValueError("M and epsilon must be positive")
    if gamma_max == 0:
        return 0.0
    return math.sqrt(M / epsilon) * math.exp(-nu * epsilon**2 / (36.0 * M**2 * gamma_max**2))


def d_eps_oracle_form(eta: float, nbar: float, gamma_max: float, M: float, epsilon: float) -> float:
    """Per-layer oracle magnitude ``(1/2) sqrt(M/eps) exp(...)``, i.e. ``d_eps / 2``.

    The factor of two relative to :func:`d_eps_value` is reported, not reconciled.
    """
    return 0.5 * d_eps_value(eta, nbar, gamma_max, M, epsilon)


@dataclass(frozen=True)
class ContractionReport:
    c1: float
    c2: float
    d_eps: float
    gamma_min: float
    gamma_max: float
    sigma_min: float
    sigma_inv_min: float
    M: float
    epsilon: float
    eta: float
    nbar: float
    regime: str = "unclassified"
    justification: str = ""
    d_eps_oracle: float = 0.0
    notes: tuple = ()

    def to_dict(self) -> dict:
        out = asdict(self)
        out["notes"] = list(self.notes)
        return {k: (None if isinstance(v, float) and math.isinf(v) else v) for k, v in out.items()}


def uniform_noise(circuit: Circuit) -> ThermalLoss:
    losses = {(layer.loss.eta, layer.loss.nbar) for layer in circuit.layers}
    if len(losses) != 1:
        raise ValueError(f"contraction coefficients need identical thermal loss in every layer, found {sorted(losses)}")
    return circuit.layers[0].loss


def contraction_coefficients(circuit: Circuit, M: float, epsilon: float, *, k: int = 1) -> ContractionReport:
    """Evaluate the three coefficients for ``circuit`` and attach its regime tag."""
    if circuit.L == 0:
        raise ValueError("a circuit without layers has no contraction coefficients")
    loss = uniform_noise(circuit)
    _nu(loss.eta, loss.nbar)
    gammas = np.abs(circuit.gammas)
    sigmas = [layer.gaussian.coherence() for layer in circuit.layers]
    sigmas_inv = [layer.gaussian.inverse_coherence() for layer in circuit.layers]
    g_min, g_max = float(gammas.min()), float(gammas.max())
    notes = []
    if g_min == 0:
        notes.append("gamma_min = 0: c1 and c2 are infinite (a Gaussian layer gives no contraction)")
    s_min, si_min = float(min(sigmas)), float(min(sigmas_inv))
    if s_min == 0:
        notes.append("sigma_min = 0: c1 is infinite")
    if si_min == 0:
        notes.append("sigma_inv_min = 0: c2 is infinite")
    report = ContractionReport(
        c1=c1_value(loss.eta, loss.nbar, g_min, s_min),
        c2=c2_value(loss.eta, loss.nbar, g_min, si_min),
        d_eps=d_eps_value(loss.eta, loss.nbar, g_max, M, epsilon),
        gamma_min=g_min,
        gamma_max=g_max,
        sigma_min=s_min,
        sigma_inv_min=si_min,
        M=float(M),
        epsilon=float(epsilon),
        eta=loss.eta,
        nbar=loss.nbar,
        d_eps_oracle=d_eps_oracle_form(loss.eta, loss.nbar, g_max, M, epsilon),
        notes=tuple(notes),
    )
    tag, why = classify_regime(report, circuit.L, circuit.m, k)
    return _with_regime(report, tag, why)


def _with_regime(report: ContractionReport, tag: str, why: str) -> ContractionReport:
    data = asdict(report)
    data.update(regime=tag, justification=why, notes=report.notes)
    return ContractionReport(**data)


def classify_regime(report: ContractionReport, L: int, m: int, k: int = 1, *,
                    depth_constant: float = DEPTH_CONSTANT, shallow_constant: float = SHALLOW_CONSTANT) -> tuple[str, str]:
    """First matching regime predicate.

    Concentration needs ``c1 < 1`` and depth ``L >= depth_constant * m``.
    Shallow means ``L <= shallow_constant * max(1, ln m)``.  These constants
    stand in for unspecified big-O constants; the tag reports the predicate
    that fired, not a proof.
    """
    if report.c1 < 1 and L >= depth_constant * m:
        return "trivial-concentration", (
            f"c1 = {report.c1:.4g} < 1 and L = {L} >= {depth_constant:g} m = {depth_constant * m:g}: "
            "output expectation values concentrate exponentially in m"
        )
    if report.c2 < 1:
        return "efficient-c2", f"c2 = {report.c2:.4g} < 1: sampling cost stays polynomial for local {k}-mode observables"
    if L <= shallow_constant * max(1.0, math.log(m)):
        return "efficient-shallow", f"L = {L} <= {shallow_constant:g} max(1, ln m) = {shallow_constant * max(1.0, math.log(m)):.3g}"
    if report.d_eps < 1:
        return "efficient-near-gaussian", f"d_eps = {report.d_eps:.4g} < 1 at eps = {report.epsilon:g}, M = {report.M:g}"
    return "unclassified", (
        f"no predicate holds (c1 = {report.c1:.4g}, c2 = {report.c2:.4g}, d_eps = {report.d_eps:.4g}, L = {L}, m = {m})"
    )


def circuit_coefficients(circuit: Circuit, M: float, epsilon: float) -> dict:
    """Best-effort coefficient summary that never raises (used for estimator dispatch)."""
    try:
        rep = contraction_coefficients(circuit, M, epsilon)
    except (ValueError, ZeroDivisionError) as exc:
        return {"available": False, "reason": str(exc)}
    return {"available": True, "c1": rep.c1, "c2": rep.c2, "d_eps": rep.d_eps, "regime": rep.regime}


# --------------------------------------------------------------------------
# Concentration and overlap decay


@dataclass(frozen=True)
class ConcentrationBound:
    bound: float
    log_bound: float
    rigorous: bool
    note: str = ""


def _concentration_terms(circuit: Circuit):
    if circuit.L == 0:
        raise ValueError("concentration bound needs at least one layer")
    loss = uniform_noise(circuit)
    nu = _nu(loss.eta, loss.nbar)
    rep = contraction_coefficients(circuit, 1.0, 1.0)
    sigma_t = circuit.layers[-1].gaussian.coherence()
    return loss, nu, rep.c1, sigma_t


def concentration_bound(circuit: Circuit, trace_norm_bound: float = 1.0) -> ConcentrationBound:
    """``2^m nu^{-1/2} / (sqrt2 sigma_t sqrt(eta)) c1^{L-1} ||O||_1``, evaluated in log space.

    ``sigma_t`` is the coherence of the last layer's Gaussian.
    """
    if trace_norm_bound < 0:
        raise ValueError("trace-norm bound must be non-negative")
    loss, nu, c1, sigma_t = _concentration_terms(circuit)
    rigorous = circuit.input.kind == "vacuum"
    note = ""
    if not rigorous:
        note = f"input is {circuit.input.kind}, not vacuum: bound is not covered by the theorem's hypothesis"
        warnings.warn(note, RuntimeWarning, stacklevel=2)
    if trace_norm_bound == 0:
        return ConcentrationBound(0.0, -math.inf, rigorous, note)
    if sigma_t == 0 or math.isinf(c1):
        return ConcentrationBound(math.inf, math.inf, rigorous, note or "zero coherence or cubicity: bound is vacuous")
    log_b = (
        circuit.m * math.log(2.0)
        - 0.5 * math.log(nu)
        - 0.5 * math.log(2.0)
        - math.log(sigma_t)
        - 0.5 * math.log(loss.eta)
        + (circuit.L - 1) * math.log(c1)
        + math.log(trace_norm_bound)
    )
    bound = math.exp(log_b) if log_b < 700 else math.inf
    return ConcentrationBound(bound, log_b, rigorous, note)


def concentration_bound_direct(circuit: Circuit, trace_norm_bound: float = 1.0) -> float:
    """Direct-space evaluation of the same product; overflows where the log form does not."""
    loss, nu, c1, sigma_t = _concentration_terms(circuit)
    return 2.0**circuit.m / math.sqrt(nu) / (math.sqrt(2.0) * sigma_t * math.sqrt(loss.eta)) * c1 ** (circuit.L - 1) * trace_norm_bound


@dataclass(frozen=True)
class PurityBound:
    value: float
    tau: float
    optimized_value: float
    optimized_tau: float
    vacuous: bool


def _purity_value(m: int, p: float, tau: float) -> float:
    if tau == 0:
        poly = 0.0 if m > 0 else 1.0
    else:
        poly = math.exp(m * math.log(tau) - math.lgamma(m + 1))
    return math.sqrt(poly + math.exp(-2.0 * p * tau))


def purity_overlap_bound(m: int, nbar: float, eta: float, tau: float | None = None) -> PurityBound:
    """Bound ``sqrt(tau^m/m! + exp(-2 p tau))`` on ``|Tr[Lambda^{(x)m}(rho) sigma]|``, with ``p = nbar (1 - eta)``.

    ``tau`` defaults to ``0.9 m / e``; both the requested and the default value are returned.
    """
    if m < 1:
        raise ValueError("mode count must be >= 1")
    if tau is not None and tau < 0:
        raise ValueError("tau must be >= 0")
    p = nbar * (1.0 - eta)
    if p < 0:
        raise ValueError("nbar (1 - eta) must be >= 0")
    tau_opt = 0.9 * m / math.e
    tau = tau_opt if tau is None else float(tau)
    value = _purity_value(m, p, tau)
    opt = _purity_value(m, p, tau_opt)
    return PurityBound(value, tau, opt, tau_opt, vacuous=(p == 0 or value >= 1.0))


# --------------------------------------------------------------------------
# Curvature bound


def _check_moments(moments) -> tuple[float, float, float, float]:
    mom = tuple(float(x) for x in moments)
    if len(mom) != 4:
        raise MomentError(f"need the first four moments of q1, got {len(mom)} values")
    m1, m2, m3, m4 = mom
    tol = 1e-9 * max(1.0, abs(m4))
    if m2 < 0 or m4 < 0:
        raise MomentError("even moments must be non-negative")
    if m1 * m1 > m2 + tol or m2 * m2 > m4 + tol:
        raise MomentError("moments violate <q>^2 <= <q^2> or <q^2>^2 <= <q^4>")
    return mom


def curvature_envelope(moments, loss: ThermalLoss, q, p) -> np.ndarray:
    """Pointwise bound on ``|d^2/dp1^2 chi|`` at ``r = (q, p, ...)`` after the loss.

    ``moments`` are ``<q1>, ..., <q1^4>`` of the state entering the loss.  With
    ``X = q1 - sqrt(eta) q`` and ``c = 2 nu`` the bound is
    ``exp(-nu (q^2+p^2)) (|c^2 p^2 - c| + 2 c |p| sqrt(eta <X^2>) + eta sqrt<X^4>)``.
    """
    m1, m2, m3, m4 = _check_moments(moments)
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    nu = loss.nu
    c = 2.0 * nu
    s = math.sqrt(loss.eta) * q
    x2 = np.maximum(m2 - 2 * s * m1 + s * s, 0.0)
    x4 = np.maximum(m4 - 4 * s * m3 + 6 * s * s * m2 - 4 * s**3 * m1 + s**4, 0.0)
    poly = np.abs(c * c * p * p - c) + 2 * c * np.abs(p) * math.sqrt(loss.eta) * np.sqrt(x2) + loss.eta * np.sqrt(x4)
    return np.exp(-nu * (q * q + p * p)) * poly


def _radial_tail(moments, loss: ThermalLoss, radius: float) -> float:
    """Sup of a rotation-invariant majorant of the envelope over ``|r| >= radius``."""
    nu = loss.nu
    if nu == 0:
        return math.inf
    m1, m2, m3, m4 = _check_moments(moments)
    c = 2 * nu
    se = math.sqrt(loss.eta)
    a2, a4 = math.sqrt(m2), m4**0.25
    rho = radius + np.linspace(0.0, 1.0, 20001) ** 2 * (radius + 40.0 / math.sqrt(nu))
    env = np.exp(-nu * rho * rho) * (c * c * rho * rho + c + 2 * c * rho * se * (a2 + se * rho) + loss.eta * (a4 + se * rho) ** 2)
    # The majorant is eventually decreasing; sampling it densely up to where
    # exp(-nu rho^2) < e^{-1600} captures its maximum.
    return float(env.max())


@dataclass(frozen=True)
class CurvatureGrid:
    """Rectangle ``[-radius, radius]^2`` sampled with ``points`` per side."""

    radius: float | None = None
    points: int = 201

    def resolve(self, loss: ThermalLoss) -> tuple[float, int]:
        if self.radius is not None:
            return float(self.radius), self.points
        if loss.nu == 0:
            return 6.0, self.points
        return float(min(60.0, max(4.0, math.sqrt(16.0 / loss.nu)))), self.points


def curvature_bound(moments, loss: ThermalLoss, r=None, *, grid: CurvatureGrid | None = None) -> float:
    """Bound ``M`` on the p1-curvature of the characteristic function after ``loss``.

    With ``r`` given, returns the envelope at that point.  Otherwise returns
    the sup over the grid (refined by local maximisation) combined with an
    analytic majorant outside it.  Without damping (``eta = 1``) the majorant
    is unbounded, so only an explicit ``grid`` yields a finite value.
    """
    _check_moments(moments)
    if r is not None:
        r = np.asarray(r, dtype=float)
        return float(curvature_envelope(moments, loss, r[0], r[1]))
    explicit = grid is not None
    radius, n = (grid or CurvatureGrid()).resolve(loss)
    axis = np.linspace(-radius, radius, n)
    Q, P = np.meshgrid(axis, axis, indexing="ij")
    F = curvature_envelope(moments, loss, Q, P)
    best = float(F.max())
    flat = np.argsort(F, axis=None)[-5:]
    for i in flat:
        x0 = np.array([Q.flat[i], P.flat[i]])
        res = minimize(lambda x: -float(curvature_envelope(moments, loss, x[0], x[1])), x0,
                       method="L-BFGS-B", bounds=[(-radius, radius)] * 2)
        best = max(best, -float(res.fun))
    if explicit:
        return best
    tail = _radial_tail(moments, loss, radius)
    return max(best, tail)


def circuit_curvature_bound(circuit: Circuit, D: int = 60) -> float:
    """Max of :func:`curvature_bound` over layers, with moments from the Fock oracle (m <= 2)."""
    from . import fock_oracle

    _, before = fock_oracle.run_circuit(circuit, D, keep=True)
    best = 0.0
    for state, layer in zip(before, circuit.layers):
        mom = fock_oracle.observable_moments(state, 0, max_order=4)["q"]
        best = max(best, curvature_bound(mom[:4], layer.loss))
    return best


# --------------------------------------------------------------------------
# Phase diagrams


_AXES = ("eta", "nbar", "gamma", "sigma", "sigma_inv", "resource", "M", "epsilon")
_COEFFS = ("c1", "c2", "d_eps")


@dataclass(frozen=True)
class AxisSpec:
    name: str
    start: float
    stop: float
    num: int = 50
    scale: str = "linear"

    def values(self) -> np.ndarray:
        if self.name not in _AXES:
            raise GridError(f"unknown axis {self.name!r}; choose from {', '.join(_AXES)}")
        if self.num < 1:
            raise GridError("an axis needs at least one point")
        if self.num > 1 and self.start == self.stop:
            raise GridError(f"axis {self.name!r} has zero span")
        if self.scale == "log":
            if self.start <= 0 or self.stop <= 0:
                raise GridError("log-scaled axis needs positive bounds")
            return np.geomspace(self.start, self.stop, self.num)
        if self.scale != "linear":
            raise GridError(f"unknown axis scale {self.scale!r}")
        return np.linspace(self.start, self.stop, self.num)


DEFAULT_FIXED = {"eta": 0.5, "nbar": 0.0, "gamma": 1.0, "sigma": 1.0, "sigma_inv": 1.0, "M": 1.0, "epsilon": 0.1}


def coefficient_at(coefficient: str, params: dict) -> float:
    """Evaluate one coefficient; ``resource`` replaces ``sqrt(gamma) * sigma`` (or ``sigma_inv``)."""
    p = dict(DEFAULT_FIXED)
    p.update(params)
    if coefficient == "c1":
        if "resource" in params:
            p["gamma"], p["sigma"] = 1.0, p["resource"]
        return c1_value(p["eta"], p["nbar"], p["gamma"], p["sigma"])
    if coefficient == "c2":
        if "resource" in params:
            p["gamma"], p["sigma_inv"] = 1.0, p["resource"]
        return c2_value(p["eta"], p["nbar"], p["gamma"], p["sigma_inv"])
    if coefficient == "d_eps":
        if "resource" in params:
            p["gamma"] = p["resource"]
        return d_eps_value(p["eta"], p["nbar"], p["gamma"], p["M"], p["epsilon"])
    raise GridError(f"unknown coefficient {coefficient!r}; choose from {', '.join(_COEFFS)}")


@dataclass(frozen=True)
class PhaseGrid:
    coefficient: str
    axis1: str
    axis2: str
    values1: np.ndarray
    values2: np.ndarray
    values: np.ndarray  # shape (len(values1), len(values2))
    contour: list = field(default_factory=list)  # (axis1, axis2) points where the coefficient crosses 1
    fixed: dict = field(default_factory=dict)

    def crossings_per_row(self) -> list[int]:
        counts = []
        for row in self.values:
            s = np.sign(row - 1.0)
            counts.append(int(np.count_nonzero(s[1:] * s[:-1] < 0) + np.count_nonzero(s == 0)))
        return counts

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([self.axis1, self.axis2, self.coefficient])
        for i, a in enumerate(self.values1):
            for j, b in enumerate(self.values2):
                w.writerow([repr(float(a)), repr(float(b)), repr(float(self.values[i, j]))])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {
            "coefficient": self.coefficient,
            "axis1": {"name": self.axis1, "values": self.values1.tolist()},
            "axis2": {"name": self.axis2, "values": self.values2.tolist()},
            "values": [[None if not math.isfinite(v) else v for v in row] for row in self.values.tolist()],
            "contour": [list(pt) for pt in self.contour],
            "fixed": self.fixed,
        }


def _row_crossings(a: float, bs: np.ndarray, row: np.ndarray) -> list[tuple[float, float]]:
    pts = []
    f = row - 1.0
    for j in range(len(bs) - 1):
        f0, f1 = f[j], f[j + 1]
        if not (np.isfinite(f0) and np.isfinite(f1)):
            continue
        if f0 == 0.0:
            pts.append((float(a), float(bs[j])))
        elif f0 * f1 < 0:
            t = f0 / (f0 - f1)
            pts.append((float(a), float(bs[j] + t * (bs[j + 1] - bs[j]))))
    if len(bs) and f[-1] == 0.0:
        pts.append((float(a), float(bs[-1])))
    return pts


def phase_diagram_grid(axis1: AxisSpec, axis2: AxisSpec, coefficient: str = "c1", fixed: dict | None = None) -> PhaseGrid:
    """Evaluate ``coefficient`` on the ``axis1 x axis2`` grid.

    The contour lists, for every ``axis1`` value, the points along ``axis2``
    where the coefficient equals one (linear interpolation between cells).
    """
    if axis1.name == axis2.name:
        raise GridError("the two axes must differ")
    if coefficient not in _COEFFS:
        raise GridError(f"unknown coefficient {coefficient!r}; choose from {', '.join(_COEFFS)}")
    fixed = dict(fixed or {})
    v1, v2 = axis1.values(), axis2.values()
    vals = np.empty((v1.size, v2.size))
    for i, a in enumerate(v1):
        for j, b in enumerate(v2):
            vals[i, j] = coefficient_at(coefficient, {**fixed, axis1.name: float(a), axis2.name: float(b)})
    contour = []
    for i, a in enumerate(v1):
        contour += _row_crossings(a, v2, vals[i])
    return PhaseGrid(coefficient, axis1.name, axis2.name, v1, v2, vals, contour, fixed)


def write_grid(grid: PhaseGrid, path, fmt: str = "json") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if fmt == "csv":
            fh.write(grid.to_csv())
        else:
            json.dump(grid.to_json(), fh, indent=2)
