"""Command-line front end: ``dispprop {estimate,contraction,phase-diagram,validate,bounds}``.

Every run writes one JSON record (or CSV where noted) carrying a schema
version, a hash of the full configuration and the provenance fields of the
result.  Exit codes: 0 success, 1 a validation check failed, 2 usage or input
error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .channels import Circuit
from .circuit_io import CircuitFileError, circuit_to_dict, parse_circuit_file
from .observables import (
    QUADRATURES,
    estimate_energy,
    estimate_projector_overlap,
    estimate_quadrature,
    gaussian_moment_bound,
)
from .propagation import ALGORITHMS, estimate_char, select_estimator
from .regimes import (
    AxisSpec,
    c1_value,
    c2_value,
    concentration_bound,
    contraction_coefficients,
    d_eps_value,
    phase_diagram_grid,
    purity_overlap_bound,
)
from .sampling import RngStream

RECORD_SCHEMA_VERSION = 1
EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("dispprop")


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    circuit: str | None = None
    observable: str = "displacement"
    point: tuple = ()
    alphas: tuple = ()
    mode: int = 0
    which: str = "q"
    epsilon: float = 0.05
    delta: float = 0.05
    M: float | str | None = None
    E: float | str | None = None
    seed: int = 0
    workers: int = 1
    algorithm: str = "auto"
    out: str | None = None
    format: str = "json"
    extra: dict = field(default_factory=dict)

    def validate(self) -> None:
        if not self.epsilon > 0:
            raise UsageError("--epsilon must be positive")
        if not 0 < self.delta < 1:
            raise UsageError("--delta must lie in (0, 1)")
        if self.workers < 1:
            raise UsageError("--workers must be >= 1")
        if self.algorithm not in ("auto",) + ALGORITHMS:
            raise UsageError(f"--algorithm must be auto or one of {ALGORITHMS}")

    def as_dict(self) -> dict:
        out = {}
        for k, v in self.__dict__.items():
            if isinstance(v, tuple):
                v = [[x.real, x.imag] if isinstance(x, complex) else x for x in v]
            out[k] = v
        return out


def _config_hash(config: RunConfig, circuit: Circuit | None) -> str:
    payload = {"config": config.as_dict(), "circuit": circuit_to_dict(circuit) if circuit else None}
    for key in ("out",):
        payload["config"].pop(key, None)
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def _resolve_M(config: RunConfig, circuit: Circuit) -> float | None:
    if config.M is None:
        return None
    if config.M != "auto":
        M = float(config.M)
        if M < 0:
            raise UsageError("--curvature-M must be non-negative")
        return M
    if circuit.L == 0 or not np.any(circuit.gammas):
        return 0.0
    raise UsageError(
        "--curvature-M auto is only available without cubic gates; for this circuit supply an explicit bound "
        "(e.g. from regimes.curvature_bound with known state moments)"
    )


def _resolve_E(config: RunConfig, circuit: Circuit, order: int) -> float:
    if config.E is None:
        raise UsageError("quadrature observables need --moment-E")
    if config.E != "auto":
        E = float(config.E)
        if not E > 0:
            raise UsageError("--moment-E must be positive")
        return E
    if np.any(circuit.gammas):
        raise UsageError("--moment-E auto is only available without cubic gates; supply an explicit moment bound")
    return gaussian_moment_bound(circuit, config.mode, order)


def _load(config: RunConfig) -> Circuit:
    if not config.circuit:
        raise UsageError(f"`{config.command}` needs a circuit file")
    return parse_circuit_file(config.circuit)


def _cmd_estimate(config: RunConfig) -> tuple[int, dict, Circuit]:
    circuit = _load(config)
    M = _resolve_M(config, circuit)
    rng = RngStream(config.seed)
    obs = config.observable
    extra = {}
    if obs == "displacement":
        point = config.point or (0.0,) * (2 * circuit.m)
        if len(point) != 2 * circuit.m:
            raise UsageError(f"--point needs {2 * circuit.m} coordinates")
        if config.algorithm == "auto":
            if M is None:
                raise UsageError("--algorithm auto needs --curvature-M")
            choice = select_estimator(circuit, point, config.epsilon, M)
            extra["selection"] = {"algorithm": choice.algorithm, "rationale": choice.rationale, "coefficients": choice.coefficients}
        res = estimate_char(circuit, point, config.epsilon, config.delta, M, rng,
                            algorithm=config.algorithm, workers=config.workers)
    elif obs == "projector":
        if M is None:
            raise UsageError("projector overlaps need --curvature-M")
        res = estimate_projector_overlap(circuit, config.alphas, config.epsilon, config.delta, M, rng, workers=config.workers)
    elif obs in ("quadrature", "energy"):
        which = config.which if obs == "quadrature" else "q2"
        if which not in QUADRATURES:
            raise UsageError(f"--which must be one of {QUADRATURES}")
        E = _resolve_E(config, circuit, 4 if which in ("q", "p") else 6)
        algo = "adaptive" if config.algorithm == "auto" else config.algorithm
        if obs == "quadrature":
            res = estimate_quadrature(circuit, config.mode, which, config.epsilon, config.delta, M, E, rng,
                                      algorithm=algo, workers=config.workers)
        else:
            res = estimate_energy(circuit, config.mode, config.epsilon, config.delta, M, E, rng,
                                  algorithm=algo, workers=config.workers)
        extra["moment_bound_E"] = E
    else:
        raise UsageError(f"unknown observable {obs!r}")
    record = res.to_dict()
    record.update(extra)
    record["curvature_M"] = M
    return EXIT_OK, record, circuit


def _cmd_contraction(config: RunConfig) -> tuple[int, dict, Circuit | None]:
    M = 1.0 if config.M in (None, "auto") else float(config.M)
    if config.circuit:
        circuit = _load(config)
        report = contraction_coefficients(circuit, M, config.epsilon)
        return EXIT_OK, report.to_dict(), circuit
    x = config.extra
    try:
        eta, nbar, gamma = float(x["eta"]), float(x["nbar"]), float(x["gamma"])
    except (KeyError, TypeError):
        raise UsageError("`contraction` needs a circuit file or --eta, --nbar and --gamma") from None
    sigma = float(x.get("sigma") or 1.0)
    sigma_inv = float(x.get("sigma_inv") or sigma)
    record = {
        "c1": c1_value(eta, nbar, gamma, sigma),
        "c2": c2_value(eta, nbar, gamma, sigma_inv),
        "d_eps": d_eps_value(eta, nbar, gamma, M, config.epsilon),
        "eta": eta, "nbar": nbar, "gamma": gamma, "sigma": sigma, "sigma_inv": sigma_inv,
        "M": M, "epsilon": config.epsilon,
    }
    return EXIT_OK, record, None


def _axis(text: str) -> AxisSpec:
    parts = text.split(":")
    if len(parts) not in (4, 5):
        raise UsageError(f"axis {text!r}: expected name:start:stop:num[:log]")
    try:
        return AxisSpec(parts[0], float(parts[1]), float(parts[2]), int(parts[3]), parts[4] if len(parts) == 5 else "linear")
    except ValueError as exc:
        raise UsageError(f"axis {text!r}: {exc}") from None


def _cmd_phase_diagram(config: RunConfig) -> tuple[int, dict, None]:
    x = config.extra
    fixed = {}
    for item in x.get("fixed") or []:
        key, _, val = item.partition("=")
        if not val:
            raise UsageError(f"--fixed {item!r}: expected key=value")
        fixed[key] = float(val)
    grid = phase_diagram_grid(_axis(x["axis1"]), _axis(x["axis2"]), x.get("coefficient", "c1"), fixed)
    record = grid.to_json()
    record["crossings_per_row"] = grid.crossings_per_row()
    record["_csv"] = grid.to_csv()
    return EXIT_OK, record, None


def _check(name: str, passed: bool, margin: float, **info) -> dict:
    return {"check": name, "passed": bool(passed), "margin": float(margin), **info}


def _cmd_validate(config: RunConfig) -> tuple[int, dict, Circuit]:
    from . import fock_oracle
    from .regimes import circuit_curvature_bound, curvature_bound

    circuit = _load(config)
    if circuit.m > 2:
        raise UsageError("`validate` runs the Fock oracle and supports at most 2 modes")
    D = int(config.extra.get("cutoff") or (fock_oracle.DEFAULT_CUTOFF if circuit.m == 1 else 30))
    checks = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", fock_oracle.TruncationWarning)
        state, before = fock_oracle.run_circuit(circuit, D, keep=True)
        trace = state.trace()
        checks.append(_check("oracle-trace", abs(trace - 1) < 1e-6, 1e-6 - abs(trace - 1), trace=trace))
        M = circuit_curvature_bound(circuit, D) if circuit.L else 0.0
        for j, (st, layer) in enumerate(zip(before, circuit.layers), start=1):
            if layer.loss.is_identity:
                continue
            mom = fock_oracle.observable_moments(st, 0, max_order=4)["q"][:4]
            pts = [(q, p) + (0.0,) * (2 * circuit.m - 2) for q in (-1.0, 0.0, 0.7) for p in (-1.0, 0.0, 0.5)]
            emp = fock_oracle.empirical_curvature(st, layer.loss, pts)
            bound = curvature_bound(mom, layer.loss)
            checks.append(_check(f"curvature-bound-layer-{j}", emp <= bound, bound - emp, empirical=emp, bound=bound))
    rng_points = np.random.default_rng(config.seed).uniform(-1.5, 1.5, size=(4, 2 * circuit.m))
    for i, r in enumerate(rng_points):
        truth = fock_oracle.char_function(state, r)
        res = estimate_char(circuit, r, config.epsilon, config.delta, M, RngStream(config.seed, i),
                            algorithm="adaptive", workers=config.workers)
        err = abs(res.value - truth)
        tol = config.epsilon + 3 * res.stderr
        checks.append(_check(f"char-adaptive-{i}", err <= tol, tol - err, point=r.tolist(),
                             estimate=[res.value.real, res.value.imag], oracle=[truth.real, truth.imag],
                             samples=res.samples))
    ok = all(c["passed"] for c in checks)
    return (EXIT_OK if ok else EXIT_CHECK_FAILED), {"checks": checks, "all_passed": ok, "curvature_M": M, "cutoff": D}, circuit


def _cmd_bounds(config: RunConfig) -> tuple[int, dict, Circuit]:
    circuit = _load(config)
    x = config.extra
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        cb = concentration_bound(circuit, float(x.get("trace_norm") or 1.0))
    loss = circuit.layers[0].loss
    tau = x.get("tau")
    pb = purity_overlap_bound(circuit.m, loss.nbar, loss.eta, None if tau is None else float(tau))
    record = {
        "concentration": {"bound": cb.bound, "log_bound": cb.log_bound, "rigorous": cb.rigorous, "note": cb.note},
        "purity_overlap": {"value": pb.value, "tau": pb.tau, "optimized_value": pb.optimized_value,
                           "optimized_tau": pb.optimized_tau, "vacuous": pb.vacuous},
        "warnings": [str(w.message) for w in caught],
    }
    return EXIT_OK, record, circuit


_COMMANDS = {
    "estimate": _cmd_estimate,
    "contraction": _cmd_contraction,
    "phase-diagram": _cmd_phase_diagram,
    "validate": _cmd_validate,
    "bounds": _cmd_bounds,
}


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else ("inf" if v > 0 else ("-inf" if v < 0 else "nan"))
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _json_safe(obj.tolist())
    return obj


def run(config: RunConfig) -> tuple[int, dict]:
    """Execute one command and return ``(exit_code, record)``; the record is also written to ``config.out``."""
    config.validate()
    start = time.perf_counter()
    code, result, circuit = _COMMANDS[config.command](config)
    csv_text = result.pop("_csv", None)
    record = {
        "schema_version": RECORD_SCHEMA_VERSION,
        "package_version": __version__,
        "command": config.command,
        "config_hash": _config_hash(config, circuit),
        "config": config.as_dict(),
        "result": _json_safe(result),
    }
    log.info("%s finished in %.3f s", config.command, time.perf_counter() - start)
    text = _render(record, config.format, csv_text)
    if config.out:
        with open(config.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code, record


def _render(record: dict, fmt: str, csv_text: str | None) -> str:
    if fmt == "json":
        return json.dumps(record, indent=2, sort_keys=True) + "\n"
    if csv_text is not None:
        return csv_text
    buf = io.StringIO()
    flat = {"schema_version": record["schema_version"], "command": record["command"], "config_hash": record["config_hash"]}
    for key, val in record["result"].items():
        flat[key] = json.dumps(val) if isinstance(val, (list, dict)) else val
    w = csv.DictWriter(buf, fieldnames=list(flat), lineterminator="\n")
    w.writeheader()
    w.writerow(flat)
    return buf.getvalue()


def _floats(text: str) -> tuple:
    try:
        return tuple(float(t) for t in text.replace(",", " ").split())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected numbers, got {text!r}") from None


def _complexes(values) -> tuple:
    out = []
    for v in values:
        try:
            out.append(complex(v.replace("i", "j")))
        except ValueError:
            raise UsageError(f"bad coherent amplitude {v!r}") from None
    return tuple(out)


def _bound_arg(text: str):
    if text == "auto":
        return "auto"
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'auto', got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--epsilon", type=float, default=0.05, help="target accuracy")
    common.add_argument("--delta", type=float, default=0.05, help="failure probability")
    common.add_argument("--curvature-M", dest="M", type=_bound_arg, default=None, help="curvature bound M or 'auto'")
    common.add_argument("--moment-E", dest="E", type=_bound_arg, default=None, help="moment bound E or 'auto'")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--algorithm", default="auto", choices=("auto",) + ALGORITHMS)
    common.add_argument("--out", default=None, help="output path (default: stdout)")
    common.add_argument("--format", default="json", choices=("json", "csv"))

    parser = argparse.ArgumentParser(prog="dispprop", description="Displacement-propagation estimates for noisy CV circuits.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", parents=[common], help="estimate an observable")
    p.add_argument("circuit")
    p.add_argument("--observable", default="displacement", choices=("displacement", "projector", "quadrature", "energy"))
    p.add_argument("--point", type=_floats, default=(), help="displacement point q1 p1 q2 p2 ...")
    p.add_argument("--alpha", action="append", default=[], help="coherent amplitude per projector mode, e.g. 0.5+0.2j")
    p.add_argument("--mode", type=int, default=0)
    p.add_argument("--which", default="q", choices=QUADRATURES)

    p = sub.add_parser("contraction", parents=[common], help="contraction coefficients")
    p.add_argument("circuit", nargs="?")
    for name in ("eta", "nbar", "gamma", "sigma", "sigma-inv"):
        p.add_argument(f"--{name}", type=float, default=None)

    p = sub.add_parser("phase-diagram", parents=[common], help="coefficient grid and its unit contour")
    p.add_argument("--coefficient", default="c1", choices=("c1", "c2", "d_eps"))
    p.add_argument("--axis1", required=True, help="name:start:stop:num[:log]")
    p.add_argument("--axis2", required=True, help="name:start:stop:num[:log]")
    p.add_argument("--fixed", action="append", default=[], help="key=value for parameters not on an axis")

    p = sub.add_parser("validate", parents=[common], help="compare estimators with the Fock oracle (m <= 2)")
    p.add_argument("circuit")
    p.add_argument("--cutoff", type=int, default=None)

    p = sub.add_parser("bounds", parents=[common], help="concentration and purity-overlap bounds")
    p.add_argument("circuit")
    p.add_argument("--trace-norm", type=float, default=1.0)
    p.add_argument("--tau", type=float, default=None)
    return parser


def _setup_logging() -> None:
    level = os.environ.get("DISPPROP_LOG", "WARNING").upper()
    if level.isdigit():
        num = int(level)
    else:
        num = getattr(logging, level, logging.WARNING)
    logging.basicConfig(level=num, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    known = {"command", "circuit", "observable", "point", "alpha", "mode", "which", "epsilon", "delta", "M", "E",
             "seed", "workers", "algorithm", "out", "format"}
    extra = {k: v for k, v in vars(args).items() if k not in known}
    try:
        config = RunConfig(
            command=args.command,
            circuit=getattr(args, "circuit", None),
            observable=getattr(args, "observable", "displacement"),
            point=tuple(getattr(args, "point", ()) or ()),
            alphas=_complexes(getattr(args, "alpha", []) or []),
            mode=getattr(args, "mode", 0),
            which=getattr(args, "which", "q"),
            epsilon=args.epsilon,
            delta=args.delta,
            M=args.M,
            E=args.E,
            seed=args.seed,
            workers=args.workers,
            algorithm=args.algorithm,
            out=args.out,
            format=args.format,
            extra=extra,
        )
        log.debug("config: %s", config)
        code, _ = run(config)
        return code
    except (UsageError, CircuitFileError) as exc:
        print(f"dispprop: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, RuntimeError, NotImplementedError) as exc:
        print(f"dispprop: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
