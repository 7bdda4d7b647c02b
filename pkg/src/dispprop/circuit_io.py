"""JSON circuit files.

Layout::

    {
      "version": 1,
      "modes": 1,
      "input": {"kind": "vacuum" | "coherent" | "thermal", "params": [...]},
      "layers": [
        {
          "gaussian": {"gates": [{"type": "rotation", "theta": 0.7}]}
                    | {"matrix": [[...]], "displacement": [...], "ordering": "interleaved" | "block"},
          "thermal": {"eta": 0.7, "nbar": 0.3},
          "cubic": {"gamma": 0.2}
        }
      ]
    }

Coherent amplitudes are numbers or ``[re, im]`` pairs.  A layer may give both
``gates`` and ``matrix``; the two must then agree to 1e-8.
"""

from __future__ import annotations

import json
from pathlib import Path

import jsonschema
import numpy as np

from .channels import Circuit, CubicGate, NoisyLayer, ThermalLoss
from .gates import compose_gates, gate_from_dict, gate_to_dict
from .phase_space import InputState, SymplecticGaussian, block_to_interleaved, validate_symplectic

SCHEMA_VERSION = 1
GATE_MATRIX_TOL = 1e-8

_NUMBER = {"type": "number"}
_COMPLEX = {"oneOf": [_NUMBER, {"type": "array", "items": _NUMBER, "minItems": 2, "maxItems": 2}]}

CIRCUIT_SCHEMA = {
    "type": "object",
    "required": ["modes", "input", "layers"],
    "additionalProperties": False,
    "properties": {
        "version": {"const": SCHEMA_VERSION},
        "modes": {"type": "integer", "minimum": 1},
        "input": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["vacuum", "coherent", "thermal"]},
                "params": {"type": "array", "items": _COMPLEX},
            },
        },
        "layers": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["gaussian", "thermal"],
                "additionalProperties": False,
                "properties": {
                    "gaussian": {
                        "type": "object",
                        "additionalProperties": False,
                        "properties": {
                            "gates": {"type": "array", "items": {"type": "object", "required": ["type"]}},
                            "matrix": {"type": "array", "items": {"type": "array", "items": _NUMBER}},
                            "displacement": {"type": "array", "items": _NUMBER},
                            "ordering": {"enum": ["interleaved", "block"]},
                        },
                        "anyOf": [{"required": ["gates"]}, {"required": ["matrix"]}],
                    },
                    "thermal": {
                        "type": "object",
                        "required": ["eta"],
                        "additionalProperties": False,
                        "properties": {"eta": _NUMBER, "nbar": _NUMBER},
                    },
                    "cubic": {
                        "type": "object",
                        "additionalProperties": False,
                        "properties": {"gamma": _NUMBER},
                    },
                },
            },
        },
    },
}


class CircuitFileError(ValueError):
    """Invalid circuit description; the message names the offending field."""


def _where(path) -> str:
    out = ""
    for part in path:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out or "<root>"


def _complex(value) -> complex:
    return complex(value[0], value[1]) if isinstance(value, list) else complex(value)


def _parse_input(spec: dict, m: int) -> InputState:
    kind = spec["kind"]
    params = spec.get("params", [])
    try:
        if kind == "vacuum":
            return InputState("vacuum", m)
        if kind == "coherent":
            return InputState("coherent", m, tuple(_complex(a) for a in params))
        return InputState("thermal", m, tuple(float(n) for n in params))
    except ValueError as exc:
        raise CircuitFileError(f"input: {exc}") from None


def _parse_gaussian(spec: dict, m: int, where: str):
    gates = None
    from_gates = None
    if "gates" in spec:
        try:
            gates = tuple(gate_from_dict(g) for g in spec["gates"])
            from_gates = compose_gates(gates, m)
        except ValueError as exc:
            raise CircuitFileError(f"{where}.gates: {exc}") from None
    if "matrix" not in spec:
        if "displacement" in spec:
            raise CircuitFileError(f"{where}.displacement: only allowed together with 'matrix'")
        return from_gates, gates
    S = np.array(spec["matrix"], dtype=float)
    if S.shape != (2 * m, 2 * m):
        raise CircuitFileError(f"{where}.matrix: expected shape {(2 * m, 2 * m)}, got {S.shape}")
    if spec.get("ordering", "interleaved") == "block":
        S = block_to_interleaved(S)
    d = np.array(spec.get("displacement", np.zeros(2 * m)), dtype=float)
    if d.shape != (2 * m,):
        raise CircuitFileError(f"{where}.displacement: expected {2 * m} entries, got {d.size}")
    if spec.get("ordering", "interleaved") == "block":
        d = np.concatenate([[d[j], d[m + j]] for j in range(m)])
    check = validate_symplectic(S)
    if not check.passed:
        raise CircuitFileError(f"{where}.matrix: not symplectic, max |S^T Omega S - Omega| = {check.deviation:.3e}")
    g = SymplecticGaussian(S, d)
    if from_gates is not None:
        dev = max(float(np.max(np.abs(from_gates.S - g.S))), float(np.max(np.abs(from_gates.d - g.d))))
        if dev > GATE_MATRIX_TOL:
            raise CircuitFileError(f"{where}: gate list and matrix disagree (max deviation {dev:.3e})")
    return g, gates


def circuit_from_dict(data: dict) -> Circuit:
    try:
        jsonschema.validate(data, CIRCUIT_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise CircuitFileError(f"{_where(exc.absolute_path)}: {exc.message}") from None
    m = data["modes"]
    inp = _parse_input(data["input"], m)
    layers = []
    for j, lay in enumerate(data["layers"]):
        where = f"layers[{j}]"
        g, gates = _parse_gaussian(lay["gaussian"], m, f"{where}.gaussian")
        try:
            loss = ThermalLoss(float(lay["thermal"]["eta"]), float(lay["thermal"].get("nbar", 0.0)))
        except ValueError as exc:
            raise CircuitFileError(f"{where}.thermal: {exc}") from None
        cubic = CubicGate(float(lay.get("cubic", {}).get("gamma", 0.0)))
        layers.append(NoisyLayer(g, loss, cubic, gates))
    return Circuit(m, layers, inp)


def parse_circuit_file(path) -> Circuit:
    """Read and validate a circuit file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CircuitFileError(f"cannot read {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CircuitFileError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return circuit_from_dict(data)


def circuit_to_dict(circuit: Circuit) -> dict:
    """Inverse of :func:`circuit_from_dict`; gate lists are kept when known."""
    inp = circuit.input
    if inp.kind == "coherent":
        params = [[a.real, a.imag] for a in inp.params]
    else:
        params = list(inp.params)
    layers = []
    for layer in circuit.layers:
        if layer.gates is not None:
            gauss = {"gates": [gate_to_dict(g) for g in layer.gates]}
        else:
            gauss = {"matrix": layer.gaussian.S.tolist(), "displacement": layer.gaussian.d.tolist(), "ordering": "interleaved"}
        layers.append({
            "gaussian": gauss,
            "thermal": {"eta": layer.loss.eta, "nbar": layer.loss.nbar},
            "cubic": {"gamma": layer.cubic.gamma},
        })
    return {"version": SCHEMA_VERSION, "modes": circuit.m, "input": {"kind": inp.kind, "params": params}, "layers": layers}


def write_circuit_file(circuit: Circuit, path) -> None:
    Path(path).write_text(json.dumps(circuit_to_dict(circuit), indent=2) + "\n", encoding="utf-8")
