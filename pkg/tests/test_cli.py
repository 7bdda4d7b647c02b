import json
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from dispprop.channels import Circuit, NoisyLayer, ThermalLoss
from dispprop.circuit_io import CircuitFileError, circuit_to_dict, parse_circuit_file, write_circuit_file
from dispprop.cli import EXIT_CHECK_FAILED, EXIT_OK, EXIT_USAGE, main
from dispprop.gates import Rotation, Squeeze
from dispprop.phase_space import coherent

from oracle_values import C1_EXAMPLE

CIRCUITS = Path(__file__).resolve().parents[1] / "demos" / "circuits"


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, (json.loads(out) if out.strip().startswith("{") else out), err


def _write(tmp_path, data, name="c.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data) if not isinstance(data, str) else data)
    return path


# ----------------------------------------------------------------- circuit files

def test_minimal_file():
    c = parse_circuit_file(CIRCUITS / "vacuum_empty.json")
    assert c.m == 1 and c.L == 0 and c.input.kind == "vacuum"


def test_not_symplectic_reports_deviation():
    with pytest.raises(CircuitFileError, match=r"layers\[0\]\.gaussian\.matrix: not symplectic.*3\.000e\+00"):
        parse_circuit_file(CIRCUITS / "not_symplectic.json")


def test_round_trip(tmp_path):
    layers = [NoisyLayer.from_gates([Rotation(0.3), Squeeze(0.2, 0.1)], 1, ThermalLoss(0.8, 0.1), 0.05)]
    c = Circuit(1, layers * 2, coherent([0.3 - 0.1j]))
    write_circuit_file(c, tmp_path / "x.json")
    back = parse_circuit_file(tmp_path / "x.json")
    assert circuit_to_dict(back) == circuit_to_dict(c)
    np.testing.assert_allclose(back.layers[1].gaussian.S, c.layers[1].gaussian.S, atol=1e-15)


def test_block_ordering_matrix(tmp_path):
    # swap on two modes in block ordering (q1 q2 p1 p2)
    S = np.zeros((4, 4))
    S[0, 1] = S[1, 0] = S[2, 3] = S[3, 2] = 1
    data = {"modes": 2, "input": {"kind": "coherent", "params": [0.5, 0]},
            "layers": [{"gaussian": {"matrix": S.tolist(), "ordering": "block"}, "thermal": {"eta": 1.0}}]}
    c = parse_circuit_file(_write(tmp_path, data))
    assert c.layers[0].gaussian.S[0, 2] == 1 and c.layers[0].gaussian.S[1, 3] == 1


def test_gate_matrix_disagreement(tmp_path):
    data = {"modes": 1, "input": {"kind": "vacuum"},
            "layers": [{"gaussian": {"gates": [{"type": "rotation", "theta": 0.5}], "matrix": [[1, 0], [0, 1]]},
                        "thermal": {"eta": 0.5}}]}
    with pytest.raises(CircuitFileError, match="disagree"):
        parse_circuit_file(_write(tmp_path, data))


def test_schema_error_names_field(tmp_path):
    data = {"modes": 1, "input": {"kind": "vacuum"}, "layers": [{"gaussian": {"gates": []}, "thermal": {"nbar": 1}}]}
    with pytest.raises(CircuitFileError, match=r"layers\[0\]\.thermal"):
        parse_circuit_file(_write(tmp_path, data))


def test_bad_json_line_column(tmp_path):
    path = _write(tmp_path, '{\n  "modes": 1,\n  "input": }\n')
    with pytest.raises(CircuitFileError, match="line 3, column 12"):
        parse_circuit_file(path)


def test_bad_transmissivity(tmp_path):
    data = {"modes": 1, "input": {"kind": "vacuum"}, "layers": [{"gaussian": {"gates": []}, "thermal": {"eta": 1.5}}]}
    with pytest.raises(CircuitFileError, match="thermal"):
        parse_circuit_file(_write(tmp_path, data))


# ----------------------------------------------------------------- commands

def test_estimate_trivial_circuit(capsys):
    code, rec, _ = _run(capsys, "estimate", CIRCUITS / "vacuum_empty.json", "--point", "0 0",
                        "--curvature-M", "auto")
    assert code == EXIT_OK
    res = rec["result"]
    assert res["value"] == [1.0, 0.0] and res["stderr"] == 0.0
    assert rec["schema_version"] == 1 and len(rec["config_hash"]) == 64


def test_estimate_provenance_fields(capsys):
    code, rec, _ = _run(capsys, "estimate", CIRCUITS / "reference.json", "--point", "1 0.5",
                        "--curvature-M", "2.1475", "--epsilon", "0.1", "--seed", "3")
    assert code == EXIT_OK
    res = rec["result"]
    for key in ("value", "stderr", "samples", "algorithm", "declared_bias", "magnitude", "delta", "selection"):
        assert key in res, key
    assert res["selection"]["algorithm"] == res["algorithm"]
    assert rec["config"]["seed"] == 3


def test_estimate_deterministic(capsys, tmp_path):
    args = ["estimate", CIRCUITS / "reference.json", "--point", "1 0.5", "--curvature-M", "2.1475",
            "--algorithm", "unbiased", "--seed", "11"]
    _, first, _ = _run(capsys, *args)
    _, second, _ = _run(capsys, *args)
    assert first == second
    _, other, _ = _run(capsys, *args[:-1], "12")
    assert other["result"]["value"] != first["result"]["value"]
    assert other["config_hash"] != first["config_hash"]


def test_deterministic_for_fixed_worker_count(capsys):
    base = ["estimate", CIRCUITS / "reference.json", "--point", "1 0.5", "--curvature-M", "2.1475",
            "--algorithm", "unbiased", "--seed", "5", "--workers", "3"]
    _, a, _ = _run(capsys, *base)
    _, b, _ = _run(capsys, *base)
    assert a["result"] == b["result"] and a["config_hash"] == b["config_hash"]


def test_auto_M_refused_with_cubic(capsys):
    code, _, err = _run(capsys, "estimate", CIRCUITS / "reference.json", "--point", "1 0.5", "--curvature-M", "auto")
    assert code == EXIT_USAGE and "explicit bound" in err


def test_auto_needs_M(capsys):
    code, _, err = _run(capsys, "estimate", CIRCUITS / "reference.json", "--point", "1 0.5")
    assert code == EXIT_USAGE and "--curvature-M" in err


def test_wrong_point_length(capsys):
    code, _, err = _run(capsys, "estimate", CIRCUITS / "reference.json", "--point", "1 0.5 0",
                        "--curvature-M", "1")
    assert code == EXIT_USAGE and "2 coordinates" in err


def test_bad_file_exit_code(capsys, tmp_path):
    code, _, err = _run(capsys, "estimate", _write(tmp_path, "{"), "--curvature-M", "1")
    assert code == EXIT_USAGE and "line 1" in err
    code, _, err = _run(capsys, "estimate", CIRCUITS / "not_symplectic.json", "--curvature-M", "1")
    assert code == EXIT_USAGE and "not symplectic" in err


def test_bad_epsilon(capsys):
    code, _, err = _run(capsys, "estimate", CIRCUITS / "vacuum_empty.json", "--epsilon", "-1")
    assert code == EXIT_USAGE and "--epsilon" in err


def test_contraction_parameters(capsys):
    code, rec, _ = _run(capsys, "contraction", "--eta", "0.5", "--nbar", "1", "--gamma", "1", "--sigma", "1")
    assert code == EXIT_OK
    assert rec["result"]["c1"] == pytest.approx(C1_EXAMPLE, abs=5e-4)


def test_contraction_circuit(capsys):
    code, rec, _ = _run(capsys, "contraction", CIRCUITS / "reference.json", "--curvature-M", "2.1475")
    assert code == EXIT_OK and "c1" in rec["result"] and "c2" in rec["result"]


def test_contraction_missing_args(capsys):
    code, _, _ = _run(capsys, "contraction", "--eta", "0.5")
    assert code == EXIT_USAGE


def test_validate_reference_passes(capsys):
    code, rec, _ = _run(capsys, "validate", CIRCUITS / "reference.json", "--epsilon", "0.1")
    assert code == EXIT_OK and rec["result"]["all_passed"]
    names = [c["check"] for c in rec["result"]["checks"]]
    assert "oracle-trace" in names and "curvature-bound-layer-1" in names


def test_validate_failure_exit_code(capsys, monkeypatch):
    import dispprop.cli as cli

    real = cli.estimate_char

    def skewed(*a, **k):
        res = real(*a, **k)
        return type(res)(**{**res.__dict__, "value": res.value + 1.0})

    monkeypatch.setattr(cli, "estimate_char", skewed)
    code, rec, _ = _run(capsys, "validate", CIRCUITS / "reference.json", "--epsilon", "0.1")
    assert code == EXIT_CHECK_FAILED and not rec["result"]["all_passed"]


def test_phase_diagram_csv(capsys, tmp_path):
    out = tmp_path / "grid.csv"
    code, _, _ = _run(capsys, "phase-diagram", "--axis1", "eta:0.1:0.9:5", "--axis2", "resource:0.1:10:6:log",
                      "--format", "csv", "--out", out)
    assert code == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0] == "eta,resource,c1" and len(lines) == 31


def test_phase_diagram_json(capsys):
    code, rec, _ = _run(capsys, "phase-diagram", "--coefficient", "d_eps", "--axis1", "nbar:0:2:3",
                        "--axis2", "gamma:0.001:10:30:log", "--fixed", "M=1", "--fixed", "epsilon=0.1")
    assert code == EXIT_OK and rec["result"]["crossings_per_row"] == [1, 1, 1]


def test_phase_diagram_bad_axis(capsys):
    code, _, _ = _run(capsys, "phase-diagram", "--axis1", "eta:0.1", "--axis2", "resource:0.1:10:6")
    assert code == EXIT_USAGE
    code, _, _ = _run(capsys, "phase-diagram", "--axis1", "eta:0.1:0.9:3", "--axis2", "colour:0.1:10:6")
    assert code == EXIT_USAGE


def test_bounds(capsys):
    code, rec, _ = _run(capsys, "bounds", CIRCUITS / "reference.json")
    assert code == EXIT_OK
    res = rec["result"]
    assert 0 < res["concentration"]["bound"] and res["concentration"]["rigorous"]
    assert "optimized_tau" in res["purity_overlap"]


def test_quadrature_auto_E_on_gaussian(capsys):
    code, rec, _ = _run(capsys, "estimate", CIRCUITS / "coherent_empty.json", "--observable", "quadrature",
                        "--which", "q", "--moment-E", "auto", "--curvature-M", "auto", "--epsilon", "0.2")
    assert code == EXIT_OK and "moment_bound_E" in rec["result"]


def test_console_script_installed():
    exe = shutil.which("dispprop")
    cmd = [exe] if exe else [sys.executable, "-m", "dispprop.cli"]
    proc = subprocess.run(cmd + ["--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("dispprop")
    proc = subprocess.run(cmd + ["estimate", str(CIRCUITS / "vacuum_empty.json"), "--algorithm", "bogus"],
                          capture_output=True, text=True)
    assert proc.returncode == 2
