import json
import subprocess
import sys

import numpy as np
import pytest

from qcap.channels import choi_matrix, depolarizing
from qcap.cli import main
from qcap.io import (
    SpecError,
    canonical,
    channel_to_doc,
    complex_array,
    dumps,
    parse_channel,
    parse_instance,
    parse_state,
    read_json,
    state_to_doc,
)
from qcap.linalg import max_entangled


def _write(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture
def files(tmp_path):
    ident = _write(tmp_path / "id.json",
                   {"version": 1, "kind": "standard", "dims": [2, 2], "data": {"name": "identity"}})
    dep = _write(tmp_path / "dep.json",
                 {"version": 1, "kind": "standard", "dims": [2, 2], "data": {"name": "depolarizing", "param": 1.0}})
    phi = _write(tmp_path / "phi.json", state_to_doc(max_entangled(2)))
    inst = _write(tmp_path / "inst.json", {
        "version": 1, "J": 2, "r": 2, "d_rr": 1, "state": {"kind": "random", "seed": 4},
        "map": {"version": 1, "kind": "standard", "dims": [4, 4], "data": {"name": "depolarizing", "param": 0.3}}})
    return {"id": ident, "dep": dep, "phi": phi, "inst": inst, "dir": tmp_path}


def _run(capsys, argv):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


# file formats --------------------------------------------------------------------


def test_complex_array_round_trip(rng):
    m = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    doc = json.loads(json.dumps(channel_to_doc(depolarizing(0.2))))
    assert np.allclose(complex_array(json.loads(json.dumps(np.stack([m.real, m.imag], -1).tolist()))), m)
    back = parse_channel(doc)
    assert np.allclose(choi_matrix(back), choi_matrix(depolarizing(0.2)))


def test_state_round_trip():
    rho = parse_state(json.loads(json.dumps(state_to_doc(max_entangled(2)))))
    assert np.allclose(rho.matrix, max_entangled(2).matrix)


def test_bad_inputs_name_the_field(tmp_path):
    with pytest.raises(SpecError, match="version"):
        parse_channel({"version": 2, "kind": "kraus", "dims": [2, 2], "data": []})
    with pytest.raises(SpecError, match="kind"):
        parse_channel({"version": 1, "kind": "weird", "dims": [2, 2], "data": []})
    with pytest.raises(SpecError, match="dims"):
        parse_channel({"version": 1, "kind": "standard", "dims": [2, 2],
                       "data": {"name": "erasure", "param": 0.1}})
    bad = tmp_path / "bad.json"
    bad.write_text('{"version": 1,\n "kind": }')
    with pytest.raises(SpecError, match="line 2"):
        read_json(bad)


def test_instance_parsing():
    inst = parse_instance({"version": 1, "J": 2, "r": 1, "state": {"kind": "max_entangled"},
                           "map": {"version": 1, "kind": "standard", "dims": [2, 2], "data": {"name": "identity"}}})
    assert (inst.J, inst.r, inst.d_rr) == (2, 1, 1)
    with pytest.raises(SpecError, match="map"):
        parse_instance({"version": 1, "J": 2, "r": 1})


def test_canonical_rounding():
    assert canonical({"b": np.float64(1 / 3), "a": [np.inf, -0.0]}) == {"b": 0.333333333, "a": ["inf", 0.0]}
    assert dumps({"z": 1, "a": 2}).index('"a"') < dumps({"z": 1, "a": 2}).index('"z"')


# command line ------------------------------------------------------------------------


def test_entropy_command(capsys, files):
    code, out, err = _run(capsys, ["entropy", "--state", files["phi"], "--which", "hmin"])
    assert code == 0
    rep = json.loads(out)
    assert rep["results"]["value"] == pytest.approx(-1.0, abs=1e-6)
    assert set(rep) == {"command", "config_hash", "seed", "version", "results"}
    assert "wall time" in err


def test_bound_command(capsys, files):
    code, out, _ = _run(capsys, ["bound", "--channel", files["id"], "--mode", "direct",
                                 "--c", "0", "--q", "1", "--e", "0", "--delta", "2"])
    assert code == 0 and json.loads(out)["results"]["feasible"]
    code, out, _ = _run(capsys, ["bound", "--channel", files["dep"], "--mode", "direct",
                                 "--c", "1", "--q", "0", "--e", "0"])
    assert code == 0 and not json.loads(out)["results"]["feasible"]


def test_input_errors_exit_2(capsys, files):
    assert _run(capsys, ["bound", "--channel", files["id"], "--mode", "direct", "--q", "1"])[0] == 2
    assert _run(capsys, ["entropy", "--state", files["phi"], "--which", "hmin_smooth", "--eps", "1.5"])[0] == 2
    assert _run(capsys, ["channel", "validate", "--channel", str(files["dir"] / "missing.json")])[0] == 2


def test_channel_validate(capsys, files):
    code, out, _ = _run(capsys, ["channel", "validate", "--channel", files["dep"]])
    res = json.loads(out)["results"]
    assert code == 0 and res["trace_flag"] == "trace-preserving" and res["d_out"] == 2


def test_decouple_command_deterministic(capsys, files):
    argv = ["decouple", "--instance", files["inst"], "--samples", "300", "--seed", "5"]
    a = _run(capsys, argv)
    b = _run(capsys, argv)
    assert a[0] == 0 and a[1] == b[1]
    assert json.loads(a[1])["results"]["verdict"] == "PASS"


def test_region_asymptotic_writes_csv(capsys, files):
    out = files["dir"] / "region.csv"
    code, stdout, _ = _run(capsys, ["region", "--channel", files["id"], "--mode", "asymptotic",
                                    "--samples", "3", "--out", str(out)])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "C,Q,E"
    assert json.loads(out.with_suffix(".json").read_text())["inequalities"]


def test_console_script_entry_point(files):
    proc = subprocess.run([sys.executable, "-m", "qcap.cli", "channel", "validate", "--channel", files["id"]],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["results"]["d_in"] == 2


def test_solver_tolerance_env(monkeypatch, capsys, files):
    monkeypatch.setenv("QCAP_SOLVER_TOL", "nonsense")
    assert _run(capsys, ["entropy", "--state", files["phi"], "--which", "hmin"])[0] == 2
