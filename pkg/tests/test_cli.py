import json
import subprocess
import sys

import numpy as np
import pytest
from scipy.integrate import quad

from dirac_echo import gbdt
from dirac_echo.cli import main
from dirac_echo.core import read_csv, read_potential_csv, read_sampled


@pytest.fixture
def params(tmp_path):
    def write(name, triple=None):
        path = tmp_path / f"{name}.json"
        P = gbdt.example(name) if triple is None else gbdt.validate_params(*triple)
        path.write_text(gbdt.params_to_json(P))
        return str(path)

    return write


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def t2exp(t):
    return t * t * np.exp(-t)


def test_forward_zero_potential(capsys):
    code, out, _ = run(capsys, "forward", "--X", 0.5, "--T", 2, "--h", 1 / 64)
    assert code == 0
    tr = read_sampled(out)
    np.testing.assert_allclose(tr.values, 1j * t2exp(tr.nodes), atol=1e-15)


def test_forward_e1_matches_oracle(capsys, params, tmp_path):
    field = tmp_path / "field.csv"
    code, out, _ = run(capsys, "forward", "--params", params("E1"), "--h", 1 / 64, "--out", field)
    assert code == 0
    tr = read_sampled(out)
    exact = [1j * t2exp(t) + 1j * quad(lambda s: -2 * np.exp(-2 * (t - s)) * t2exp(s), 0, t)[0] for t in tr.nodes]
    assert np.max(np.abs(tr.values - np.array(exact))) < 1e-3
    cols = read_csv(str(field), required=["x", "t", "re_u1", "im_u1", "re_u2", "im_u2"])
    assert cols["x"].size == 129 * 129


def test_forward_characteristics(capsys, params):
    code, out, _ = run(capsys, "forward", "--params", params("E1"), "--solver", "characteristics", "--order", 2,
                       "--h", 1 / 64)
    assert code == 0 and read_sampled(out).grid.n_points == 129


def test_response_subcommand(capsys, params, tmp_path):
    trace = tmp_path / "trace.csv"
    assert run(capsys, "forward", "--params", params("E1"), "--h", 1 / 128, "--trace", trace)[0] == 0
    code, out, _ = run(capsys, "response", "--input", trace)
    assert code == 0
    r = read_sampled(out)
    assert np.max(np.abs(r.values + 2j * np.exp(-2 * r.nodes))) < 5e-2


def test_invalid_csv(capsys, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("x,re,im\n0,1,zzz\n")
    code, _, err = run(capsys, "invert", "--input", bad)
    assert code == 2
    doc = json.loads(err)
    assert doc["kind"] == "parse" and "message" in doc and "context" in doc


def test_parameter_error_exit_code(capsys):
    code, _, err = run(capsys, "forward", "--h", -1)
    assert code == 3 and json.loads(err)["kind"] == "parameter"
    code, _, err = run(capsys, "forward", "--h", 0.3)
    assert code == 3


def test_invalid_params_exit_code(capsys, tmp_path):
    p = tmp_path / "p.json"
    p.write_text(json.dumps({"n": 1, "A": [[0, 0]], "theta1": [[1, 0]], "theta2": [[2, 0]]}))
    code, _, err = run(capsys, "gbdt", "--params", p)
    assert code == 3 and json.loads(err)["kind"] == "invalid-parameters"


def test_gbdt_outputs(capsys, params):
    code, out, _ = run(capsys, "gbdt", "--params", params("E1"), "--L", 1, "--n", 10)
    pot = read_potential_csv(out)
    x = pot.grid.nodes
    np.testing.assert_allclose(pot.q_at(x), -2 / (1 + 2 * x), rtol=1e-13)
    code, out, _ = run(capsys, "gbdt", "--params", params("E1"), "--what", "response", "--L", 2, "--n", 8)
    r = read_sampled(out)
    np.testing.assert_allclose(r.values, -2j * np.exp(-2 * r.nodes), rtol=1e-14)
    code, out, _ = run(capsys, "gbdt", "--params", params("E1"), "--what", "weyl", "--z", "[[0, 5]]")
    cols = read_csv(out)
    assert cols["re_phi"][0] == pytest.approx(-1 / 6, rel=1e-14)
    assert cols["im_phiH"][0] == pytest.approx(5 / 7, rel=1e-14)


def test_roundtrip_e1(capsys, params):
    code, out, _ = run(capsys, "roundtrip", "--params", params("E1"), "--L", 1, "--N", 600)
    rep = json.loads(out)
    assert code == 0
    assert rep["relative_error_v"] <= 1e-3
    assert rep["order_estimate"] >= 1.8
    assert rep["positivity_min_eig"] > 0


def test_roundtrip_zero_theta2(capsys, params):
    path = params("Z", ([[0.5j]], [1.0], [0.0]))
    code, out, _ = run(capsys, "roundtrip", "--params", path, "--N", 40)
    rep = json.loads(out)
    assert code == 0
    assert rep["sup_error_v"] == rep["sup_error_p"] == rep["sup_error_q"] == 0


def test_roundtrip_e2(capsys, params):
    code, out, _ = run(capsys, "roundtrip", "--params", params("E2"), "--N", 200)
    assert code == 0 and json.loads(out)["positivity_min_eig"] > 0


def test_invert_zero_response(capsys, tmp_path):
    r = tmp_path / "r.csv"
    t = np.linspace(0, 2, 41)
    r.write_text("x,re,im\n" + "".join(f"{float(v)!r},0,0\n" for v in t))
    code, out, err = run(capsys, "invert", "--input", r, "--half-warn")
    assert code == 0 and "warning" in err
    pot = read_potential_csv(out)
    x = pot.grid.nodes
    assert x[-1] == pytest.approx(1.0)
    assert not np.any(pot.p_at(x)) and not np.any(pot.q_at(x))


def test_weyl_check_zero_potential(capsys):
    code, out, _ = run(capsys, "weyl-check", "--z", "[[0, 3]]", "--h", 1 / 32)
    cols = read_csv(out)
    assert code == 0
    assert abs(cols["re_phi"][0]) + abs(cols["im_phi"][0]) < 1e-14
    assert cols["im_phiH"][0] == pytest.approx(1.0, abs=1e-14)


def test_weyl_check_bad_z(capsys):
    code, _, err = run(capsys, "weyl-check", "--z", "not json")
    assert code == 2 and json.loads(err)["kind"] == "parse"


def test_amplitude_e1(capsys, params, tmp_path):
    r = tmp_path / "r.csv"
    run(capsys, "gbdt", "--params", params("E1"), "--what", "response", "--L", 2, "--n", 200, "--out", r)
    code, out, _ = run(capsys, "amplitude", "--input", r)
    cols = read_csv(out)
    assert code == 0
    np.testing.assert_allclose(cols["re_omega"] + 1j * cols["im_omega"], -np.exp(-2 * cols["x"]), atol=1e-12)


def test_config_file_and_override(capsys, tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"X": 0.5, "T": 1.0, "h": 0.125}))
    _, out, _ = run(capsys, "forward", "--config", cfg)
    assert read_sampled(out).grid.n_points == 9
    _, out, _ = run(capsys, "forward", "--config", cfg, "--h", 0.0625)
    assert read_sampled(out).grid.n_points == 17
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2")
    assert run(capsys, "forward", "--config", bad)[0] == 2


def test_outputs_are_deterministic(tmp_path, params):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"params": params("E2"), "h": 1 / 32, "X": 1.0, "T": 1.0}))
    outs = []
    for k in range(2):
        target = tmp_path / f"out{k}.csv"
        assert main(["forward", "--config", str(cfg), "--out", str(target), "--trace", str(tmp_path / f"tr{k}.csv")]) == 0
        outs.append(target.read_bytes() + (tmp_path / f"tr{k}.csv").read_bytes())
    assert outs[0] == outs[1]


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "dirac_echo.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "roundtrip" in proc.stdout
