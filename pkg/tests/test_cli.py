import csv
import io
import json
import math

import jsonschema
import pytest

from freeshear import cli

SINE = ["--builtin", "sine:1,1pi,1"]


def run(*args):
    return cli.run(list(args))


def test_analyze_sine_report_validates():
    code, text, _ = run("analyze", *SINE)
    assert code == 0
    rep = json.loads(text)
    jsonschema.validate(rep, cli.load_schema())
    assert rep["schema_version"] == cli.SCHEMA_VERSION
    assert rep["alphas"]["alpha_d"] == 0.0
    assert rep["alphas"]["alpha_max"] > 0
    assert rep["intervals"] == [[0.0, rep["alphas"]["alpha_max"]]]


def test_analyze_linear_is_stable(tmp_path):
    f = tmp_path / "lin.json"
    f.write_text(json.dumps({"kind": "poly", "coeffs": [0, 1], "h": 1}))
    code, text, _ = run("analyze", "--profile", str(f))
    assert code == 0
    rep = json.loads(text)
    jsonschema.validate(rep, cli.load_schema())
    assert "stable: no inflection point" in rep["notes"]
    assert rep["intervals"] == []


def test_malformed_file_no_output(tmp_path):
    f = tmp_path / "bad.json"
    f.write_text('{"kind": "poly",\n "coeffs": [0, 1')
    out = tmp_path / "out.json"
    assert cli.main(["analyze", "--profile", str(f), "--out", str(out)]) == 2
    assert not out.exists()


def test_input_errors():
    assert run("analyze")[0] == 2
    assert run("analyze", "--builtin", "sine:1,2")[0] == 2
    assert run("growth", *SINE, "--alpha-min", "2", "--alpha-max", "1")[0] == 2
    assert run("dispersion", *SINE, "--k", "1,-1")[0] == 2
    assert run("analyze", *SINE, "--format", "csv")[0] == 2
    assert run("bogus")[0] == 2


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_growth_csv_and_determinism():
    args = ("growth", *SINE, "--alpha-min", "5", "--alpha-max", "11", "--steps", "4")
    code, text, _ = run(*args)
    assert code == 0
    rows = _rows(text)
    assert [r["alpha"] for r in rows] == ["5", "7", "9", "11"]
    assert rows[-1]["re_c"] == ""                      # 11 > alpha_max: no mode
    for r in rows[:-1]:
        assert float(r["growth_rate"]) == pytest.approx(float(r["alpha"]) * float(r["im_c"]), rel=1e-15)
        assert float(r["bc_residual"]) < 1e-8
        assert float(r["semicircle_margin"]) > 0
    assert run(*args)[1] == text
    assert run(*args, "--jobs", "2")[1] == text


def test_dispersion_sorted_and_exact(tmp_path):
    f = tmp_path / "still.json"
    f.write_text(json.dumps({"kind": "poly", "coeffs": [0], "h": 1}))
    code, text, _ = run("dispersion", "--profile", str(f), "--k", "2,0.5,1")
    assert code == 0
    rows = _rows(text)
    ks = [float(r["k"]) for r in rows if r["status"] == "ok"]
    assert ks == [0.5, 1.0, 2.0]
    for r in rows[:3]:
        k = float(r["k"])
        assert float(r["c"]) == pytest.approx(math.sqrt(9.81 * math.tanh(k) / k), rel=1e-8)
    assert rows[-1]["status"] == "burns_limit"
    assert float(rows[-1]["c"]) == pytest.approx(math.sqrt(9.81), rel=1e-12)


def test_dispersion_json():
    code, text, _ = run("dispersion", *SINE, "--k", "1", "--format", "json")
    d = json.loads(text)
    assert code == 0 and d["kind"] == "dispersion" and len(d["rows"]) == 2


def test_neutral_verify():
    code, text, _ = run("neutral", *SINE, "--verify")
    assert code == 0
    recs = json.loads(text)["neutral"]
    assert len(recs) == 1
    assert recs[0]["rate"]["dcdeps_im"] < 0
    assert max(d["rel_err"] for d in recs[0]["fd_check"]) < 0.05


def test_neutral_empty_and_degenerate(tmp_path):
    f = tmp_path / "lin.json"
    f.write_text(json.dumps({"kind": "poly", "coeffs": [0, 1], "h": 1}))
    code, text, _ = run("neutral", "--profile", str(f))
    assert code == 0 and json.loads(text)["neutral"] == []
    d = tmp_path / "deg.json"
    d.write_text(json.dumps({"kind": "poly", "coeffs": [-0.125, 0.75, -1.5, 1], "h": 1}))
    code, text, diag = run("neutral", "--profile", str(d), "--verify")
    assert code == 3 and text == "" and "NonSimpleRoot" in diag


def test_modes_dump(tmp_path):
    out = tmp_path / "m.csv"
    assert cli.main(["modes", *SINE, "--alpha", "5", "--grid", "401", "--out", str(out)]) == 0
    rows = _rows(out.read_text())
    assert len(rows) > 400 and rows[0]["mode"] == "0"
    assert max(abs(complex(float(r["re_phi"]), float(r["im_phi"]))) for r in rows) == pytest.approx(1.0)


def test_g_override():
    code, text, _ = run("analyze", *SINE, "--g", "2.0")
    assert code == 0 and json.loads(text)["profile_summary"]["g"] == 2.0
