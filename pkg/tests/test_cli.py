from __future__ import annotations

import csv
import hashlib
import json
import subprocess
import sys

import pytest

from moneyburn.cli import main


def _run(tmp_path, *argv, name="out.csv"):
    out = tmp_path / name
    code = main([*argv, "--out", str(out)])
    return code, out


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_hazard_csv(tmp_path):
    code, out = _run(tmp_path, "hazard", "--marginal", "weibull:0.9", "--k", "1,16", "--points", "5")
    assert code == 0
    rows = _rows(out)
    assert rows[0] == ["K", "w", "density", "hazard_derivative"]
    ks = [r[0] for r in rows[1:]]
    assert ks.count("16") == 5
    assert ks.count("1") == 4  # w = 0 sits on the support boundary when K = 1


def test_compare_and_manifest(tmp_path):
    code, out = _run(tmp_path, "compare", "--marginal", "spareto:2", "--m-bar", "0.1", "--k-max", "5")
    assert code == 0
    rows = _rows(out)
    assert rows[0] == ["k", "rs_sd", "rs_vcg"] and len(rows) == 6
    assert all(float(r[2]) > float(r[1]) for r in rows[1:])
    manifest = json.loads((tmp_path / "out.csv.manifest.json").read_text())
    assert manifest["command"] == "compare"
    assert manifest["schema"]["columns"] == ["k", "rs_sd", "rs_vcg"]
    assert manifest["outputs"]["out.csv"] == hashlib.sha256(out.read_bytes()).hexdigest()


def test_reruns_are_byte_identical(tmp_path):
    args = ["simulate", "--marginal", "weibull:0.8", "--m", "1", "--trials", "2000", "--seed", "5"]
    _, a = _run(tmp_path, *args, name="a.csv")
    _, b = _run(tmp_path, *args, name="b.csv")
    assert a.read_bytes() == b.read_bytes()
    assert _rows(a)[0] == ["alpha", "m", "ratio", "stderr"]


def test_frechet_and_rf(tmp_path):
    code, out = _run(tmp_path, "frechet-thresholds", "--alpha", "3")
    assert code == 0 and float(_rows(out)[1][2]) == pytest.approx(0.984496, abs=1e-6)
    code, out = _run(tmp_path, "rf", "--m1", "0.4", "--m2", "0.1", name="rf.csv")
    assert code == 0
    row = dict(zip(*_rows(out)))
    assert float(row["rs_rf"]) == pytest.approx(0.7)


def test_lp_outputs(tmp_path):
    code, out = _run(tmp_path, "lp", "--marginal", "exp:1", "--marginal", "exp:1", "--n", "4",
                     "--capacities", "0.4,0.1", "--export-lp")
    assert code == 0
    assert _rows(out)[0] == ["v1", "v2", "x1", "x2", "p"]
    summary = json.loads((tmp_path / "out.csv.json").read_text())
    assert summary["residuals"]["ic"] <= 1e-9
    assert (tmp_path / "out.csv.lp").read_text().rstrip().endswith("End")


def test_classify_and_mechanism(tmp_path):
    code, out = _run(tmp_path, "classify", "--marginal", "spareto:2", "--marginal", "exp")
    assert code == 0
    assert [r[1] for r in _rows(out)[1:]] == ["frechet", "gumbel"]
    code, out = _run(tmp_path, "mechanism", "--marginal", "frechet:3", name="m.json")
    assert code == 0
    assert json.loads(out.read_text())["segments"][-1]["x"] == 1.0


@pytest.mark.parametrize("argv", [
    ["compare", "--marginal", "normal:1"],
    ["compare", "--m-bar", "1.5"],
    ["lp", "--marginal", "exp", "--marginal", "exp", "--marginal", "exp", "--n", "50"],
    ["simulate", "--trials", "10"],
])
def test_bad_input_exit_code_and_no_output(tmp_path, argv):
    code, out = _run(tmp_path, *argv)
    assert code == 2
    assert list(tmp_path.iterdir()) == []


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "moneyburn", "rf", "--grid", "3"], capture_output=True, text=True)
    assert res.returncode == 0
    assert res.stdout.splitlines()[0] == "m1,m2,pct_diff"
