import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from shortfall.cli import main

CONFIGS = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "configs")

SMALL = "[model]\nname = {model}\nalpha = {alpha}\n[simulation]\nn = 100, 400\nm = 25\nseed = 11\n"


@pytest.fixture
def data(tmp_path):
    p = tmp_path / "d.txt"
    p.write_text("1\n2\n3\n4\n")
    return str(p)


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_estimate_report(data, capsys):
    code, out, _ = run(["estimate", data, "--alpha", "0.5"], capsys)
    rep = json.loads(out)
    assert code == 0
    assert rep["levels"][0]["es_hat"] == 1.5 and rep["levels"][0]["q_hat"] == 2.0
    assert rep["spectral"]["nu_hat"] == 1.5
    assert "es_se_model" not in rep["levels"][0]


def test_estimate_spectral_and_model_se(data, capsys):
    code, out, _ = run(["estimate", data, "--alpha", "0.25,0.5", "--weights", "0.5,0.5", "--model", "kinked"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["spectral"]["nu_hat"] == 1.25
    assert rep["levels"][1]["es_se_model"] > 0 and rep["spectral"]["se_model"] > 0


def test_estimate_model_se_is_plugin(data, capsys):
    code, out, _ = run(["estimate", data, "--alpha", "0.2", "--model", "kinked"], capsys)
    assert json.loads(out)["levels"][0]["es_se_model"] == pytest.approx((17 / 12 / 4) ** 0.5, abs=1e-12)


@pytest.mark.parametrize(
    "extra,msg",
    [
        (["--alpha", "1.0"], "alpha must lie in (0, 1)"),
        (["--alpha", "0.25,0.5", "--weights", "0.5,0.4"], "sum to 1"),
        (["--alpha", "0.5", "--model", "nope"], "built-ins"),
    ],
)
def test_estimate_errors(data, capsys, extra, msg):
    code, _, err = run(["estimate", data] + extra, capsys)
    assert code == 2 and msg in err


def test_estimate_unreadable(tmp_path, capsys):
    code, _, err = run(["estimate", str(tmp_path / "missing.csv"), "--alpha", "0.5"], capsys)
    assert code == 2 and "cannot read" in err
    bad = tmp_path / "bad.csv"
    bad.write_text("1\nNaN\n")
    code, _, err = run(["estimate", str(bad), "--alpha", "0.5"], capsys)
    assert code == 2 and "bad.csv:2" in err


def test_estimate_writes_json(data, tmp_path, capsys):
    out = tmp_path / "r.json"
    assert run(["estimate", data, "--alpha", "0.5", "--out", str(out)], capsys)[0] == 0
    assert json.loads(out.read_text())["n"] == 4


def test_limits_kinked_grid(tmp_path, capsys):
    code, out, _ = run(["limits", "--model", "kinked", "--alpha", "0.2", "--out", str(tmp_path)], capsys)
    assert code == 0
    with open(tmp_path / "limit_cdf.csv") as fh:
        rows = list(csv.reader(fh))
    z, f = np.array(rows[1:], dtype=float).T
    assert rows[0] == ["z", "cdf"] and len(z) == 601
    assert z[0] == -3.0 and z[-1] == 3.0
    assert np.all(np.diff(f) >= 0)
    assert (tmp_path / "limit_density.csv").exists()


def test_limits_selfcheck(tmp_path, capsys):
    code, out, _ = run(["limits", "--model", "cubic", "--alpha", "0.5", "--selfcheck", "--out", str(tmp_path)], capsys)
    assert code == 0 and "selfcheck passed" in out


def test_limits_selfcheck_fails_on_truncated_grid(tmp_path, capsys):
    argv = ["limits", "--model", "cubic", "--alpha", "0.5", "--selfcheck", "--out", str(tmp_path), "--tmin", "-0.5", "--tmax", "0.5"]
    code, _, err = run(argv, capsys)
    assert code == 4 and "density integrates" in err


def test_limits_unknown_model(capsys):
    code, _, err = run(["limits", "--model", "weibull", "--alpha", "0.2"], capsys)
    assert code == 2 and "kinked, cubic, normal" in err


def test_limits_no_expansion(capsys, tmp_path):
    code, _, err = run(["limits", "--model", "kinked", "--alpha", "1.2", "--out", str(tmp_path)], capsys)
    assert code == 2 and "no expansion" in err


def test_output_directory_from_environment(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("SHORTFALL_OUT", str(tmp_path / "env"))
    assert run(["limits", "--model", "normal", "--alpha", "0.3"], capsys)[0] == 0
    assert (tmp_path / "env" / "limit_cdf.csv").exists()


def test_identities(capsys):
    code, out, _ = run(["identities", "--trials", "1000"], capsys)
    assert code == 0 and "residual" in out


def test_identities_negative_control(capsys):
    code, out, err = run(["identities", "--trials", "1000", "--spec", "corrupted"], capsys)
    assert code == 4 and "G' <= 0" in out


def test_identities_zero_trials(capsys):
    with pytest.raises(SystemExit) as info:
        main(["identities", "--trials", "0"])
    assert info.value.code == 2


def test_simulate_writes_and_prints(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(SMALL.format(model="cubic", alpha=0.5))
    code, out, _ = run(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")], capsys)
    assert code == 0
    assert "Mean" in out and "Std. dev." in out and "Correlation" in out
    assert (tmp_path / "o" / "summary.csv").exists() and (tmp_path / "o" / "cdf_400.csv").exists()


def test_simulate_is_deterministic(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(SMALL.format(model="kinked", alpha=0.2))
    blobs = []
    for i, workers in enumerate(("1", "2")):
        out = tmp_path / f"o{i}"
        assert run(["simulate", "--config", str(cfg), "--out", str(out), "--workers", workers], capsys)[0] == 0
        blobs.append(((out / "summary.csv").read_bytes(), (out / "cdf_100.csv").read_bytes()))
    assert blobs[0] == blobs[1]
    out = tmp_path / "o2"
    run(["simulate", "--config", str(cfg), "--out", str(out), "--seed", "12"], capsys)
    assert (out / "summary.csv").read_bytes() != blobs[0][0]


def test_simulate_config_errors(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(SMALL.format(model="kinked", alpha=0.2).replace("100, 400", ""))
    code, _, err = run(["simulate", "--config", str(cfg)], capsys)
    assert code == 2 and "empty" in err
    code, _, err = run(["simulate"], capsys)
    assert code == 2 and "--config" in err


def test_simulate_runtime_error(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(SMALL.format(model="kinked", alpha=0.2))
    blocker = tmp_path / "file"
    blocker.write_text("")
    code, _, err = run(["simulate", "--config", str(cfg), "--out", str(blocker / "sub")], capsys)
    assert code == 3 and "runtime error" in err


def test_bootstrap(tmp_path, capsys):
    argv = ["bootstrap", "--model", "kinked", "--alpha", "0.2", "--n", "2000", "--B", "200", "--seed", "3"]
    code, out, _ = run(argv + ["--out", str(tmp_path / "a")], capsys)
    assert code == 0 and "KS" in out
    run(argv + ["--out", str(tmp_path / "b")], capsys)
    a = (tmp_path / "a" / "bootstrap.csv").read_bytes()
    assert a == (tmp_path / "b" / "bootstrap.csv").read_bytes()
    with open(tmp_path / "a" / "bootstrap.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["method"] for r in rows] == ["n_out_of_n", "subsample"]
    assert rows[1]["b"] == str(int(2000**0.7))


def test_module_entry_point(tmp_path):
    res = subprocess.run(
        [sys.executable, "-m", "shortfall", "identities", "--trials", "10", "--spec", "corrupted"],
        capture_output=True,
        text=True,
    )
    assert res.returncode == 4


def _summary_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_shipped_kink_config(tmp_path, capsys):
    code, out, _ = run(["simulate", "--config", os.path.join(CONFIGS, "kink.cfg"), "--out", str(tmp_path)], capsys)
    assert code == 0
    rows = _summary_rows(tmp_path / "summary.csv")
    corr = [float(r["corr"]) for r in rows if r["estimator"] == "quantile"]
    assert len(corr) == 3 and all(abs(c - 0.76) <= 0.05 for c in corr)


def test_shipped_cubic_config(tmp_path, capsys):
    code, out, _ = run(["simulate", "--config", os.path.join(CONFIGS, "cubic.cfg"), "--out", str(tmp_path)], capsys)
    assert code == 0
    rows = _summary_rows(tmp_path / "summary.csv")
    # n^(1/6) scaling keeps the quantile spread flat across n
    sds = [float(r["sd"]) for r in rows if r["estimator"] == "quantile"]
    assert len(sds) == 3 and all(0.8 <= s <= 1.0 for s in sds)
