import json
from pathlib import Path

import numpy as np
import pytest

from sgbh import cli
from sgbh import config as cfgmod
from sgbh.errors import ConfigError
from sgbh.skeleton_control import gramian_rate

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

GOOD = """{
  "experiment": "simulate",
  "model": {"nu": 0.1, "alpha": 1.0, "beta": 1.0, "gamma": 1.0, "delta": 1, "epsilon": 0.1},
  "grid": {"n_interior": 15},
  "time": {"T": 0.02, "dt": 1e-3},
  "noise": {"regime": "colored", "eta": 0.5},
  "g": {"family": "bounded_sigmoid", "K": 1.0, "L": 1.0},
  "initial": {"kind": "mode", "mode": 1, "amplitude": 0.5}
}
"""


def write(tmp_path, text, name="c.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def run_json(capsys, argv):
    code = cli.main(argv)
    out = capsys.readouterr().out
    return code, json.loads(out) if out.strip() else None


def test_validate_valid(tmp_path, capsys):
    code, rep = run_json(capsys, ["validate", str(write(tmp_path, GOOD))])
    assert code == 0 and rep["valid"] and rep["violations"] == []


def test_validate_trace_condition(capsys):
    code, rep = run_json(capsys, ["validate", str(CONFIGS / "bad_trace.cfg")])
    assert code == 2 and not rep["valid"]
    (v,) = rep["violations"]
    assert "trace condition" in v["message"] and v["line"] == 7 and v["key"] == "noise.eta"


def test_validate_monitor_exponent(capsys):
    code, rep = run_json(capsys, ["validate", str(CONFIGS / "bad_monitor.cfg")])
    assert code == 2
    assert any("p > max{6,2*delta+1}" in v["message"] and "required" in v["message"]
               for v in rep["violations"])
    assert any("Courant" in w["message"] for w in rep["warnings"])


def test_validate_lists_every_violation(tmp_path, capsys):
    text = GOOD.replace('"nu": 0.1', '"nu": -1').replace('"eta": 0.5', '"eta": 0.1')
    code, rep = run_json(capsys, ["validate", str(write(tmp_path, text))])
    assert code == 2
    lines = sorted(v["line"] for v in rep["violations"])
    assert lines == [3, 6]


def test_malformed_json_reports_line(tmp_path):
    with pytest.raises(ConfigError) as err:
        cfgmod.load(write(tmp_path, GOOD.replace('"T": 0.02,', '"T": 0.02')))
    assert err.value.line == 5


def test_run_bad_config_exits_2(tmp_path, capsys):
    assert cli.main(["run", str(CONFIGS / "bad_trace.cfg"), "--out", str(tmp_path)]) == 2
    assert "trace condition" in capsys.readouterr().err


def test_run_numerical_failure_exits_3(tmp_path, capsys):
    text = GOOD.replace('"amplitude": 0.5', '"amplitude": 40.0').replace('"dt": 1e-3', '"dt": 1e-2')
    text = text.replace('"T": 0.02', '"T": 0.1')
    assert cli.main(["run", str(write(tmp_path, text)), "--out", str(tmp_path / "o")]) == 3
    diag = json.loads((tmp_path / "o" / "diagnostic.json").read_text())
    assert diag["error"] == "cfl" and diag["step"] == 0
    capsys.readouterr()


def test_heat_decay_config(tmp_path, capsys):
    code, summary = run_json(capsys, ["run", str(CONFIGS / "heat_decay.cfg"), "--out", str(tmp_path)])
    assert code == 0
    assert summary["mode1_ratio"] == pytest.approx(np.exp(-np.pi**2 * 0.1), abs=5e-3)
    rows = np.loadtxt(tmp_path / "trajectory.csv", delimiter=",", skiprows=1)
    assert rows.shape == (11, 128)


def test_rate_config_matches_gramian(tmp_path, capsys):
    code, _ = run_json(capsys, ["run", str(CONFIGS / "rate_linear.cfg"), "--out", str(tmp_path)])
    assert code == 0
    rate = json.loads((tmp_path / "rate.json").read_text())
    assert rate["value"] == pytest.approx(gramian_rate(0.5, 0.1, 1.0), rel=1e-3)
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["gramian_reference"] == pytest.approx(gramian_rate(0.5, 0.1, 1.0))


def test_manifest_contents(tmp_path, capsys):
    cli.main(["run", str(write(tmp_path, GOOD)), "--out", str(tmp_path / "o"), "--threads", "2"])
    capsys.readouterr()
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["status"] == "ok" and man["threads"] == 2
    assert man["artifacts"] == ["energy.csv", "summary.json", "trajectory.csv"]
    assert len(man["config_hash"]) == 64
    assert {"numpy", "scipy", "numba", "backend", "sgbh"} <= set(man["versions"])


def test_output_dir_precedence(tmp_path, monkeypatch, capsys):
    cfg = write(tmp_path, GOOD)
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
    cli.main(["run", str(cfg)])
    assert (tmp_path / "env" / "manifest.json").exists()
    cli.main(["run", str(cfg), "--out", str(tmp_path / "flag")])
    assert (tmp_path / "flag" / "manifest.json").exists()
    capsys.readouterr()


@pytest.mark.parametrize("name,artifact", [("mc_quick.cfg", "mc.csv"),
                                           ("burgers_huxley.cfg", "trajectory.csv")])
def test_reruns_are_byte_identical(tmp_path, capsys, name, artifact):
    outs = []
    for i, threads in enumerate(("1", "1", "4")):
        d = tmp_path / f"r{i}"
        assert cli.main(["run", str(CONFIGS / name), "--out", str(d), "--threads", threads]) == 0
        outs.append((d / artifact).read_bytes())
    capsys.readouterr()
    assert outs[0] == outs[1] == outs[2]


def test_kernel_check_command(tmp_path, capsys):
    assert cli.main(["kernel-check", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "kernel_check.json").read_text())
    assert rep["pass"] and rep["image_vs_spectral_max"] < 1e-9
    capsys.readouterr()
