import json

import numpy as np
import pytest

from fracbridge import cli
from fracbridge._io import read_csv


def run(tmp_path, *args):
    return cli.main([*args, "--out", str(tmp_path)])


def test_simulate_zero_drift(tmp_path):
    assert run(tmp_path, "simulate", "--set", "hurst=0.3", "--set", "drift=zero", "--set", "n_steps=64") == 0
    text = (tmp_path / "simulate.csv").read_text().splitlines()
    assert text[0].startswith("# fracbridge-csv v")
    header, rows = read_csv(tmp_path / "simulate.csv")
    assert header == ["t", "y1"] and len(rows) == 65
    assert float(rows[0][1]) == 0.0


@pytest.mark.parametrize("kind", cli.SIM_KINDS)
def test_simulate_kinds(tmp_path, kind):
    assert run(tmp_path, "simulate", "--set", f"kind={kind}", "--set", "hurst=0.7", "--set", "n_steps=20") == 0
    _, rows = read_csv(tmp_path / "simulate.csv")
    assert len(rows) == 21


def test_density_zero_drift(tmp_path):
    assert run(tmp_path, "density", "--set", "drift=zero", "--set", "y_list=-1;0;2") == 0
    header, rows = read_csv(tmp_path / "density.csv")
    assert header == ["H", "drift", "lambda", "y1", "T", "value", "stderr", "n_paths", "ess", "flags"]
    assert len(rows) == 3 and all(float(r[6]) == 0.0 for r in rows)


def test_density_needs_y_list(tmp_path, capsys):
    assert run(tmp_path, "density") == 2
    assert "y_list" in capsys.readouterr().err


def test_bad_hurst_names_field(tmp_path, capsys):
    assert run(tmp_path, "simulate", "--set", "hurst=1.2") == 2
    assert "hurst" in capsys.readouterr().err


def test_unknown_setting_and_drift(tmp_path, capsys):
    assert run(tmp_path, "simulate", "--set", "hurts=0.3") == 2
    assert "hurts" in capsys.readouterr().err
    assert run(tmp_path, "simulate", "--set", "drift=cubic") == 2
    assert "drift" in capsys.readouterr().err


def test_config_file_and_echo_roundtrip(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# demo\nhurst = 0.7\ndrift = tanh_well  # double well\ny_list = -1;0;1\nn_paths = 200\n")
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["density", "--config", str(cfg), "--seed", "4", "--out", str(a)]) == 0
    assert cli.main(["density", "--config", str(a / "density.csv"), "--out", str(b)]) == 0
    assert (a / "density.csv").read_bytes() == (b / "density.csv").read_bytes()
    assert "# cfg: seed = 4" in (a / "density.csv").read_text()


def test_workers_do_not_change_output(tmp_path):
    args = ["transition", "--set", "hurst=0.7", "--set", "y_list=0;1", "--set", "n_outer=60",
            "--set", "n_inner=40", "--set", "n_steps=30"]
    assert cli.main(args + ["--workers", "1", "--out", str(tmp_path / "w1")]) == 0
    assert cli.main(args + ["--workers", "3", "--out", str(tmp_path / "w3")]) == 0
    assert (tmp_path / "w1/transition.csv").read_bytes() == (tmp_path / "w3/transition.csv").read_bytes()


def test_validate_exit_codes(tmp_path, capsys):
    assert run(tmp_path, "validate", "nonsense") == 2
    err = capsys.readouterr().err
    assert all(name in err for name in cli.V.EXPERIMENTS)
    assert run(tmp_path, "validate", "chapman_kolmogorov", "--set", "n_outer=500", "--set", "n_inner=50") == 0
    rep = json.loads((tmp_path / "validate_chapman_kolmogorov.json").read_text())
    assert rep["verdict"] == "pass" and list(rep) == sorted(rep)


def test_validate_failure_exit_code(tmp_path, monkeypatch):
    fail = cli.V.ExperimentReport("chapman_kolmogorov", {}, {}, "fail")
    monkeypatch.setattr(cli, "run_experiment", lambda *a, **k: fail)
    assert run(tmp_path, "validate", "chapman_kolmogorov") == 1


def test_sweep_and_stationary(tmp_path):
    base = ["--set", "y_list=0", "--set", "n_outer=30", "--set", "n_inner=30", "--set", "n_steps=20"]
    assert run(tmp_path, "stationary", *base) == 0
    _, rows = read_csv(tmp_path / "stationary.csv")
    assert len(rows) == 1 and float(rows[0][5]) > 0
    assert run(tmp_path, "sweep", *base) == 2
    assert run(tmp_path, "sweep", *base, "--set", "drift=parametric_linear") == 0
    _, fd = read_csv(tmp_path / "sweep_fd.csv")
    assert len(fd) == 1


def test_parametric_requires_lam(tmp_path, capsys):
    assert run(tmp_path, "simulate", "--set", "drift=parametric_linear") == 2
    assert "lam" in capsys.readouterr().err
    assert run(tmp_path, "simulate", "--set", "drift=parametric_linear", "--set", "lam=2") == 0


def test_module_entry_point():
    import subprocess, sys
    r = subprocess.run([sys.executable, "-m", "fracbridge", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "simulate" in r.stdout
