import json
import subprocess
import sys

import pytest

from savanna.cli import main
from savanna.io import read_csv, read_pgm
from savanna.lattice import read_pbm


def _csv(path):
    header, rows = read_csv(path)
    return [dict(zip(header, r)) for r in rows]


def test_meanfield(tmp_path, oracle):
    assert main(["meanfield", "--out", str(tmp_path), "--sweep", "5,8"]) == 0
    rows = {r["quantity"]: r["value"] for r in _csv(tmp_path / "meanfield.csv")}
    assert float(rows["theta0"]) == pytest.approx(3.4939, abs=1e-3)
    sweep = _csv(tmp_path / "sweep.csv")
    assert [float(r["theta"]) for r in sweep] == [5.0, 8.0]
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["subcommand"] == "meanfield" and set(man["outputs"]) == {"meanfield.csv", "sweep.csv"}
    assert {"numpy", "numba", "python"} <= set(man["versions"])


def test_invalid_input_exits_2_without_artifacts(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["simulate", "--out", str(out), "--L", "-3"]) == 2
    assert not out.exists()
    assert "error" in capsys.readouterr().err
    assert main(["simulate", "--out", str(out), "--set", "nonsense=1"]) == 2
    assert main(["meanfield", "--out", str(out), "--set", "model.alpha=-1"]) == 2
    assert not out.exists()


def test_unknown_subcommand():
    with pytest.raises(SystemExit) as e:
        main(["nope"])
    assert e.value.code == 2


def test_simulate_manifest_round_trip(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["--L", "6", "--M", "2", "--t_end", "1", "--snapshots", "0.5,1", "--seed", "11"]
    assert main(["simulate", "--out", str(a), *args]) == 0
    assert main(["simulate", "--out", str(b), "--config", str(a / "manifest.json")]) == 0
    man = json.loads((a / "manifest.json").read_text())
    assert man["seed"] == 11
    for name in man["outputs"]:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    snap = read_pbm(a / "snap_t1.pbm")
    assert snap.shape == (12, 12)
    c = tmp_path / "c"
    assert main(["simulate", "--out", str(c), "--config", str(a / "manifest.json"), "--seed", "12"]) == 0
    assert (c / "density.csv").read_bytes() != (a / "density.csv").read_bytes()


def test_config_file_and_set(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("L: 5\nM: 2\nt_end: 0.5\nseed: 4\n")
    out = tmp_path / "o"
    assert main(["simulate", "--out", str(out), "--config", str(cfg), "--set", "init.density=1.0"]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 4 and man["config"]["L"] == 5 and man["config"]["init"]["density"] == 1.0


def test_ide_writes_pgm(tmp_path):
    assert main(["ide", "--out", str(tmp_path / "bad"), "--M", "2"]) == 2
    assert main(["ide", "--out", str(tmp_path), "--M", "3", "--h", "0.1", "--t_end", "1",
                 "--set", "snapshots=[1.0]"]) == 0
    img = read_pgm(tmp_path / "ide_t1.pgm")
    assert img.shape == (30, 30)
    dens = _csv(tmp_path / "density.csv")
    assert float(dens[-1]["density"]) == pytest.approx(img.mean(), abs=0.01)


def test_percolation_and_dual_smoke(tmp_path):
    assert main(["percolation", "--out", str(tmp_path / "p"), "--widths", "4,8", "--reps", "20",
                 "--n_max", "2000"]) == 0
    rows = _csv(tmp_path / "p" / "percolation.csv")
    assert [int(r["width"]) for r in rows] == [4, 8]
    assert main(["dual", "--out", str(tmp_path / "x"), "--reps", "10"]) == 2
    assert main(["dual", "--out", str(tmp_path / "d"), "--L", "4,8", "--reps", "1000", "--t", "1"]) == 0
    assert len(_csv(tmp_path / "d" / "dual.csv")) == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "savanna", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "hetero" in res.stdout


def test_hetero_and_survival_smoke(tmp_path):
    h = tmp_path / "h"
    assert main(["hetero", "--out", str(h), "--L", "8", "--M", "4", "--t0", "2", "--t_cap", "4", "--seed", "1"]) == 0
    summary = _csv(h / "summary.csv")[0]
    assert summary["boundary_status"] == "ok"
    assert read_pgm(h / "density_t4.pgm").shape == (32, 32)
    s = tmp_path / "s"
    assert main(["survival", "--out", str(s), "--M", "2", "--L", "6", "--reps", "3", "--t0", "2",
                 "--t_cap", "4"]) == 0
    assert [r["M"] for r in _csv(s / "survival.csv")] == ["2"]
