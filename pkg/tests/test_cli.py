from __future__ import annotations

import csv
import subprocess
import sys
from pathlib import Path

import pytest

from fictplay.cli import compare_dirs, main

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


@pytest.fixture
def out_root(tmp_path, monkeypatch):
    monkeypatch.setenv("FICTPLAY_OUTPUT_ROOT", str(tmp_path))
    return tmp_path


def _a_column(path: Path) -> list[float]:
    with open(path) as fh:
        return [float(row["a_n"]) for row in csv.DictReader(fh)]


@pytest.mark.parametrize("name", ["parabolic_trivial", "first_order_trivial"])
def test_trivial_runs_converge(name, out_root, capsys):
    assert main(["run", str(CONFIGS / f"{name}.yaml")]) == 0
    run_dir = out_root / "out" / name
    a = _a_column(run_dir / "iterations.csv")
    assert len(a) == 2
    assert all(abs(v) <= 1e-12 for v in a[1:])
    for f in ("report.json", "density_final.csv", "phi.svg", "a_n.svg", "density_heatmap.svg"):
        assert (run_dir / f).exists()
    assert "exit code 0" in capsys.readouterr().out


def test_malformed_config_names_field(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("mode: parabolic\ngrid: {points_per_dim: 16}\ntime: {K: auto}\ncoupling_f: {offset: 0}\ncoupling_g: {offset: 0}\n")
    assert main(["run", str(cfg)]) == 1
    assert "time.T" in capsys.readouterr().err


def test_not_converged_exit_code(tmp_path, out_root):
    cfg = tmp_path / "short.yaml"
    cfg.write_text(
        "mode: first_order\ngrid: {points_per_dim: 16}\ntime: {T: 1.0, K: 8}\n"
        "coupling_f: {cosine: [1.0, 0.5]}\ncoupling_g: {cosine: [1.0, 0.5]}\n"
        "m0: {kind: cosine, amplitude: 0.5}\nplay: {n_max: 3, tol_a: 1.0e-14}\noutput: {directory: short}\n"
    )
    assert main(["run", str(cfg)]) == 2


def test_compare_and_determinism(tmp_path, monkeypatch, capsys):
    dirs = []
    for tag in ("a", "b"):
        monkeypatch.setenv("FICTPLAY_OUTPUT_ROOT", str(tmp_path / tag))
        assert main(["run", str(CONFIGS / "first_order_trivial.yaml")]) == 0
        dirs.append(tmp_path / tag / "out" / "first_order_trivial")
    for f in ("iterations.csv", "density_final.csv", "trajectories.txt", "density_heatmap.svg"):
        assert (dirs[0] / f).read_bytes() == (dirs[1] / f).read_bytes()
    assert compare_dirs(*dirs)["sup_t_d1"] == 0.0
    capsys.readouterr()
    assert main(["compare", str(dirs[0]), str(dirs[1])]) == 0
    assert "sup_t d1 = 0.000000e+00" in capsys.readouterr().out
    assert main(["compare", str(dirs[0]), str(tmp_path / "nowhere")]) == 1


def test_selftest_subprocess():
    proc = subprocess.run([sys.executable, "-m", "fictplay", "selftest"], capture_output=True, text=True, cwd=ROOT)
    assert proc.returncode == 0, proc.stdout + proc.stderr
    assert proc.stdout.count("[PASS]") == 3
