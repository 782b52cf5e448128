"""The numba kernels and their numpy twins must agree; the env flag must select numpy."""

from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest

from conftest import random_density, random_flow
from fictplay import kernels
from fictplay._accel import HAS_NUMBA
from fictplay.geometry import TimeGrid, TorusGrid
from fictplay.hamiltonian import HamiltonianSpec
from fictplay.hjb import HjbScheme, min_steps
from fictplay.trajectory import ControlSet, FirstOrderProblem
from fictplay.coupling import ConvolutionCoupling

needs_numba = pytest.mark.skipif(not HAS_NUMBA, reason="numba not importable")


def _setup(dim, n, rng):
    grid = TorusGrid(dim, n)
    scheme = HjbScheme(theta=6.0)
    time = TimeGrid(0.05, min_steps(grid, 0.05, scheme))
    spec = HamiltonianSpec.from_fourier(grid, [0.3] * dim, cos=[0.4], sin=[-0.2])
    plus, minus = grid.neighbors
    f = rng.normal(size=(time.K + 1, grid.n_cells))
    g = rng.normal(size=grid.n_cells)
    return grid, scheme, time, spec, plus, minus, f, g


@needs_numba
@pytest.mark.parametrize("dim,n", [(1, 16), (2, 6)])
def test_pde_kernel_parity(rng, dim, n):
    grid, scheme, time, spec, plus, minus, f, g = _setup(dim, n, rng)
    args = (spec.drift, plus, minus, grid.h, time.dt, scheme.nu(grid))
    u_nb = kernels.hjb_backward(f, g, *args, use_numba=True)
    u_np = kernels.hjb_backward(f, g, *args, use_numba=False)
    assert np.max(np.abs(u_nb - u_np)) <= 1e-12
    m0 = random_density(rng, grid)
    src = rng.normal(size=(time.K, grid.n_cells)) * 0.01
    for source in (None, src):
        m_nb, w_nb = kernels.fp_forward(m0, u_nb, *args, source=source, use_numba=True)
        m_np, w_np = kernels.fp_forward(m0, u_nb, *args, source=source, use_numba=False)
        assert np.max(np.abs(m_nb - m_np)) <= 1e-12 and np.max(np.abs(w_nb - w_np)) <= 1e-12
    for use in (True, False):
        assert kernels.hjb_residual(u_nb, f, g, *args, use_numba=use) <= 1e-8
    r = [kernels.fp_residual(u_nb, m_nb * 1.001, m0, *args, use_numba=use) for use in (True, False)]
    assert r[0] == pytest.approx(r[1], rel=1e-12)
    c = [kernels.continuity_defect(m_nb, w_nb + 0.01, plus, minus, grid.h, time.dt, scheme.nu(grid), use_numba=use) for use in (True, False)]
    assert c[0] == pytest.approx(c[1], rel=1e-12) and c[0] > 0


@needs_numba
def test_bellman_kernel_parity(rng):
    grid = TorusGrid(1, 12)
    time = TimeGrid(1.0, 6)
    spec = HamiltonianSpec.from_fourier(grid, 0.2, cos=[0.3])
    cf = ConvolutionCoupling.from_cosine(grid, [1.0, 0.5])
    problem = FirstOrderProblem(grid, time, spec, cf, cf, ControlSet(grid, time, 2), random_density(rng, grid))
    f = rng.normal(size=(time.K + 1, grid.n_cells))
    g = rng.normal(size=grid.n_cells)
    u1, p1 = kernels.bellman(f, g, problem.step_cost, problem.controls.targets, time.dt, use_numba=True)
    u2, p2 = kernels.bellman(f, g, problem.step_cost, problem.controls.targets, time.dt, use_numba=False)
    assert np.array_equal(u1, u2) and np.array_equal(p1, p2)
    # Ties resolve to the lowest control index on both paths.
    flat = np.zeros_like(f)
    _, pa = kernels.bellman(flat, np.zeros(12), np.zeros_like(problem.step_cost), problem.controls.targets, 1.0, use_numba=True)
    _, pb = kernels.bellman(flat, np.zeros(12), np.zeros_like(problem.step_cost), problem.controls.targets, 1.0, use_numba=False)
    assert np.all(pa == 0) and np.all(pb == 0)


def test_env_flag_selects_numpy_path():
    code = "import fictplay._accel as a, fictplay.kernels as k; print(a.USE_NUMBA)"
    env = dict(os.environ, FICTPLAY_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "False"
    env["FICTPLAY_DISABLE_NUMBA"] = "0"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == str(HAS_NUMBA)


def test_benchmark_script_runs(tmp_path):
    import importlib.util
    import json
    from pathlib import Path

    path = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"
    spec = importlib.util.spec_from_file_location("bench_kernels", path)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    out = tmp_path / "bench.json"
    assert mod.main(["--repeat", "1", "--json", str(out)]) == 0
    rows = json.loads(out.read_text())
    assert len(rows) == 3 and all(r["max_abs_diff"] <= 1e-12 for r in rows)
