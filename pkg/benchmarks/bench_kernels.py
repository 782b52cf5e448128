"""Wall-clock comparison of the numba kernels against the pure-numpy fallback.

Usage::

    python benchmarks/bench_kernels.py [--repeat 3] [--json out.json]

Each kernel is run once on both paths to check agreement (and to trigger
numba compilation), then timed ``--repeat`` times; the best time is reported.
"""

from __future__ import annotations

import argparse
import json
import time
from pathlib import Path

import numpy as np

from fictplay import kernels
from fictplay._accel import HAS_NUMBA
from fictplay.config import load_config
from fictplay.coupling import eval_f

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _best(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def _cases():
    cfg = load_config(CONFIGS / "parabolic_reference.yaml")
    p = cfg.parabolic_problem()
    grid, t = p.grid, p.time
    belief = p.constant_flow(p.m0)
    f, g = eval_f(p.coupling_f, belief), eval_f(p.coupling_g, belief[-1])
    plus, minus = grid.neighbors
    nu = p.scheme.nu(grid)
    drift = p.spec.drift
    u = kernels.hjb_backward(f, g, drift, plus, minus, grid.h, t.dt, nu)
    label = f"Nx={grid.n_cells}, K={t.K}"
    yield f"hjb_backward ({label})", lambda nb: kernels.hjb_backward(f, g, drift, plus, minus, grid.h, t.dt, nu, use_numba=nb)
    yield f"fp_forward ({label})", lambda nb: kernels.fp_forward(p.m0, u, drift, plus, minus, grid.h, t.dt, nu, use_numba=nb)[0]

    fo = load_config(CONFIGS / "first_order_reference.yaml").first_order_problem()
    mflow = fo.constant_flow(fo.m0)
    ff, gg = eval_f(fo.coupling_f, mflow), eval_f(fo.coupling_g, mflow[-1])
    label = f"Nx={fo.grid.n_cells}, K={fo.time.K}, controls={fo.controls.size}"
    yield f"bellman ({label})", lambda nb: kernels.bellman(ff, gg, fo.step_cost, fo.controls.targets, fo.time.dt, use_numba=nb)[0]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--json", type=Path, default=None, help="also write the timings as JSON")
    args = parser.parse_args(argv)
    if not HAS_NUMBA:
        print("numba is not installed; only the numpy path can run")
        return 1
    rows = []
    print(f"{'kernel':<52} {'numpy s':>9} {'numba s':>9} {'speedup':>8} {'max diff':>9}")
    for name, run in _cases():
        diff = float(np.max(np.abs(run(True) - run(False))))
        t_np = _best(lambda: run(False), args.repeat)
        t_nb = _best(lambda: run(True), args.repeat)
        rows.append({"kernel": name, "numpy_s": t_np, "numba_s": t_nb, "speedup": t_np / t_nb, "max_abs_diff": diff})
        print(f"{name:<52} {t_np:9.4f} {t_nb:9.4f} {t_np / t_nb:8.1f} {diff:9.1e}")
    if args.json:
        args.json.write_text(json.dumps(rows, indent=2) + "\n")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
