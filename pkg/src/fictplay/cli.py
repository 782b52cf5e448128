"""Command line interface: ``run``, ``compare`` and ``selftest``.

Exit codes of ``run``: 0 when every run converged, 2 when some run hit
``n_max`` first, 1 on any error (bad config, solver failure, I/O).
"""

from __future__ import annotations

import argparse
import logging
import re
import sys
import time as _time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config
from .diagnostics import PlayReport
from .errors import FictPlayError, ValidationError
from .geometry import TorusGrid, d1_per_slice, sup_t_d1
from .io import emit_outputs, read_density_csv, write_json
from .nplayer import compare_to_mfg, place_players, run_nplayer
from .parabolic import run_parabolic
from .trajectory import run_first_order

log = logging.getLogger("fictplay")

EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2


def _summary(report: PlayReport, cfg: RunConfig, extra: dict | None = None) -> dict:
    rec = report.records[-1]
    positive = [r.a_n for r in report.records if r.a_n > 0]
    out = {
        "name": cfg.name,
        "mode": report.mode,
        "converged": report.converged,
        "stop_reason": report.stop_reason,
        "iterations": report.n_iterations,
        "grid": {"dim": report.grid.dim, "points_per_dim": report.grid.points_per_dim, "h": report.grid.h},
        "time": {"T": report.time.T, "K": report.time.K, "dt": report.time.dt},
        "final": {"phi": rec.phi, "a_n": rec.a_n, "residual_hjb": rec.residual_hjb, "residual_fp": rec.residual_fp},
        "first_positive_a": positive[0] if positive else 0.0,
        "phi_first": report.records[0].phi,
        "tol_a": cfg.tol_a,
        "summary": report.summary,
        "checks": {f"max_{k}" if k != "min_density" else k: (min(v) if k == "min_density" else max(v)) for k, v in report.checks.items() if v},
    }
    if extra:
        out.update(extra)
    return out


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", text).strip("_") or "seed"


def _write_trajectories(path: Path, trajectories) -> None:
    lines = [f"{t.start} {t.as_string()}" for t in trajectories]
    path.write_text("\n".join(lines) + "\n")


def _run_seeds(cfg: RunConfig, runner, wall_times: list[float]) -> tuple[list[PlayReport], dict]:
    reports = []
    for _, belief in cfg.seed_beliefs():
        t0 = _time.perf_counter()
        reports.append(runner(belief))
        wall_times.append(_time.perf_counter() - t0)
    extra = {"seeds": [str(s) for s in cfg.seeds]}
    if len(reports) > 1:
        grid = reports[0].grid
        extra["seed_sup_d1"] = [sup_t_d1(reports[0].belief, r.belief, grid) for r in reports[1:]]
        extra["uniqueness_tol"] = 2 * grid.h
    return reports, extra


@dataclass
class RunOutcome:
    """Exit code plus the in-memory reports behind the written files."""

    code: int
    reports: list[PlayReport] = field(default_factory=list)
    mfg: PlayReport | None = None
    ladder: list[dict] = field(default_factory=list)
    wall_times: list[float] = field(default_factory=list)


def execute(cfg: RunConfig) -> int:
    return run_config(cfg).code


def run_config(cfg: RunConfig) -> RunOutcome:
    out = cfg.output_path()
    stride = cfg.density_stride
    started = _time.perf_counter()
    wall_times: list[float] = []
    if cfg.mode in ("parabolic", "first_order"):
        if cfg.mode == "parabolic":
            problem = cfg.parabolic_problem()
            log.info("parabolic run: N=%d K=%d theta=%.4g", cfg.grid.n_cells, problem.time.K, problem.scheme.theta)
            runner = lambda b: run_parabolic(problem, cfg.n_max, cfg.tol_a, cfg.sustain, initial_belief=b)  # noqa: E731
        else:
            problem = cfg.first_order_problem()
            log.info("first-order run: N=%d K=%d J_max=%d", cfg.grid.n_cells, problem.time.K, problem.controls.j_max)
            runner = lambda b: run_first_order(problem, cfg.n_max, cfg.tol_a, cfg.sustain, initial_belief=b, bank_cap=cfg.bank_cap)  # noqa: E731
        reports, extra = _run_seeds(cfg, runner, wall_times)
        for i, (seed, report) in enumerate(zip(cfg.seeds, reports)):
            target = out if i == 0 else out / "seeds" / f"{i}_{_slug(str(seed))}"
            emit_outputs(report, target, _summary(report, cfg, extra if i == 0 else {"seed": str(seed)}), cfg.emit_plots, stride)
            if cfg.mode == "first_order":
                state = report.extras["state"]
                br = state.best_response
                trajs = [br.trajectory(problem, s) for s in range(problem.grid.n_cells)]
                _write_trajectories(target / "trajectories.txt", trajs)
        converged = all(r.converged for r in reports)
        for seed, r in zip(cfg.seeds, reports):
            print(f"seed {seed}: {r.stop_reason} after {r.n_iterations} iterations, a_n = {r.records[-1].a_n:.3e}")
        if "seed_sup_d1" in extra:
            print(f"sup_t d1 between seed limits: {max(extra['seed_sup_d1']):.3e} (tolerance {extra['uniqueness_tol']:.3e})")
    else:
        problem = cfg.first_order_problem()
        mfg = run_first_order(problem, cfg.n_max, cfg.tol_a, cfg.sustain, bank_cap=cfg.bank_cap)
        emit_outputs(mfg, out / "mfg", _summary(mfg, cfg), cfg.emit_plots, stride)
        ladder, reports = [], []
        converged = mfg.converged
        for N in cfg.n_ladder:
            players = place_players(problem.m0, N, problem.grid, cfg.placement, cfg.rng_seed)
            rep = run_nplayer(problem, players, cfg.n_max, cfg.tol_a, cfg.sustain, cfg.bank_cap)
            dist = compare_to_mfg(rep, mfg)
            reports.append(rep)
            target = out / f"N{N}"
            emit_outputs(rep, target, _summary(rep, cfg, {"distance_to_mfg": dist}), cfg.emit_plots, stride)
            _write_trajectories(target / "trajectories.txt", rep.extras["trajectories"])
            ladder.append({"N": N, "distance_to_mfg": dist, "d1_initial": rep.summary["d1_initial"], "converged": rep.converged, "iterations": rep.n_iterations})
            converged = converged and rep.converged
            print(f"N={N}: sup_t d1 to mean-field limit {dist:.4e} (initial d1 {rep.summary['d1_initial']:.4e}), {rep.stop_reason} after {rep.n_iterations}")
        write_json({"name": cfg.name, "mode": "nplayer", "placement": cfg.placement, "seed": cfg.rng_seed, "converged": converged, "ladder": ladder}, out / "report.json")
    code = EXIT_OK if converged else EXIT_NOT_CONVERGED
    print(f"outputs in {out} ({_time.perf_counter() - started:.1f} s), exit code {code}")
    if cfg.mode == "nplayer":
        return RunOutcome(code, reports, mfg, ladder)
    return RunOutcome(code, reports, wall_times=wall_times)


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    return execute(cfg)


def _grid_from_coords(coords: np.ndarray) -> TorusGrid:
    dim = coords.shape[1]
    n = int(round(coords.shape[0] ** (1.0 / dim)))
    if n**dim != coords.shape[0]:
        raise ValidationError("density file does not describe a full periodic grid")
    return TorusGrid(dim, n)


def compare_dirs(dir_a, dir_b) -> dict:
    ta, ca, fa = read_density_csv(Path(dir_a) / "density_final.csv")
    tb, cb, fb = read_density_csv(Path(dir_b) / "density_final.csv")
    if ca.shape != cb.shape or not np.array_equal(ca, cb) or not np.array_equal(ta, tb):
        raise ValidationError("runs use different grids or saved time slices")
    grid = _grid_from_coords(ca)
    per_slice = d1_per_slice(fa, fb, grid)
    k = int(np.argmax(per_slice))
    return {"sup_t_d1": float(per_slice[k]), "argmax_t": float(ta[k]), "h": grid.h, "slices": len(ta)}


def cmd_compare(args) -> int:
    result = compare_dirs(args.dir_a, args.dir_b)
    print(f"sup_t d1 = {result['sup_t_d1']:.6e} at t = {result['argmax_t']:.6g} over {result['slices']} slices (h = {result['h']:.6g})")
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .oracles import run_selftest

    results = run_selftest(args.seed)
    for r in results:
        print(f"[{'PASS' if r.passed else 'FAIL'}] {r.name}: {r.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_ERROR


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fictplay", description="Fictitious play for potential mean-field games on the torus.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run a configured experiment")
    p.add_argument("config", help="YAML run configuration")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("compare", help="sup_t d1 between the final beliefs of two run directories")
    p.add_argument("dir_a")
    p.add_argument("dir_b")
    p.set_defaults(func=cmd_compare)
    p = sub.add_parser("selftest", help="check fast paths against brute-force oracles")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FictPlayError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
