"""Fictitious play with finitely many players.

The N players start on grid cells and all face the same belief, so they
share one Bellman table; players on the same cell follow the same curve
(the tie-break is deterministic).  The loop is therefore the first-order
loop with ``m0`` replaced by the empirical measure of the players.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import PlayReport
from .errors import ValidationError
from .geometry import TorusGrid, d1_distance, d1_per_slice
from .trajectory import FirstOrderProblem, Trajectory, run_first_order


@dataclass(frozen=True)
class PlayerSet:
    grid: TorusGrid
    cells: np.ndarray = field(repr=False)
    mode: str = "quantile"
    seed: int | None = None

    @property
    def N(self) -> int:
        return len(self.cells)

    @property
    def empirical(self) -> np.ndarray:
        """Density of ``(1/N) sum_i delta_{x_i}``."""
        counts = np.bincount(self.cells, minlength=self.grid.n_cells)
        return counts / (self.N * self.grid.cell_volume)


def _marginal_quantiles(density_1d, n_points, h) -> np.ndarray:
    # Cell i carries its mass uniformly on [i h, (i+1) h): the CDF is piecewise linear.
    mass = density_1d * h
    edges = np.concatenate([[0.0], np.cumsum(mass)])
    edges /= edges[-1]
    xs = np.arange(len(mass) + 1) * h
    levels = np.arange(1, n_points + 1) / (n_points + 1)
    return np.interp(levels, edges, xs)


def place_players(m0, N: int, grid: TorusGrid, mode: str = "quantile", seed: int | None = None) -> PlayerSet:
    """Put ``N`` players on grid cells.

    ``quantile`` snaps the ``i/(N+1)``-quantiles of ``m0`` to the nearest node
    (in 2D: product of the marginal quantiles, ``N`` must be a square).
    ``iid`` draws cells from ``m0`` with a counter-based generator seeded by ``seed``.
    """
    if int(N) != N or N < 1:
        raise ValidationError(f"N must be a positive integer, got {N}")
    m0 = np.asarray(m0, dtype=float)
    n = grid.points_per_dim
    if mode == "quantile":
        if grid.dim == 1:
            x = _marginal_quantiles(m0, N, grid.h)
            cells = np.mod(np.rint(x / grid.h).astype(np.int64), n)
        else:
            side = int(round(np.sqrt(N)))
            if side * side != N:
                raise ValidationError(f"two-dimensional quantile placement needs a square N, got {N}")
            dens = m0.reshape(grid.shape)
            qx = _marginal_quantiles(dens.sum(axis=1) * grid.h, side, grid.h)
            qy = _marginal_quantiles(dens.sum(axis=0) * grid.h, side, grid.h)
            ix = np.mod(np.rint(qx / grid.h).astype(np.int64), n)
            iy = np.mod(np.rint(qy / grid.h).astype(np.int64), n)
            cells = (ix[:, None] * n + iy[None, :]).reshape(-1)
        return PlayerSet(grid, np.sort(cells), mode="quantile")
    if mode == "iid":
        if seed is None:
            raise ValidationError("iid placement needs a seed")
        rng = np.random.Generator(np.random.Philox(int(seed)))
        p = m0 * grid.cell_volume
        cells = rng.choice(grid.n_cells, size=int(N), p=p / p.sum())
        return PlayerSet(grid, np.sort(cells.astype(np.int64)), mode="iid", seed=int(seed))
    raise ValidationError(f"unknown placement mode {mode!r}")


def nplayer_problem(problem: FirstOrderProblem, players: PlayerSet) -> FirstOrderProblem:
    return dataclasses.replace(problem, m0=players.empirical)


def run_nplayer(problem: FirstOrderProblem, players: PlayerSet, n_max: int = 200, tol_a: float = 1e-4, sustain: int = 5, bank_cap: int = 0) -> PlayReport:
    """First-order fictitious play started from the players' empirical measure."""
    sub = nplayer_problem(problem, players)
    report = run_first_order(sub, n_max=n_max, tol_a=tol_a, sustain=sustain, bank_cap=bank_cap, mode="nplayer")
    state = report.extras["state"]
    br = state.best_response
    _, ctrl = br.rollout(sub, players.cells)
    disp = sub.controls.displacements
    report.extras["players"] = players
    report.extras["trajectories"] = [Trajectory(int(c), disp[ctrl[i]]) for i, c in enumerate(players.cells)]
    report.summary["N"] = players.N
    report.summary["d1_initial"] = d1_distance(players.empirical, problem.m0, problem.grid)
    return report


def compare_to_mfg(nplayer_report: PlayReport, mfg_report: PlayReport) -> float:
    """``sup_t d1`` between the N-player limit belief and the mean-field limit belief."""
    if nplayer_report.grid != mfg_report.grid or nplayer_report.time != mfg_report.time:
        raise ValidationError("N-player and mean-field runs use different grids")
    return float(np.max(d1_per_slice(nplayer_report.belief, mfg_report.belief, mfg_report.grid)))
