"""Brute-force reference computations.

These are deliberately slow and structurally different from the production
code paths: explicit double loops, exhaustive enumeration of control
sequences, linear programs and grid searches.  ``fictplay selftest`` runs
them against the fast implementations.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .coupling import ConvolutionCoupling
from .geometry import TimeGrid, TorusGrid, d1_distance, d1_distance_lp, normalize_density
from .hamiltonian import HamiltonianSpec, lagrangian, legendre, legendre_numeric
from .trajectory import ControlSet, FirstOrderProblem, bellman_best_response


def naive_convolution(coupling: ConvolutionCoupling, m) -> np.ndarray:
    """``sum_y rho(x - y) m(y) h^d + offset`` by an explicit double loop."""
    grid = coupling.grid
    idx = grid.multi_index
    out = np.empty(grid.n_cells)
    for i in range(grid.n_cells):
        acc = 0.0
        for j in range(grid.n_cells):
            acc += coupling.kernel[int(grid.flat_index(idx[i] - idx[j]))] * m[j]
        out[i] = acc * grid.cell_volume + coupling.offset
    return out


def sequence_cost(problem: FirstOrderProblem, start: int, seq, f_field, g_field) -> float:
    """Cost of applying the control indices ``seq`` from ``start``, summed forward."""
    grid, dt = problem.grid, problem.time.dt
    vel = problem.controls.velocities
    disp = problem.controls.displacements
    pos = grid.multi_index[start].copy()
    total = 0.0
    for k, c in enumerate(seq):
        cell = int(grid.flat_index(pos))
        total += dt * (float(lagrangian(problem.spec, cell, vel[c])) + f_field[k, cell])
        pos = pos + disp[c]
    return total + g_field[int(grid.flat_index(pos))]


def enumerate_best_response(m, problem: FirstOrderProblem, f_field=None, g_field=None):
    """Optimal cost and control sequence from every start cell by exhaustive search.

    Returns ``(values, sequences, gaps)`` where ``gaps[s]`` is the distance
    between the best and the second-best cost (to recognize genuine ties).
    """
    from .coupling import eval_f

    m = np.asarray(m, dtype=float)
    f_field = eval_f(problem.coupling_f, m) if f_field is None else f_field
    g_field = eval_f(problem.coupling_g, m[-1]) if g_field is None else g_field
    K = problem.time.K
    all_seqs = list(itertools.product(range(problem.controls.size), repeat=K))
    values, seqs, gaps = [], [], []
    for s in range(problem.grid.n_cells):
        costs = np.array([sequence_cost(problem, s, q, f_field, g_field) for q in all_seqs])
        order = np.argsort(costs, kind="stable")
        values.append(costs[order[0]])
        seqs.append(all_seqs[order[0]])
        gaps.append(costs[order[1]] - costs[order[0]] if len(order) > 1 else np.inf)
    return np.array(values), np.array(seqs), np.array(gaps)


def exhaustive_exploitability(curves, weights, mbar, problem: FirstOrderProblem) -> float:
    """``int J d eta - min_theta int J d theta`` over all strategy assignments.

    ``curves`` lists, per realized strategy, a control sequence for every start
    cell; ``eta`` is their uniform average and the belief is ``mbar``.  The
    minimum ranges over every assignment of a control sequence to each start
    cell, enumerated jointly.
    """
    from .coupling import eval_f

    f_field = eval_f(problem.coupling_f, mbar)
    g_field = eval_f(problem.coupling_g, mbar[-1])
    n = problem.grid.n_cells
    played = np.mean([sum(weights[s] * sequence_cost(problem, s, strat[s], f_field, g_field) for s in range(n)) for strat in curves])
    options = list(itertools.product(range(problem.controls.size), repeat=problem.time.K))
    table = np.array([[sequence_cost(problem, s, q, f_field, g_field) for q in options] for s in range(n)])
    best = np.inf
    for assignment in itertools.product(range(len(options)), repeat=n):
        best = min(best, sum(weights[s] * table[s, assignment[s]] for s in range(n)))
    return float(played - best)


def random_density(rng: np.random.Generator, grid: TorusGrid) -> np.ndarray:
    return normalize_density(rng.random(grid.n_cells) + 0.05, grid)


def random_small_problem(rng: np.random.Generator, n_cells: int = 5, K: int = 3) -> tuple[FirstOrderProblem, np.ndarray]:
    """Tiny first-order problem with random smooth couplings, drift and belief."""
    grid = TorusGrid(1, n_cells)
    time = TimeGrid(float(rng.uniform(0.5, 1.5)), K)
    f = ConvolutionCoupling.from_cosine(grid, rng.normal(size=3), offset=float(rng.normal()))
    g = ConvolutionCoupling.from_cosine(grid, rng.normal(size=3), offset=float(rng.normal()))
    spec = HamiltonianSpec.from_fourier(grid, float(rng.normal(scale=0.5)), cos=[float(rng.normal(scale=0.5))], sin=[float(rng.normal(scale=0.5))])
    controls = ControlSet(grid, time, 1)
    problem = FirstOrderProblem(grid, time, spec, f, g, controls, random_density(rng, grid))
    belief = np.stack([random_density(rng, grid) for _ in range(K + 1)])
    return problem, belief


# ---------------------------------------------------------------- selftest


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    detail: str


def bellman_suite(rng: np.random.Generator, trials: int = 50) -> SuiteResult:
    worst, mismatches = 0.0, 0
    for _ in range(trials):
        problem, belief = random_small_problem(rng, n_cells=int(rng.integers(3, 7)), K=int(rng.integers(1, 5)))
        br = bellman_best_response(belief, problem)
        values, seqs, gaps = enumerate_best_response(belief, problem, br.f_field, br.g_field)
        worst = max(worst, float(np.max(np.abs(br.value[0] - values))))
        _, ctrl = br.rollout(problem)
        mismatches += int(np.sum(np.any(ctrl != seqs, axis=1) & (gaps > 1e-12)))
    ok = worst <= 1e-12 and mismatches == 0
    return SuiteResult("bellman_vs_enumeration", ok, f"{trials} couplings, max value error {worst:.2e}, policy mismatches {mismatches}")


def d1_suite(rng: np.random.Generator, trials: int = 100, n: int = 16) -> SuiteResult:
    grid = TorusGrid(1, n)
    worst = 0.0
    for _ in range(trials):
        mu, nu = random_density(rng, grid), random_density(rng, grid)
        worst = max(worst, abs(d1_distance(mu, nu, grid) - d1_distance_lp(mu, nu, grid)))
    return SuiteResult("d1_vs_transport_lp", worst <= 1e-9, f"{trials} pairs on {n} cells, max error {worst:.2e}")


def legendre_suite(rng: np.random.Generator, trials: int = 100) -> SuiteResult:
    grid = TorusGrid(1, 8)
    worst = 0.0
    for _ in range(trials):
        spec = HamiltonianSpec.from_fourier(grid, float(rng.uniform(-1, 1)), cos=[float(rng.uniform(-1, 1))])
        x = int(rng.integers(grid.n_cells))
        q = rng.uniform(-5, 5, size=1)
        worst = max(worst, abs(float(legendre(spec, x, q)) - legendre_numeric(spec, x, q)))
    return SuiteResult("legendre_vs_grid_search", worst <= 1e-5, f"{trials} samples, max error {worst:.2e}")


def run_selftest(seed: int = 0) -> list[SuiteResult]:
    rng = np.random.default_rng(seed)
    return [bellman_suite(rng), d1_suite(rng), legendre_suite(rng)]
