"""First-order fictitious play on the space of grid trajectories.

Curves move by whole cells: each step applies an integer displacement ``j``
with ``|j|_inf <= J_max``, i.e. velocity ``v = j h / dt``.  Best responses
come from an exact backward Bellman recursion over these moves, and the
measure on curves is carried by sufficient statistics: the averaged density
flow ``mbar`` and the averaged kinetic cost ``kbar``.  Both the cost of a
curve and the potential depend on the curve measure only through these.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import kernels
from .coupling import ConvolutionCoupling, eval_f, potential_F
from .diagnostics import IterationRecord, PlayReport, StopRule
from .errors import DivergenceError, StalenessError, ValidationError
from .geometry import TimeGrid, TorusGrid, check_density, d1_per_slice, running_average
from .hamiltonian import HamiltonianSpec, lagrangian
from .hjb import gradient_upwind

log = logging.getLogger(__name__)

FIXED_POINT_TOL = 1e-13


def tie_break_order(j_max: int, dim: int) -> np.ndarray:
    """All displacements with ``|j|_inf <= j_max``, smallest L1 norm first, negatives first."""
    axis = range(-j_max, j_max + 1)
    disp = np.array(np.meshgrid(*([list(axis)] * dim), indexing="ij")).reshape(dim, -1).T
    order = sorted(range(len(disp)), key=lambda i: (int(np.abs(disp[i]).sum()), tuple(disp[i])))
    return disp[order]


@dataclass(frozen=True)
class ControlSet:
    """Admissible per-step displacements, in tie-break order (``0`` first)."""

    grid: TorusGrid
    time: TimeGrid
    j_max: int

    def __post_init__(self):
        if int(self.j_max) != self.j_max or self.j_max < 0:
            raise ValidationError(f"j_max must be a nonnegative integer, got {self.j_max}")

    @classmethod
    def from_speed(cls, grid: TorusGrid, time: TimeGrid, v_max: float) -> ControlSet:
        return cls(grid, time, int(math.ceil(v_max * time.dt / grid.h - 1e-12)))

    @cached_property
    def displacements(self) -> np.ndarray:
        return tie_break_order(self.j_max, self.grid.dim)

    @property
    def size(self) -> int:
        return len(self.displacements)

    @property
    def velocities(self) -> np.ndarray:
        return self.displacements * (self.grid.h / self.time.dt)

    @property
    def v_max(self) -> float:
        return self.j_max * self.grid.h / self.time.dt

    @cached_property
    def targets(self) -> np.ndarray:
        """``targets[c, i]``: cell reached from ``i`` with control ``c``."""
        return np.ascontiguousarray(np.stack([self.grid.shifted(d) for d in self.displacements]))

    def index_of(self, displacement) -> int:
        d = np.asarray(displacement, dtype=np.int64).reshape(self.grid.dim)
        hits = np.flatnonzero(np.all(self.displacements == d, axis=1))
        if hits.size == 0:
            raise ValidationError(f"displacement {d.tolist()} is not an admissible control")
        return int(hits[0])


def speed_bound(spec: HamiltonianSpec, coupling_f: ConvolutionCoupling, coupling_g: ConvolutionCoupling, T: float) -> float:
    """Crude a priori bound on optimal speeds: ``Lip(g) + T Lip(f) + |b|_inf + 1``."""
    return coupling_g.lipschitz + T * coupling_f.lipschitz + spec.sup_drift + 1.0


@dataclass(frozen=True)
class Trajectory:
    """A start cell and the displacement applied at each of the ``K`` steps."""

    start: int
    displacements: np.ndarray

    def cells(self, grid: TorusGrid) -> np.ndarray:
        steps = np.asarray(self.displacements, dtype=np.int64).reshape(-1, grid.dim)
        path = grid.multi_index[self.start] + np.vstack([np.zeros((1, grid.dim), dtype=np.int64), np.cumsum(steps, axis=0)])
        return grid.flat_index(path)

    def as_string(self) -> str:
        steps = np.asarray(self.displacements).reshape(len(self.displacements), -1)
        return " ".join(",".join(str(int(v)) for v in s) for s in steps)


@dataclass(frozen=True)
class FirstOrderProblem:
    grid: TorusGrid
    time: TimeGrid
    spec: HamiltonianSpec
    coupling_f: ConvolutionCoupling
    coupling_g: ConvolutionCoupling
    controls: ControlSet
    m0: np.ndarray = field(repr=False)

    def __post_init__(self):
        m0 = np.asarray(self.m0, dtype=float)
        if m0.shape != (self.grid.n_cells,):
            raise ValidationError("m0 must be a single density on the grid")
        check_density(m0, self.grid, "m0")
        object.__setattr__(self, "m0", m0)
        if self.controls.size == 0:
            raise ValidationError("empty control set")

    @cached_property
    def step_cost(self) -> np.ndarray:
        """``dt * L(x_i, v_c)`` for every control ``c`` and cell ``i``."""
        cells = np.arange(self.grid.n_cells)
        v = self.controls.velocities[:, None, :]
        return self.time.dt * lagrangian(self.spec, cells[None, :], np.broadcast_to(v, (self.controls.size, self.grid.n_cells, self.grid.dim)))

    @property
    def weights(self) -> np.ndarray:
        """Mass carried by the trajectory that starts in each cell."""
        return self.m0 * self.grid.cell_volume

    def constant_flow(self, density) -> np.ndarray:
        return np.tile(np.asarray(density, dtype=float), (self.time.K + 1, 1))


def cost_J(traj: Trajectory, m, problem: FirstOrderProblem) -> float:
    """``sum_k dt [L(x_k, v_k) + f(x_k, m_k)] + g(x_K, m_K)`` along ``traj``."""
    grid, time = problem.grid, problem.time
    steps = np.asarray(traj.displacements, dtype=np.int64).reshape(-1, grid.dim)
    if len(steps) != time.K:
        raise ValidationError(f"trajectory needs {time.K} steps, got {len(steps)}")
    ctrl = [problem.controls.index_of(s) for s in steps]
    cells = traj.cells(grid)
    m = np.asarray(m, dtype=float)
    f = eval_f(problem.coupling_f, m)
    total = 0.0
    for k in range(time.K):
        total += problem.step_cost[ctrl[k], cells[k]] + time.dt * f[k, cells[k]]
    return float(total + eval_f(problem.coupling_g, m[-1])[cells[-1]])


@dataclass(frozen=True)
class BestResponse:
    """Bellman value and policy against one belief flow.

    ``version`` identifies the belief (the iteration count of the state it
    was computed for), so stale tables can be rejected.
    """

    value: np.ndarray = field(repr=False)
    policy: np.ndarray = field(repr=False)
    f_field: np.ndarray = field(repr=False)
    g_field: np.ndarray = field(repr=False)
    version: int = -1

    def rollout(self, problem: FirstOrderProblem, starts=None) -> tuple[np.ndarray, np.ndarray]:
        """Cells ``(S, K+1)`` and control indices ``(S, K)`` of the optimal curves."""
        starts = np.arange(problem.grid.n_cells) if starts is None else np.asarray(starts, dtype=np.int64)
        K = problem.time.K
        cells = np.empty((len(starts), K + 1), dtype=np.int64)
        ctrl = np.empty((len(starts), K), dtype=np.int64)
        cells[:, 0] = starts
        targets = problem.controls.targets
        for k in range(K):
            c = self.policy[k, cells[:, k]]
            ctrl[:, k] = c
            cells[:, k + 1] = targets[c, cells[:, k]]
        return cells, ctrl

    def trajectory(self, problem: FirstOrderProblem, start: int) -> Trajectory:
        _, ctrl = self.rollout(problem, [start])
        return Trajectory(int(start), problem.controls.displacements[ctrl[0]])


def bellman_best_response(m, problem: FirstOrderProblem, version: int = -1) -> BestResponse:
    """Backward dynamic programming against the belief flow ``m``."""
    m = np.asarray(m, dtype=float)
    if m.shape != (problem.time.K + 1, problem.grid.n_cells):
        raise ValidationError(f"belief must have shape {(problem.time.K + 1, problem.grid.n_cells)}")
    f = eval_f(problem.coupling_f, m)
    g = eval_f(problem.coupling_g, m[-1])
    value, policy = kernels.bellman(f, g, problem.step_cost, problem.controls.targets, problem.time.dt)
    if not np.all(np.isfinite(value)):
        raise DivergenceError("Bellman recursion produced non-finite values")
    return BestResponse(value, policy, f, g, version)


def bellman_residual(value, m, problem: FirstOrderProblem) -> float:
    """Sup-norm defect of ``value`` in the Bellman equation with costs evaluated at ``m``."""
    m = np.asarray(m, dtype=float)
    f = eval_f(problem.coupling_f, m)
    g = eval_f(problem.coupling_g, m[-1])
    targets = problem.controls.targets
    vals = (problem.step_cost[None] + problem.time.dt * f[:-1, None, :]) + value[1:][:, targets]
    r = np.abs(value[:-1] - vals.min(axis=1))
    return float(max(r.max(), np.max(np.abs(value[-1] - g))))


def pushforward(cells, weights, grid: TorusGrid) -> np.ndarray:
    """Density flow ``(K+1, N)`` of point masses ``weights`` riding along ``cells``."""
    cells = np.asarray(cells)
    flow = np.stack([np.bincount(cells[:, k], weights=weights, minlength=grid.n_cells) for k in range(cells.shape[1])])
    return flow / grid.cell_volume


def flux_of_curves(cells, ctrl, weights, problem: FirstOrderProblem) -> np.ndarray:
    """Momentum ``(K+1, N, dim)`` of the curves; the last slice is zero."""
    grid, K = problem.grid, problem.time.K
    v = problem.controls.velocities
    out = np.zeros((K + 1, grid.n_cells, grid.dim))
    for k in range(K):
        for a in range(grid.dim):
            out[k, :, a] = np.bincount(cells[:, k], weights=weights * v[ctrl[:, k], a], minlength=grid.n_cells)
    return out / grid.cell_volume


def kinetic_cost(cells, ctrl, weights, problem: FirstOrderProblem) -> float:
    """``sum_s weight_s sum_k dt L(gamma_s(t_k), v_s(t_k))``."""
    per_curve = problem.step_cost[ctrl, cells[:, :-1]].sum(axis=1)
    return float(np.dot(weights, per_curve))


# ------------------------------------------------------------------- state


@dataclass(frozen=True)
class BankEntry:
    cells: np.ndarray
    ctrl: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True)
class StrategyState:
    """Sufficient statistics of the averaged curve measure ``eta^n``."""

    n: int
    mbar: np.ndarray = field(repr=False)
    kbar: float = 0.0
    best_response: BestResponse | None = field(default=None, repr=False)
    theta_flow: np.ndarray | None = field(default=None, repr=False)
    theta_flux: np.ndarray | None = field(default=None, repr=False)
    bank: tuple = field(default=(), repr=False)
    bank_complete: bool = True
    phi: tuple = ()
    a: tuple = ()


def initial_strategy(problem: FirstOrderProblem, belief=None) -> StrategyState:
    belief = problem.m0 if belief is None else np.asarray(belief, dtype=float)
    flow = problem.constant_flow(belief) if belief.ndim == 1 else belief.copy()
    check_density(flow, problem.grid, "initial belief")
    return StrategyState(n=0, mbar=flow)


def phi_eta(state: StrategyState, problem: FirstOrderProblem) -> float:
    """``kbar + sum_{k<K} dt F(mbar_k) + G(mbar_K)``."""
    if state.n < 1:
        raise ValidationError("the potential needs at least one realized strategy")
    running = problem.time.dt * potential_F(problem.coupling_f, state.mbar[:-1]).sum()
    return float(state.kbar + running + potential_F(problem.coupling_g, state.mbar[-1]))


def exploitability(state: StrategyState, problem: FirstOrderProblem, br: BestResponse | None = None) -> float:
    """``int J d eta^n - min_theta int J d theta`` using a best response to ``mbar^n``."""
    br = state.best_response if br is None else br
    if br is None or br.version != state.n:
        raise StalenessError(f"best response was computed for belief {None if br is None else br.version}, state is at {state.n}")
    vol = problem.grid.cell_volume
    mbar = state.mbar
    played = state.kbar + problem.time.dt * np.sum(br.f_field[:-1] * mbar[:-1]) * vol + np.sum(br.g_field * mbar[-1]) * vol
    best = np.sum(br.value[0] * problem.m0) * vol
    return float(played - best)


def play_step(state: StrategyState, problem: FirstOrderProblem, bank_cap: int = 0) -> StrategyState:
    """Best response to ``mbar^n``, push ``m0`` along it, average, and refresh the best response."""
    br = state.best_response
    if br is None or br.version != state.n:
        br = bellman_best_response(state.mbar, problem, version=state.n)
    weights = problem.weights
    cells, ctrl = br.rollout(problem)
    theta = pushforward(cells, weights, problem.grid)
    kin = kinetic_cost(cells, ctrl, weights, problem)
    n = state.n + 1
    if n == 1:
        mbar, kbar = theta, kin
    else:
        mbar = running_average(state.mbar, theta, n - 1)
        kbar = state.kbar + (kin - state.kbar) / n
    bank, complete = state.bank, state.bank_complete
    if complete and n <= bank_cap:
        bank = bank + (BankEntry(cells, ctrl, weights),)
    else:
        bank, complete = (), False
    flux = flux_of_curves(cells, ctrl, weights, problem)
    new = StrategyState(n=n, mbar=mbar, kbar=kbar, theta_flow=theta, theta_flux=flux, bank=bank, bank_complete=complete)
    new_br = bellman_best_response(mbar, problem, version=n)
    new = StrategyState(**{**new.__dict__, "best_response": new_br})
    return StrategyState(**{**new.__dict__, "phi": state.phi + (phi_eta(new, problem),), "a": state.a + (exploitability(new, problem),)})


def bank_recompute(state: StrategyState, problem: FirstOrderProblem) -> tuple[float, float]:
    """``(Phi, a)`` recomputed curve by curve from the trajectory bank."""
    if not state.bank_complete or len(state.bank) != state.n:
        raise ValidationError("trajectory bank is incomplete")
    grid, K = problem.grid, problem.time.K
    flows = [pushforward(e.cells, e.weights, grid) for e in state.bank]
    mbar = np.mean(flows, axis=0)
    kin = np.mean([kinetic_cost(e.cells, e.ctrl, e.weights, problem) for e in state.bank])
    phi = kin + problem.time.dt * potential_F(problem.coupling_f, mbar[:-1]).sum() + potential_F(problem.coupling_g, mbar[-1])
    f = eval_f(problem.coupling_f, mbar)
    g = eval_f(problem.coupling_g, mbar[-1])
    played = 0.0
    for e in state.bank:
        per_curve = (problem.step_cost[e.ctrl, e.cells[:, :-1]] + problem.time.dt * f[np.arange(K)[None, :], e.cells[:, :-1]]).sum(axis=1)
        per_curve = per_curve + g[e.cells[:, -1]]
        played += np.dot(e.weights, per_curve)
    played /= len(state.bank)
    br = bellman_best_response(mbar, problem)
    best = np.sum(br.value[0] * problem.m0) * grid.cell_volume
    return float(phi), float(played - best)


def equilibrium_gap(state: StrategyState, problem: FirstOrderProblem) -> float:
    """``sup_t d1`` between ``m0`` pushed along the best response to ``mbar`` and ``mbar`` itself."""
    br = state.best_response
    cells, _ = br.rollout(problem)
    pushed = pushforward(cells, problem.weights, problem.grid)
    return float(np.max(d1_per_slice(pushed, state.mbar, problem.grid)))


def run_first_order(
    problem: FirstOrderProblem,
    n_max: int = 200,
    tol_a: float = 1e-4,
    sustain: int = 5,
    initial_belief=None,
    bank_cap: int = 0,
    mode: str = "first_order",
) -> PlayReport:
    """Iterate ``play_step`` until the exploitability stays below ``tol_a``, a fixed point, or ``n_max``."""
    if int(n_max) != n_max or n_max < 1:
        raise ValidationError(f"n_max must be a positive integer, got {n_max}")
    state = initial_strategy(problem, initial_belief)
    rule = StopRule(tol_a, sustain, start=1)
    records: list[IterationRecord] = []
    checks: dict[str, list[float]] = {k: [] for k in ("mass_drift", "kbar", "saturated")}
    stop_reason, converged = "n_max", False
    j_max = problem.controls.j_max
    disp_abs = np.abs(problem.controls.displacements).max(axis=1)
    while state.n < n_max:
        prev = state
        try:
            state = play_step(state, problem, bank_cap)
        except DivergenceError as exc:
            raise DivergenceError(str(exc), iteration=state.n + 1) from exc
        n = state.n
        used = prev.best_response if prev.best_response is not None and prev.best_response.version == prev.n else None
        value = used.value if used is not None else bellman_best_response(prev.mbar, problem).value
        if n >= 2:
            du = value - prev_value
            var = (
                float(np.max(np.abs(du))),
                float(np.max(np.abs(gradient_upwind(du, problem.grid)))),
                float(np.max(np.abs(state.theta_flow - prev.theta_flow))),
                float(np.max(np.abs(state.theta_flux - prev.theta_flux))),
            )
        else:
            var = (0.0, 0.0, 0.0, 0.0)
        prev_value = value
        r_hjb = bellman_residual(value, state.mbar, problem)
        r_fp = equilibrium_gap(state, problem)
        records.append(IterationRecord(n, state.phi[-1], state.a[-1], *var, r_hjb, r_fp))
        checks["mass_drift"].append(float(np.max(np.abs(state.theta_flow.sum(axis=1) * problem.grid.cell_volume - 1.0))))
        checks["kbar"].append(state.kbar)
        sat = bool(j_max > 0 and np.any(disp_abs[state.best_response.policy] == j_max))
        checks["saturated"].append(float(sat))
        if rule.update(n, state.a[-1]):
            stop_reason, converged = "sustained_tolerance", True
            break
        if n >= 2 and np.max(np.abs(state.theta_flow - prev.mbar)) <= FIXED_POINT_TOL:
            stop_reason, converged = "fixed_point", True
            break
    if any(checks["saturated"]):
        log.warning("optimal policy reached the largest admissible displacement |j| = %d; consider a larger v_max", j_max)
    summary = {
        "iterations": state.n,
        "final_a": records[-1].a_n,
        "final_phi": records[-1].phi,
        "equilibrium_gap": records[-1].residual_fp,
        "tol_eq": 5 * problem.grid.h,
        "j_max": j_max,
        "v_max": problem.controls.v_max,
        "policy_saturated": bool(any(checks["saturated"])),
    }
    return PlayReport(
        mode=mode,
        records=records,
        converged=converged,
        stop_reason=stop_reason,
        belief=state.mbar,
        grid=problem.grid,
        time=problem.time,
        checks=checks,
        summary=summary,
        value=state.best_response.value,
        extras={"state": state},
    )
