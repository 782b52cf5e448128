"""Second-order fictitious play.

Each round a representative player best-responds to the averaged belief
``mbar``: the value ``u`` solves the backward HJB against ``mbar`` and the
realized flow ``(m, w)`` solves the forward Fokker-Planck equation driven by
``u``.  The belief and the flux are then averaged.  Along the way the loop
records the potential ``Phi(mbar, wbar)`` and the decrease quantity ``a_n``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .coupling import ConvolutionCoupling, eval_f, potential_F
from .diagnostics import IterationRecord, PlayReport, StopRule
from .errors import DivergenceError, ValidationError
from .fokker_planck import continuity_residual, fp_residual, solve_fp_forward
from .geometry import TimeGrid, TorusGrid, check_density, running_average
from .hamiltonian import HamiltonianSpec, legendre
from .hjb import HjbScheme, gradient_upwind, hjb_residual, solve_hjb_backward, validate_theta

log = logging.getLogger(__name__)

M_FLOOR = 1e-10
FIXED_POINT_TOL = 1e-13


@dataclass(frozen=True)
class ParabolicProblem:
    grid: TorusGrid
    time: TimeGrid
    spec: HamiltonianSpec
    coupling_f: ConvolutionCoupling
    coupling_g: ConvolutionCoupling
    scheme: HjbScheme
    m0: np.ndarray = field(repr=False)
    m_floor: float = M_FLOOR
    belief_mode: str = "average"

    def __post_init__(self):
        m0 = np.asarray(self.m0, dtype=float)
        if m0.shape != (self.grid.n_cells,):
            raise ValidationError("m0 must be a single density on the grid")
        check_density(m0, self.grid, "m0")
        object.__setattr__(self, "m0", m0)
        if self.belief_mode not in ("average", "last"):
            raise ValidationError(f"belief mode must be 'average' or 'last', got {self.belief_mode!r}")
        if not self.m_floor > 0:
            raise ValidationError("m_floor must be positive")

    def constant_flow(self, density) -> np.ndarray:
        return np.tile(np.asarray(density, dtype=float), (self.time.K + 1, 1))

    def solve_hjb(self, belief, validate: bool = True) -> np.ndarray:
        return solve_hjb_backward(belief, self.coupling_f, self.coupling_g, self.spec, self.grid, self.time, self.scheme, validate)

    def solve_fp(self, u):
        return solve_fp_forward(u, self.m0, self.spec, self.grid, self.time, self.scheme)


# ------------------------------------------------------------- functionals


def _ratio(w, m, m_floor):
    return w / np.maximum(m, m_floor)[..., None]


def phi_parabolic(m, w, coupling_f, coupling_g, spec: HamiltonianSpec, grid: TorusGrid, time: TimeGrid, m_floor: float = M_FLOOR) -> float:
    """``sum_{k<K} dt [sum_x m H*(x, -w/m) h^d + F(m_k)] + G(m_K)``.

    Left-endpoint rule in time.  Cells with ``m <= m_floor`` and
    ``|w| <= m_floor`` contribute zero.
    """
    m = np.asarray(m, dtype=float)
    w = np.asarray(w, dtype=float)
    mr, wr = m[:-1], w[:-1]
    kin = mr * legendre(spec, np.arange(grid.n_cells), -_ratio(wr, mr, m_floor))
    empty = (mr <= m_floor) & (np.linalg.norm(wr, axis=-1) <= m_floor)
    kin = np.where(empty, 0.0, kin)
    running = time.dt * (kin.sum() * grid.cell_volume + potential_F(coupling_f, mr).sum())
    return float(running + potential_F(coupling_g, m[-1]))


def a_n_parabolic(mbar, wbar, m, w, grid: TorusGrid, time: TimeGrid, m_floor: float = M_FLOOR) -> float:
    """``sum_{k<K} dt sum_x mbar |wbar/mbar - w/m|^2 h^d``."""
    mbar = np.asarray(mbar, dtype=float)[:-1]
    d = _ratio(np.asarray(wbar)[:-1], mbar, m_floor) - _ratio(np.asarray(w)[:-1], np.asarray(m)[:-1], m_floor)
    return float(time.dt * grid.cell_volume * np.sum(mbar * np.sum(d * d, axis=-1)))


# ------------------------------------------------------------------- state


@dataclass(frozen=True)
class StepVariation:
    du_inf: float = 0.0
    dgrad_inf: float = 0.0
    dm_inf: float = 0.0
    dw_inf: float = 0.0


@dataclass(frozen=True)
class ParabolicState:
    """Belief, averaged flux and the last realized triple ``(u, m, w)``."""

    n: int
    mbar: np.ndarray = field(repr=False)
    wbar: np.ndarray | None = field(default=None, repr=False)
    u: np.ndarray | None = field(default=None, repr=False)
    m: np.ndarray | None = field(default=None, repr=False)
    w: np.ndarray | None = field(default=None, repr=False)
    phi: tuple = ()
    a: tuple = ()
    variations: tuple = ()


def initial_state(problem: ParabolicProblem, belief=None) -> ParabolicState:
    """State before the first round; ``belief`` is a density (held constant in time) or a flow."""
    if belief is None:
        belief = problem.m0
    belief = np.asarray(belief, dtype=float)
    flow = problem.constant_flow(belief) if belief.ndim == 1 else belief.copy()
    check_density(flow, problem.grid, "initial belief")
    return ParabolicState(n=0, mbar=flow)


def step_variation(prev: ParabolicState, new: ParabolicState, grid: TorusGrid) -> StepVariation:
    """Sup-norm changes of the realized iterates between two consecutive rounds."""
    if prev.u is None or new.u is None:
        return StepVariation()
    du = new.u - prev.u
    return StepVariation(
        du_inf=float(np.max(np.abs(du))),
        dgrad_inf=float(np.max(np.abs(gradient_upwind(du, grid)))),
        dm_inf=float(np.max(np.abs(new.m - prev.m))),
        dw_inf=float(np.max(np.abs(new.w - prev.w))),
    )


def iterate(state: ParabolicState, problem: ParabolicProblem) -> ParabolicState:
    """One round: best response to ``mbar``, realized flow, averaging."""
    n = state.n + 1
    try:
        u = problem.solve_hjb(state.mbar)
        m, w = problem.solve_fp(u)
    except DivergenceError as exc:
        raise DivergenceError(str(exc), iteration=n) from exc
    if n == 1 or problem.belief_mode == "last":
        mbar, wbar = m.copy(), w.copy()
    else:
        mbar = running_average(state.mbar, m, n - 1)
        wbar = running_average(state.wbar, w, n - 1)
    phi = phi_parabolic(mbar, wbar, problem.coupling_f, problem.coupling_g, problem.spec, problem.grid, problem.time, problem.m_floor)
    a = a_n_parabolic(mbar, wbar, m, w, problem.grid, problem.time, problem.m_floor)
    new = ParabolicState(n=n, mbar=mbar, wbar=wbar, u=u, m=m, w=w, phi=state.phi + (phi,), a=state.a + (a,))
    var = step_variation(state, new, problem.grid)
    return ParabolicState(**{**new.__dict__, "variations": state.variations + (var,)})


def mfg_residual(u, m, problem: ParabolicProblem) -> tuple[float, float]:
    """HJB residual of ``u`` with the coupling evaluated at ``m`` and FP residual of ``m`` driven by ``u``."""
    m = np.asarray(m, dtype=float)
    r_hjb = hjb_residual(u, eval_f(problem.coupling_f, m), eval_f(problem.coupling_g, m[-1]), problem.spec, problem.grid, problem.time, problem.scheme)
    r_fp = fp_residual(u, m, problem.m0, problem.spec, problem.grid, problem.time, problem.scheme)
    return r_hjb, r_fp


def default_residual_tol(problem: ParabolicProblem) -> float:
    return 10 * (problem.grid.h + problem.time.dt)


# -------------------------------------------------------------------- runs


def _mass_drift(flow, grid) -> float:
    return float(np.max(np.abs(flow.sum(axis=-1) * grid.cell_volume - 1.0)))


def run_parabolic(
    problem: ParabolicProblem,
    n_max: int = 200,
    tol_a: float = 1e-4,
    sustain: int = 5,
    initial_belief=None,
    residuals: bool = True,
) -> PlayReport:
    """Iterate until ``a_n < tol_a`` for ``sustain`` rounds, an exact fixed point, or ``n_max``.

    With ``residuals`` on, the sustained-tolerance stop also requires both
    discrete MFG residuals of ``(u^n, mbar^n)`` to be within ``10 (h + dt)``.
    """
    if int(n_max) != n_max or n_max < 1:
        raise ValidationError(f"n_max must be a positive integer, got {n_max}")
    grid, time = problem.grid, problem.time
    state = initial_state(problem, initial_belief)
    rule = StopRule(tol_a, sustain, start=2)
    residual_tol = default_residual_tol(problem)
    records: list[IterationRecord] = []
    checks: dict[str, list[float]] = {k: [] for k in ("mass_drift", "min_density", "continuity_mbar", "continuity_m", "linf", "speed")}
    stop_reason = "n_max"
    converged = False
    while state.n < n_max:
        prev = state
        state = iterate(state, problem)
        n = state.n
        var = state.variations[-1]
        r_hjb, r_fp = mfg_residual(state.u, state.mbar, problem) if residuals else (0.0, 0.0)
        records.append(IterationRecord(n, state.phi[-1], state.a[-1], var.du_inf, var.dgrad_inf, var.dm_inf, var.dw_inf, r_hjb, r_fp))
        checks["mass_drift"].append(max(_mass_drift(state.m, grid), _mass_drift(state.mbar, grid)))
        checks["min_density"].append(float(min(state.m.min(), state.mbar.min())))
        checks["continuity_mbar"].append(continuity_residual(state.mbar, state.wbar, grid, time, problem.scheme))
        checks["continuity_m"].append(continuity_residual(state.m, state.w, grid, time, problem.scheme))
        checks["linf"].append(float(state.mbar.max()))
        checks["speed"].append(validate_theta(state.u, problem.spec, grid, problem.scheme))
        log.debug("round %d: phi=%.10g a=%.3e", n, state.phi[-1], state.a[-1])
        if rule.update(n, state.a[-1]) and max(r_hjb, r_fp) <= residual_tol:
            stop_reason, converged = "sustained_tolerance", True
            break
        if n >= 2 and np.max(np.abs(state.m - prev.mbar)) <= FIXED_POINT_TOL:
            stop_reason, converged = "fixed_point", True
            break
    summary = {
        "iterations": state.n,
        "final_a": records[-1].a_n,
        "final_phi": records[-1].phi,
        "residual_tol": residual_tol,
        "theta": problem.scheme.theta,
        "K": time.K,
    }
    return PlayReport(
        mode="parabolic",
        records=records,
        converged=converged,
        stop_reason=stop_reason,
        belief=state.mbar,
        grid=grid,
        time=time,
        checks=checks,
        summary=summary,
        value=state.u,
        extras={"state": state},
    )


def solve_mfg_damped(problem: ParabolicProblem, damping: float = 0.5, tol: float = 1e-12, max_iter: int = 5000):
    """Damped Picard iteration on the discrete MFG system, independent of the play loop.

    ``m <- m + lam (FP(HJB(m)) - m)`` with ``lam`` halved whenever the update
    grows.  Returns ``(u, m, iterations)`` where ``u = HJB(m_prev)`` and
    ``m = FP(u)``, so ``m`` satisfies the discrete FP equation exactly and
    ``u`` the HJB equation up to the last update size.
    """
    m = problem.constant_flow(problem.m0)
    lam = damping
    prev_diff = np.inf
    for it in range(1, max_iter + 1):
        u = problem.solve_hjb(m)
        m_new, _ = problem.solve_fp(u)
        diff = float(np.max(np.abs(m_new - m)))
        if diff < tol:
            return u, m_new, it
        if diff > prev_diff:
            lam *= 0.5
        prev_diff = diff
        m = m + lam * (m_new - m)
    raise DivergenceError(f"damped fixed-point iteration did not reach {tol:g}", iteration=max_iter)
