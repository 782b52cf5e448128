from __future__ import annotations

import numpy as np
import pytest

from conftest import random_flow
from fictplay.coupling import ConvolutionCoupling
from fictplay.densities import cosine, spike, uniform
from fictplay.errors import StalenessError, ValidationError
from fictplay.geometry import TimeGrid, TorusGrid
from fictplay.hamiltonian import HamiltonianSpec
from fictplay.oracles import enumerate_best_response, exhaustive_exploitability, random_small_problem, sequence_cost
from fictplay.trajectory import (
    ControlSet,
    FirstOrderProblem,
    Trajectory,
    bank_recompute,
    bellman_best_response,
    bellman_residual,
    cost_J,
    exploitability,
    initial_strategy,
    phi_eta,
    play_step,
    run_first_order,
    tie_break_order,
)
from problems import first_order_problem


def test_tie_break_order():
    assert tie_break_order(2, 1)[:, 0].tolist() == [0, -1, 1, -2, 2]
    d2 = tie_break_order(1, 2)
    assert d2[0].tolist() == [0, 0] and len(d2) == 9
    assert [int(np.abs(r).sum()) for r in d2] == sorted(int(np.abs(r).sum()) for r in d2)


def test_control_set():
    g = TorusGrid(1, 16)
    t = TimeGrid(1.0, 8)
    cs = ControlSet.from_speed(g, t, 3.9)
    assert cs.j_max == 8 and cs.v_max == pytest.approx(4.0)
    assert cs.index_of([0]) == 0 and cs.index_of([-1]) == 1
    assert np.array_equal(cs.targets[2], np.roll(np.arange(16), -1))
    with pytest.raises(ValidationError):
        cs.index_of([9])


def test_cost_J_examples(rng):
    p = first_order_problem(n=16, K=8, kernel=None)
    zero = np.zeros(8, dtype=int)
    assert cost_J(Trajectory(3, zero), p.constant_flow(p.m0), p) == 0.0
    ones = np.ones(8, dtype=int)
    speed = p.grid.h / p.time.dt
    assert cost_J(Trajectory(3, ones), p.constant_flow(p.m0), p) == pytest.approx(p.time.T * 0.5 * speed**2, rel=1e-14)
    q = first_order_problem(n=16, K=8, drift=(0.3, [0.2]))
    m = random_flow(rng, q.grid, 8)
    traj = Trajectory(5, rng.integers(-2, 3, size=8))
    seq = [q.controls.index_of([d]) for d in traj.displacements]
    from fictplay.coupling import eval_f

    oracle = sequence_cost(q, 5, seq, eval_f(q.coupling_f, m), eval_f(q.coupling_g, m[-1]))
    assert abs(cost_J(traj, m, q) - oracle) <= 1e-12
    with pytest.raises(ValidationError):
        cost_J(Trajectory(0, np.zeros(3, dtype=int)), m, q)


def test_bellman_trivial_is_stationary():
    p = first_order_problem(n=16, K=8, kernel=None)
    br = bellman_best_response(p.constant_flow(p.m0), p)
    assert np.array_equal(br.value, np.zeros_like(br.value))
    assert np.all(br.policy == 0)


def test_bellman_matches_enumeration(rng):
    for _ in range(10):
        problem, belief = random_small_problem(rng, n_cells=5, K=3)
        br = bellman_best_response(belief, problem)
        values, seqs, gaps = enumerate_best_response(belief, problem)
        assert np.max(np.abs(br.value[0] - values)) <= 1e-12
        _, ctrl = br.rollout(problem)
        mism = np.any(ctrl != seqs, axis=1) & (gaps > 1e-12)
        assert not mism.any()


def test_rollout_cost_identity_and_attraction():
    g = TorusGrid(1, 24)
    t = TimeGrid(1.0, 6)
    attract = ConvolutionCoupling.from_cosine(g, [0.0, -1.0])
    zero = ConvolutionCoupling.constant(g, 0.0)
    p = FirstOrderProblem(g, t, HamiltonianSpec.zero(g), zero, attract, ControlSet(g, t, 2), uniform(g))
    m = p.constant_flow(spike(g, 0.5))
    br = bellman_best_response(m, p)
    cells, _ = br.rollout(p)
    mode = 12
    for s in range(g.n_cells):
        traj = br.trajectory(p, s)
        assert abs(cost_J(traj, m, p) - br.value[0, s]) <= 1e-12
        assert g.distance(cells[s, -1], mode) <= g.distance(s, mode) + 1e-15
    assert bellman_residual(br.value, m, p) <= 1e-12


def test_bellman_optimality_inequality(rng):
    p = first_order_problem(n=16, K=6, drift=(0.2, [0.3]))
    m = random_flow(rng, p.grid, 6)
    br = bellman_best_response(m, p)
    vals = (p.step_cost[None] + p.time.dt * br.f_field[:-1, None, :]) + br.value[1:][:, p.controls.targets]
    assert np.all(br.value[:-1][:, None, :] <= vals + 1e-15)
    chosen = np.take_along_axis(vals, br.policy[:, None, :], axis=1)[:, 0]
    assert np.array_equal(chosen, br.value[:-1])


def test_play_step_trivial_and_mass():
    p = first_order_problem(n=16, K=8, kernel=None)
    s = play_step(initial_strategy(p), p)
    assert np.allclose(s.theta_flow, p.constant_flow(p.m0), atol=1e-15) and s.kbar == 0.0
    assert s.a[-1] == 0.0 and phi_eta(s, p) == 0.0
    rep = run_first_order(p, n_max=10, tol_a=1e-12)
    assert rep.n_iterations == 2 and rep.stop_reason == "fixed_point" and all(a == 0 for a in rep.a)


def test_mbar_is_mean_of_theta_flows():
    p = first_order_problem(n=16, K=8)
    s = initial_strategy(p)
    flows = []
    for _ in range(5):
        s = play_step(s, p, bank_cap=5)
        flows.append(s.theta_flow)
        assert np.max(np.abs(s.theta_flow.sum(axis=1) * p.grid.h - 1.0)) <= 1e-13
    assert np.max(np.abs(s.mbar - np.mean(flows, axis=0))) <= 1e-14
    phi, a = bank_recompute(s, p)
    assert phi == pytest.approx(s.phi[-1], abs=1e-10) and a == pytest.approx(s.a[-1], abs=1e-10)


def test_bank_single_iteration():
    p = first_order_problem(n=16, K=8)
    s = play_step(initial_strategy(p), p, bank_cap=1)
    assert abs(bank_recompute(s, p)[0] - s.phi[0]) <= 1e-12
    s2 = play_step(s, p, bank_cap=1)
    assert not s2.bank_complete
    with pytest.raises(ValidationError):
        bank_recompute(s2, p)


def test_exploitability_matches_exhaustive_search(rng):
    for _ in range(3):
        problem, belief = random_small_problem(rng, n_cells=3, K=2)
        s = initial_strategy(problem, belief)
        for _ in range(3):
            s = play_step(s, problem, bank_cap=3)
        curves = [e.ctrl for e in s.bank]
        oracle = exhaustive_exploitability(curves, problem.weights, s.mbar, problem)
        assert abs(exploitability(s, problem) - oracle) <= 1e-12


def test_exploitability_staleness():
    p = first_order_problem(n=16, K=8)
    s = play_step(initial_strategy(p), p)
    stale = bellman_best_response(s.mbar, p, version=0)
    with pytest.raises(StalenessError):
        exploitability(s, p, stale)


def test_monotone_run_regression():
    p = first_order_problem()
    rep = run_first_order(p, n_max=100, tol_a=1e-12, bank_cap=0)
    a = rep.a
    assert a[:3] == pytest.approx([1.5844142297199415, 0.20121953783467195, 0.10457336161109598], rel=1e-9)
    assert rep.phi[0] == pytest.approx(1.5637132375240994, rel=1e-12)
    assert a.min() >= -1e-10
    assert a[-1] <= 0.05 * a[0]
    assert rep.summary["equilibrium_gap"] <= 5 * p.grid.h
    assert not rep.summary["policy_saturated"]
    # Slow variation of the exploitability: |a_{n+1} - a_n| <= c/n with a fitted c.
    steps = np.abs(np.diff(a))[9:]
    n = np.arange(10, 10 + steps.size)
    c = float(np.max(steps * n))
    assert c <= 10 * a[9] * 10


def test_saturation_warning(caplog):
    p = first_order_problem(n=16, K=8, v_max=0.1)
    assert p.controls.j_max == 1
    with caplog.at_level("WARNING"):
        rep = run_first_order(p, n_max=3, tol_a=1e-12)
    assert rep.summary["policy_saturated"] and "largest admissible displacement" in caplog.text
