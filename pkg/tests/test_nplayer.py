from __future__ import annotations

import numpy as np
import pytest

from fictplay.densities import cosine, uniform
from fictplay.errors import ValidationError
from fictplay.geometry import TorusGrid, d1_distance
from fictplay.nplayer import compare_to_mfg, place_players, run_nplayer
from fictplay.trajectory import run_first_order
from problems import first_order_problem

G = TorusGrid(1, 64)


def test_quantile_placement_examples():
    ps = place_players(uniform(G), 4, G)
    assert np.allclose(G.coords[ps.cells, 0], [0.2, 0.4, 0.6, 0.8], atol=G.h / 2)
    assert place_players(uniform(G), 1, G).cells.tolist() == [32]
    ds = [d1_distance(place_players(uniform(G), N, G).empirical, uniform(G), G) for N in (8, 16, 32)]
    for a, b in zip(ds, ds[1:]):
        assert 0.5 * 0.7 <= b / a <= 0.5 * 1.3


def test_empirical_measure_and_iid():
    ps = place_players(cosine(G), 10, G, "iid", seed=7)
    assert ps.empirical.sum() * G.h == pytest.approx(1.0, abs=1e-15)
    again = place_players(cosine(G), 10, G, "iid", seed=7)
    assert np.array_equal(ps.cells, again.cells)
    with pytest.raises(ValidationError):
        place_players(cosine(G), 10, G, "iid")
    with pytest.raises(ValidationError):
        place_players(cosine(G), 0, G)
    with pytest.raises(ValidationError):
        place_players(cosine(G), 4, G, "grid")


def test_two_dimensional_product_quantiles():
    g2 = TorusGrid(2, 8)
    ps = place_players(uniform(g2), 9, g2)
    assert ps.N == 9 and len(set(ps.cells.tolist())) == 9
    with pytest.raises(ValidationError):
        place_players(uniform(g2), 8, g2)


def test_single_player_trivial():
    p = first_order_problem(n=16, K=8, kernel=None)
    ps = place_players(p.m0, 1, p.grid)
    rep = run_nplayer(p, ps, n_max=5, tol_a=1e-12)
    assert all(a == 0 for a in rep.a)
    assert np.all(rep.extras["trajectories"][0].displacements == 0)


def test_trivial_coupling_distance_is_initial_d1():
    p = first_order_problem(n=32, K=8, kernel=None)
    mfg = run_first_order(p, n_max=5, tol_a=1e-12)
    ps = place_players(p.m0, 8, p.grid)
    rep = run_nplayer(p, ps, n_max=5, tol_a=1e-12)
    assert rep.n_iterations == 2
    assert compare_to_mfg(rep, mfg) == pytest.approx(rep.summary["d1_initial"], abs=1e-15)


def test_monotone_ladder():
    p = first_order_problem(n=64, K=32)
    mfg = run_first_order(p, n_max=200, tol_a=1.5e-3)
    dist = []
    for N in (16, 64, 256):
        rep = run_nplayer(p, place_players(p.m0, N, p.grid), n_max=200, tol_a=1.5e-3)
        assert rep.a.min() >= -1e-10
        assert rep.converged
        dist.append(compare_to_mfg(rep, mfg))
    assert dist[2] <= 0.5 * dist[0]
    inversions = [b > a for a, b in zip(dist, dist[1:])]
    assert sum(inversions) <= 1


def test_compare_grid_mismatch():
    a = run_first_order(first_order_problem(n=16, K=4, kernel=None), n_max=2)
    b = run_first_order(first_order_problem(n=32, K=4, kernel=None), n_max=2)
    with pytest.raises(ValidationError):
        compare_to_mfg(a, b)
