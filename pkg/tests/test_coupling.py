from __future__ import annotations

import numpy as np
import pytest

from conftest import random_density
from fictplay.coupling import (
    ConvolutionCoupling,
    check_monotone,
    check_symmetry,
    eval_f,
    eval_g,
    normalized_derivative,
    potential_F,
    potential_from_coupling,
)
from fictplay.errors import DimensionError, ValidationError
from fictplay.densities import uniform as uniform_density
from fictplay.geometry import TorusGrid, point_mass
from fictplay.oracles import naive_convolution

G = TorusGrid(1, 16)
REF = [1.0, 0.5, 0.25]


def test_zero_kernel_gives_offset():
    c = ConvolutionCoupling.constant(G, 0.7)
    m = random_density(np.random.default_rng(0), G)
    assert np.array_equal(eval_f(c, m), np.full(16, 0.7))


def test_uniform_density_gives_kernel_mean(rng):
    rho = ConvolutionCoupling.from_cosine(G, [0.3, 1.0, -0.5], offset=0.2)
    out = eval_f(rho, uniform_density(G))
    assert np.allclose(out, rho.kernel.mean() + 0.2, atol=1e-14)


@pytest.mark.parametrize("grid", [TorusGrid(1, 16), TorusGrid(2, 6)])
def test_convolution_matches_double_loop(rng, grid):
    c = ConvolutionCoupling.from_cosine(grid, REF, offset=-0.3)
    for _ in range(3):
        m = random_density(rng, grid)
        assert np.max(np.abs(eval_f(c, m) - naive_convolution(c, m))) <= 1e-12
        assert np.max(np.abs(eval_g(c, m) - naive_convolution(c, m))) <= 1e-12


def test_eval_f_on_flows_is_slicewise(rng):
    c = ConvolutionCoupling.from_cosine(G, REF)
    flow = np.stack([random_density(rng, G) for _ in range(4)])
    assert np.allclose(eval_f(c, flow), np.stack([eval_f(c, m) for m in flow]), atol=1e-15)
    with pytest.raises(DimensionError):
        eval_f(c, np.ones(8))


def test_kernel_validation():
    with pytest.raises(ValidationError):
        ConvolutionCoupling(G, np.arange(16.0))
    with pytest.raises(ValidationError):
        ConvolutionCoupling.from_cosine(G, [0.0, -1.0], monotone=True)
    assert ConvolutionCoupling.from_cosine(G, REF, monotone=True).fourier_coefficients().min() >= -1e-12


def test_potential_examples():
    assert potential_F(ConvolutionCoupling.constant(G, 0.0), uniform_density(G)) == 0.0
    zero_mean = ConvolutionCoupling.from_cosine(G, [0.0, 1.0])
    assert abs(potential_F(zero_mean, uniform_density(G))) <= 1e-15


def test_potential_directional_derivative(rng):
    c = ConvolutionCoupling.from_cosine(G, REF, offset=0.4)
    m, mp = random_density(rng, G), random_density(rng, G)
    exact = float(np.sum(eval_f(c, m) * (mp - m)) * G.cell_volume)
    errs = []
    for s in (1e-2, 1e-3):
        fd = (potential_F(c, m + s * (mp - m)) - potential_F(c, m)) / s
        errs.append(abs(fd - exact))
    assert 8 <= errs[0] / errs[1] <= 12


def test_potential_from_coupling_matches_closed_form(rng):
    c = ConvolutionCoupling.from_cosine(G, REF, offset=0.4)
    f = lambda m: eval_f(c, m)  # noqa: E731
    m0, m = random_density(rng, G), random_density(rng, G)
    assert potential_from_coupling(f, m0, m0, G) == 0.0
    val = potential_from_coupling(f, m0, m, G)
    assert abs(val - (potential_F(c, m) - potential_F(c, m0))) <= 1e-10
    c2 = ConvolutionCoupling(G, 2 * c.kernel, offset=0.0)
    c1 = ConvolutionCoupling(G, c.kernel, offset=0.0)
    v1 = potential_from_coupling(lambda q: eval_f(c1, q), m0, m, G)
    v2 = potential_from_coupling(lambda q: eval_f(c2, q), m0, m, G)
    assert v2 == pytest.approx(2 * v1, rel=1e-12)
    with pytest.raises(ValidationError):
        potential_from_coupling(f, m0, m, G, quad_nodes=1)


def test_normalized_derivative_integrates_to_zero(rng):
    c = ConvolutionCoupling.from_cosine(G, REF, offset=3.0)
    m = random_density(rng, G)
    d = normalized_derivative(lambda q: eval_f(c, q), m, G)
    assert abs(np.sum(d * m) * G.cell_volume) <= 1e-14


def test_symmetry_checker(rng):
    grid = TorusGrid(1, 8)
    c = ConvolutionCoupling.from_cosine(grid, REF)
    f = lambda m: eval_f(c, m)  # noqa: E731
    for _ in range(10):
        m = random_density(rng, grid)
        x, y = rng.integers(0, 8, size=2)
        assert check_symmetry(f, m, int(x), int(y), grid) <= 1e-6
    assert check_symmetry(f, random_density(rng, grid), 3, 3, grid) == 0.0
    A = np.triu(np.ones((8, 8)))
    asym = lambda m: A @ m * grid.cell_volume  # noqa: E731
    assert check_symmetry(asym, random_density(rng, grid), 0, 5, grid) > 0.1


def test_monotone_checker(rng):
    mono = ConvolutionCoupling.from_cosine(G, [1.0, 1.0], monotone=True)
    f = lambda m: eval_f(mono, m)  # noqa: E731
    m = random_density(rng, G)
    assert check_monotone(f, m, m, G) == 0.0
    assert min(check_monotone(f, random_density(rng, G), random_density(rng, G), G) for _ in range(1000)) >= -1e-12
    anti = ConvolutionCoupling.from_cosine(G, [0.0, -1.0])
    val = check_monotone(lambda q: eval_f(anti, q), point_mass(G, 0), point_mass(G, 8), G)
    assert val < -1.0
