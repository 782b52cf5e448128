"""Small problem instances shared by the loop tests."""

from __future__ import annotations

from fictplay.coupling import ConvolutionCoupling
from fictplay.densities import cosine
from fictplay.geometry import TimeGrid, TorusGrid
from fictplay.hamiltonian import HamiltonianSpec
from fictplay.hjb import HjbScheme, min_steps, theta_bound
from fictplay.parabolic import ParabolicProblem
from fictplay.trajectory import ControlSet, FirstOrderProblem, speed_bound

REF_KERNEL = [1.0, 0.5, 0.25]


def parabolic_problem(n=16, T=0.5, kernel=REF_KERNEL, offset=0.0, drift=None, belief_mode="average", amplitude=0.5):
    grid = TorusGrid(1, n)
    spec = HamiltonianSpec.zero(grid) if drift is None else HamiltonianSpec.from_fourier(grid, *drift)
    if kernel is None:
        f = g = ConvolutionCoupling.constant(grid, offset)
    else:
        f = g = ConvolutionCoupling.from_cosine(grid, kernel, offset=offset, monotone=True)
    scheme = HjbScheme(theta=theta_bound(spec, f, g, T))
    time = TimeGrid(T, min_steps(grid, T, scheme))
    return ParabolicProblem(grid, time, spec, f, g, scheme, cosine(grid, amplitude), belief_mode=belief_mode)


def first_order_problem(n=32, K=16, T=1.0, kernel=REF_KERNEL, offset=0.0, m0=None, v_max=None, drift=None):
    grid = TorusGrid(1, n)
    time = TimeGrid(T, K)
    spec = HamiltonianSpec.zero(grid) if drift is None else HamiltonianSpec.from_fourier(grid, *drift)
    if kernel is None:
        f = g = ConvolutionCoupling.constant(grid, offset)
    else:
        f = g = ConvolutionCoupling.from_cosine(grid, kernel, offset=offset, monotone=True)
    controls = ControlSet.from_speed(grid, time, speed_bound(spec, f, g, T) if v_max is None else v_max)
    return FirstOrderProblem(grid, time, spec, f, g, controls, cosine(grid, 0.5) if m0 is None else m0)
