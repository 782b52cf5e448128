"""Explicit monotone solver for the backward viscous Hamilton-Jacobi equation.

``-du/dt - lap u + H(x, grad u) = f(x, m(t))`` with ``u(T) = g(x, m(T))``,
discretized with centered diffusion and the Lax-Friedrichs numerical
Hamiltonian ``H(x, (D+ + D-)/2) - theta/2 * sum_i (D+_i - D-_i)``.  The
Lax-Friedrichs term is a second difference, so it is folded into an
effective diffusion ``nu = 1 + theta * h / 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .coupling import ConvolutionCoupling, eval_f
from .errors import ConfigurationError, DivergenceError, SchemeError, ValidationError
from .geometry import TimeGrid, TorusGrid, check_density
from .hamiltonian import HamiltonianSpec

SIGMA = 1.0


@dataclass(frozen=True)
class HjbScheme:
    """Lax-Friedrichs viscosity ``theta`` and the CFL safety factor."""

    theta: float
    cfl: float = 0.5

    def __post_init__(self):
        if not (np.isfinite(self.theta) and self.theta >= 0):
            raise ValidationError(f"theta must be finite and >= 0, got {self.theta}")
        if not (0 < self.cfl <= 1):
            raise ValidationError(f"cfl safety must lie in (0, 1], got {self.cfl}")

    def nu(self, grid: TorusGrid) -> float:
        return SIGMA + 0.5 * self.theta * grid.h


def max_stable_dt(grid: TorusGrid, scheme: HjbScheme) -> float:
    h = grid.h
    return scheme.cfl * h * h / (2 * grid.dim * SIGMA + scheme.theta * h * grid.dim)


def check_cfl(grid: TorusGrid, time: TimeGrid, scheme: HjbScheme) -> None:
    limit = max_stable_dt(grid, scheme)
    # Relative slack so that K chosen by min_steps is never rejected by rounding.
    if time.dt > limit * (1 + 1e-12):
        raise ConfigurationError(
            f"dt = {time.dt:.6g} violates the parabolic CFL bound; need dt <= {limit:.6g} "
            f"(K >= {min_steps(grid, time.T, scheme)})",
            field="time.K",
        )


def min_steps(grid: TorusGrid, T: float, scheme: HjbScheme) -> int:
    """Smallest number of time steps that satisfies the CFL bound."""
    limit = max_stable_dt(grid, scheme)
    K = max(1, math.ceil(T / limit - 1e-9))
    while T / K > limit * (1 + 1e-12):
        K += 1
    return K


def theta_bound(spec: HamiltonianSpec, coupling_f: ConvolutionCoupling, coupling_g: ConvolutionCoupling, T: float) -> float:
    """A priori bound on ``|D_pH(x, grad u)| = |grad u + b|`` plus a unit margin.

    The gradient of ``u`` is controlled by the Lipschitz constants of ``g`` and
    ``f`` in ``x``, amplified by the drift's own Lipschitz constant through
    the characteristic equations.
    """
    grad = (coupling_g.lipschitz + T * coupling_f.lipschitz) * math.exp(T * spec.drift_lipschitz)
    return grad + spec.sup_drift + 1.0


def gradient_upwind(u, grid: TorusGrid) -> np.ndarray:
    """Centered periodic differences ``(D+ + D-)/2`` of a scalar flow.

    The same stencil feeds the Hamiltonian, the Fokker-Planck drift and the
    flux ``w``; the one-sided parts only enter through the viscosity term.
    """
    u = np.asarray(u, dtype=float)
    shift = grid.neighbor_values
    return np.stack([(shift(u, a, 1) - shift(u, a, -1)) / (2 * grid.h) for a in range(grid.dim)], axis=-1)


def laplacian(v, grid: TorusGrid) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    shift = grid.neighbor_values
    out = np.zeros_like(v)
    for a in range(grid.dim):
        out += (shift(v, a, 1) - 2.0 * v) + shift(v, a, -1)
    return out / (grid.h * grid.h)


def _finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise DivergenceError(f"{what} produced non-finite values")


def validate_theta(u, spec: HamiltonianSpec, grid: TorusGrid, scheme: HjbScheme) -> float:
    """Return ``max |grad u + b|`` and raise if it exceeds ``theta``."""
    speed = float(np.max(np.linalg.norm(gradient_upwind(u, grid) + spec.drift, axis=-1)))
    if speed > scheme.theta:
        raise SchemeError(f"max |D_pH| = {speed:.4g} exceeds the Lax-Friedrichs coefficient theta = {scheme.theta:.4g}")
    return speed


def solve_hjb_fields(f_field, g_field, spec: HamiltonianSpec, grid: TorusGrid, time: TimeGrid, scheme: HjbScheme, validate: bool = True) -> np.ndarray:
    """Backward solve with an explicit running-cost flow ``f_field`` of shape ``(K+1, N)``."""
    f_field = np.asarray(f_field, dtype=float)
    g_field = np.asarray(g_field, dtype=float)
    if f_field.shape != (time.K + 1, grid.n_cells) or g_field.shape != (grid.n_cells,):
        raise ValidationError(f"running cost must be {(time.K + 1, grid.n_cells)} and terminal cost {(grid.n_cells,)}")
    check_cfl(grid, time, scheme)
    plus, minus = grid.neighbors
    u = kernels.hjb_backward(f_field, g_field, spec.drift, plus, minus, grid.h, time.dt, scheme.nu(grid))
    _finite(u, "HJB solve")
    if validate:
        validate_theta(u, spec, grid, scheme)
    return u


def solve_hjb_backward(belief, coupling_f, coupling_g, spec: HamiltonianSpec, grid: TorusGrid, time: TimeGrid, scheme: HjbScheme, validate: bool = True) -> np.ndarray:
    """Value function of a small player facing the density flow ``belief``."""
    belief = check_density(belief, grid, "belief")
    if belief.shape != (time.K + 1, grid.n_cells):
        raise ValidationError(f"belief must have shape {(time.K + 1, grid.n_cells)}, got {belief.shape}")
    return solve_hjb_fields(eval_f(coupling_f, belief), eval_f(coupling_g, belief[-1]), spec, grid, time, scheme, validate)


def hjb_residual(u, f_field, g_field, spec: HamiltonianSpec, grid: TorusGrid, time: TimeGrid, scheme: HjbScheme) -> float:
    """Sup-norm residual of the discrete backward equation, in PDE units.

    ``(u[k] - u[k+1]) / dt - (nu lap u[k+1] - H(x, grad u[k+1]) + f[k])`` for
    ``k < K`` together with the terminal mismatch ``u[K] - g``.
    """
    plus, minus = grid.neighbors
    return kernels.hjb_residual(u, f_field, g_field, spec.drift, plus, minus, grid.h, time.dt, scheme.nu(grid))
