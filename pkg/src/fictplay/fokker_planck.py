"""Forward Fokker-Planck solve and flux bookkeeping.

``dm/dt - lap m - div(m D_pH(x, grad u)) = 0`` in conservative form: the flux
``w = -m D_pH(x, grad u)`` is differenced with the centered stencil and
the Lax-Friedrichs viscosity of the backward scheme is added to the
diffusion.  The update is then exactly the adjoint of the linearized HJB
step, mass telescopes on the periodic grid, and ``w = -m D_pH`` holds
cell by cell.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .errors import DimensionError, SchemeError, ValidationError
from .geometry import NEG_TOL, TimeGrid, TorusGrid, check_density
from .hamiltonian import HamiltonianSpec
from .hjb import HjbScheme, _finite, check_cfl, gradient_upwind, laplacian


def divergence(w, grid: TorusGrid) -> np.ndarray:
    """Centered divergence of a vector field ``(..., N, dim)``."""
    w = np.asarray(w, dtype=float)
    shift = grid.neighbor_values
    out = np.zeros(w.shape[:-1])
    for a in range(grid.dim):
        wa = w[..., a]
        out += (shift(wa, a, 1) - shift(wa, a, -1)) / (2 * grid.h)
    return out


def drift_field(u, spec: HamiltonianSpec, grid: TorusGrid) -> np.ndarray:
    """``D_pH(x, grad u) = grad u + b`` for every slice of ``u``."""
    return gradient_upwind(u, grid) + spec.drift


def solve_fp_forward(u, m0, spec: HamiltonianSpec, grid: TorusGrid, time: TimeGrid, scheme: HjbScheme, source=None, check: bool = True):
    """Transport ``m0`` forward along the optimal drift of ``u``.

    Returns ``(m, w)`` with shapes ``(K+1, N)`` and ``(K+1, N, dim)``.
    Step ``k -> k+1`` uses the drift of ``u[k+1]``, which is what makes it the
    adjoint of the backward step.  ``source`` (shape ``(K, N)``) adds a forcing
    term; it is only meant for manufactured-solution tests, and disables the
    probability checks.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (time.K + 1, grid.n_cells):
        raise DimensionError(f"u must have shape {(time.K + 1, grid.n_cells)}, got {u.shape}")
    m0 = np.asarray(m0, dtype=float)
    if source is None and check:
        check_density(m0, grid, "m0")
    elif m0.shape != (grid.n_cells,):
        raise DimensionError(f"m0 must have shape {(grid.n_cells,)}")
    if source is not None:
        source = np.asarray(source, dtype=float)
        if source.shape != (time.K, grid.n_cells):
            raise DimensionError(f"source must have shape {(time.K, grid.n_cells)}")
    check_cfl(grid, time, scheme)
    plus, minus = grid.neighbors
    m, w = kernels.fp_forward(m0, u, spec.drift, plus, minus, grid.h, time.dt, scheme.nu(grid), source)
    _finite(m, "Fokker-Planck solve")
    if check and source is None:
        low = float(m.min())
        if low < -NEG_TOL:
            raise SchemeError(f"density went negative ({low:.3e}); drift exceeds the scheme's positivity range")
    return m, w


def continuity_residual(m, w, grid: TorusGrid, time: TimeGrid, scheme: HjbScheme) -> float:
    """Largest per-step defect of ``m[k+1] = m[k] + dt (nu lap m[k] - div w[k])``.

    Measured in update form (not divided by ``dt``) so that rounding noise
    stays at machine level; the map ``(m, w) -> defect`` is linear, so
    averages of solver outputs inherit a zero defect.
    """
    m = np.asarray(m, dtype=float)
    w = np.asarray(w, dtype=float)
    if m.shape != (time.K + 1, grid.n_cells) or w.shape != (time.K + 1, grid.n_cells, grid.dim):
        raise DimensionError(f"flows do not match the grids: m {m.shape}, w {w.shape}")
    plus, minus = grid.neighbors
    return kernels.continuity_defect(m, w, plus, minus, grid.h, time.dt, scheme.nu(grid))


def fp_residual(u, m, m0, spec: HamiltonianSpec, grid: TorusGrid, time: TimeGrid, scheme: HjbScheme) -> float:
    """Residual of ``m`` against the scheme driven by ``u``, in PDE units."""
    plus, minus = grid.neighbors
    return kernels.fp_residual(u, m, m0, spec.drift, plus, minus, grid.h, time.dt, scheme.nu(grid))


def flux_of(m, u, spec: HamiltonianSpec, grid: TorusGrid) -> np.ndarray:
    """``w[k] = -m[k] D_pH(x, grad u[min(k+1, K)])``, the flux the solver returns."""
    m = np.asarray(m, dtype=float)
    u = np.asarray(u, dtype=float)
    shifted = np.concatenate([u[1:], u[-1:]], axis=0)
    return -m[..., None] * drift_field(shifted, spec, grid)


def fp_step(m, a, grid: TorusGrid, dt: float, nu: float) -> np.ndarray:
    """One forward step with frozen drift ``a`` (shape ``(N, dim)``)."""
    w = -np.asarray(m)[:, None] * a
    return m + dt * (nu * laplacian(m, grid) - divergence(w, grid))


def fp_adjoint_step(u, a, grid: TorusGrid, dt: float, nu: float) -> np.ndarray:
    """Adjoint of :func:`fp_step`: ``u + dt (nu lap u - a . grad u)``."""
    g = gradient_upwind(u, grid)
    return u + dt * (nu * laplacian(u, grid) - np.sum(a * g, axis=-1))


def linf_track(m) -> np.ndarray:
    """Per-slice maximum of a density flow."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise ValidationError("linf_track expects a (K+1, N) flow")
    return m.max(axis=1)
