"""Nonlocal couplings ``f(x, m) = (rho * m)(x) + offset`` and their potentials.

A symmetric kernel makes ``f`` the measure derivative of
``F(m) = <rho * m, m> / 2 + offset``; nonnegative Fourier coefficients make
it monotone.  The checkers below treat ``f`` as a black box ``m -> field`` so
they also apply to couplings that are not convolutions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import simpson

from .errors import DimensionError, ValidationError
from .geometry import TorusGrid

FOURIER_TOL = 1e-12

Coupling = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ConvolutionCoupling:
    """``f(x, m) = sum_y rho(x - y) m(y) h^dim + offset`` on the torus."""

    grid: TorusGrid
    kernel: np.ndarray = field(repr=False)
    offset: float = 0.0
    lipschitz: float = 0.0
    monotone: bool = False

    def __post_init__(self):
        rho = np.asarray(self.kernel, dtype=float).reshape(-1)
        if rho.size != self.grid.n_cells:
            raise DimensionError(f"kernel needs {self.grid.n_cells} samples, got {rho.size}")
        if not np.all(np.isfinite(rho)):
            raise ValidationError("kernel must be finite")
        reflected = rho[_reflection(self.grid)]
        if np.max(np.abs(rho - reflected)) > 1e-12 * max(1.0, np.max(np.abs(rho))):
            raise ValidationError("kernel must be symmetric: rho(x) = rho(-x)")
        rho = rho.copy()
        rho.flags.writeable = False
        object.__setattr__(self, "kernel", rho)
        object.__setattr__(self, "_kernel_hat", np.fft.rfftn(rho.reshape(self.grid.shape)))
        if self.monotone and self.fourier_coefficients().min() < -FOURIER_TOL:
            raise ValidationError("kernel flagged monotone has a negative Fourier coefficient")

    @classmethod
    def from_cosine(cls, grid: TorusGrid, coefficients, offset=0.0, monotone=False) -> ConvolutionCoupling:
        """``rho(x) = sum_k c_k cos(2 pi k x)`` (summed over axes in 2D, ``c_0`` counted once)."""
        coefficients = list(coefficients)
        x = grid.coords
        rho = np.zeros(grid.n_cells)
        lip = 0.0
        for k, c in enumerate(coefficients):
            if k == 0:
                rho += c
                continue
            rho += c * np.cos(2 * np.pi * k * x).sum(axis=-1)
            lip += 2 * np.pi * k * abs(c) * np.sqrt(grid.dim)
        return cls(grid, rho, offset=float(offset), lipschitz=lip, monotone=monotone)

    @classmethod
    def from_samples(cls, grid: TorusGrid, samples, offset=0.0, monotone=False) -> ConvolutionCoupling:
        rho = np.asarray(samples, dtype=float).reshape(-1)
        plus, _ = grid.neighbors
        lip = float(np.sqrt(sum(np.max(np.abs(rho[plus[a]] - rho)) ** 2 for a in range(grid.dim))) / grid.h)
        return cls(grid, rho, offset=float(offset), lipschitz=lip, monotone=monotone)

    @classmethod
    def constant(cls, grid: TorusGrid, value=0.0) -> ConvolutionCoupling:
        return cls(grid, np.zeros(grid.n_cells), offset=float(value), monotone=True)

    def fourier_coefficients(self) -> np.ndarray:
        """Real DFT coefficients of the kernel (real because it is symmetric)."""
        return np.real(self._kernel_hat).reshape(-1) * self.grid.cell_volume

    def __call__(self, m) -> np.ndarray:
        return eval_f(self, m)


def _reflection(grid: TorusGrid) -> np.ndarray:
    return grid.flat_index(-grid.multi_index)


def eval_f(coupling: ConvolutionCoupling, m) -> np.ndarray:
    """Evaluate the coupling field for a density or a stack of densities."""
    grid = coupling.grid
    m = np.asarray(m, dtype=float)
    if m.shape[-1] != grid.n_cells:
        raise DimensionError(f"density has {m.shape[-1]} cells, coupling grid has {grid.n_cells}")
    lead = m.shape[:-1]
    axes = tuple(range(-grid.dim, 0))
    mh = np.fft.rfftn(m.reshape(lead + grid.shape), axes=axes)
    conv = np.fft.irfftn(mh * coupling._kernel_hat, s=grid.shape, axes=axes)
    return conv.reshape(lead + (grid.n_cells,)) * grid.cell_volume + coupling.offset


# Terminal costs share the same family and contract.
eval_g = eval_f


def potential_F(coupling: ConvolutionCoupling, m) -> np.ndarray:
    """``F(m) = <rho * m, m>/2 + offset * mass``; works slice-wise on flows."""
    m = np.asarray(m, dtype=float)
    vol = coupling.grid.cell_volume
    conv = eval_f(coupling, m) - coupling.offset
    return 0.5 * np.sum(conv * m, axis=-1) * vol + coupling.offset * np.sum(m, axis=-1) * vol


potential_G = potential_F


def normalized_derivative(f_eval: Coupling, m, grid: TorusGrid) -> np.ndarray:
    """``f(., m)`` shifted so that its integral against ``m`` vanishes."""
    m = np.asarray(m, dtype=float)
    fx = np.asarray(f_eval(m), dtype=float)
    return fx - np.sum(fx * m, axis=-1, keepdims=True) * grid.cell_volume


def potential_from_coupling(f_eval: Coupling, m0, m, grid: TorusGrid, quad_nodes: int = 4) -> float:
    """``int_0^1 int f(x, (1-t) m0 + t m) d(m - m0)(x) dt`` by composite Simpson.

    ``quad_nodes`` is the number of Simpson panels, rounded up to an even count.
    """
    if int(quad_nodes) != quad_nodes or quad_nodes < 2:
        raise ValidationError(f"quad_nodes must be an integer >= 2, got {quad_nodes}")
    panels = int(quad_nodes) + int(quad_nodes) % 2
    m0 = np.asarray(m0, dtype=float)
    m = np.asarray(m, dtype=float)
    diff = m - m0
    t = np.linspace(0.0, 1.0, panels + 1)
    vals = [float(np.sum(np.asarray(f_eval((1 - s) * m0 + s * m)) * diff) * grid.cell_volume) for s in t]
    return float(simpson(vals, x=t))


def mixture_derivative_matrix(f_eval: Coupling, m, grid: TorusGrid, s: float = 1e-7) -> np.ndarray:
    """Finite-difference estimate ``D[x, y]`` of the derivative of ``f(x, .)`` at ``m``.

    Column ``y`` is ``(f((1-s) m + s delta_y) - f(m)) / s``, i.e. the measure
    derivative in the mixture direction towards a one-cell bump at ``y``.
    """
    m = np.asarray(m, dtype=float)
    base = np.asarray(f_eval(m), dtype=float)
    n = grid.n_cells
    D = np.empty((n, n))
    bump = np.zeros(n)
    for y in range(n):
        bump[y] = 1.0 / grid.cell_volume
        D[:, y] = (np.asarray(f_eval((1 - s) * m + s * bump)) - base) / s
        bump[y] = 0.0
    return D


def symmetry_defect(D: np.ndarray) -> np.ndarray:
    """Part of ``D`` that no choice of per-row additive constants can symmetrize.

    Mixture derivatives are only defined up to a constant for each first
    argument, so symmetry is tested on
    ``D[x,y] - D[y,x] - mean_z(D[x,z] - D[y,z]) + mean_z(D[z,x] - D[z,y])``,
    which is invariant under those constants and vanishes for symmetric kernels.
    """
    A = D - D.T
    r = D.mean(axis=1) - D.mean(axis=0)
    return A - (r[:, None] - r[None, :])


def check_symmetry(f_eval: Coupling, m, x_index: int, y_index: int, grid: TorusGrid, s: float = 1e-7) -> float:
    """Absolute symmetry defect of the measure derivative at the pair ``(x, y)``."""
    if x_index == y_index:
        return 0.0
    D = mixture_derivative_matrix(f_eval, m, grid, s)
    return float(abs(symmetry_defect(D)[x_index, y_index]))


def check_monotone(f_eval: Coupling, m, m_prime, grid: TorusGrid) -> float:
    """``int (f(x,m) - f(x,m')) d(m - m')(x)``; nonnegative for monotone couplings."""
    m = np.asarray(m, dtype=float)
    m_prime = np.asarray(m_prime, dtype=float)
    df = np.asarray(f_eval(m)) - np.asarray(f_eval(m_prime))
    return float(np.sum(df * (m - m_prime)) * grid.cell_volume)
