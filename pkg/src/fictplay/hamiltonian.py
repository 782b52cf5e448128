"""Quadratic Hamiltonian with a periodic drift shift.

``H(x, p) = |p|^2 / 2 + <b(x), p>`` so ``D_pp H = I`` and every conjugate
quantity has a closed form:

* ``H*(x, q) = |q - b(x)|^2 / 2``
* ``p_hat(x, q) = q - b(x)`` (the maximizer in the conjugate)
* ``L(x, v) = H*(x, -v) = |v + b(x)|^2 / 2``

Points ``x`` are flat grid indices (ints or integer arrays); vectors carry the
spatial dimension on their last axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ValidationError
from .geometry import TorusGrid


@dataclass(frozen=True)
class HamiltonianSpec:
    """``H(x, p) = |p|^2/2 + <b(x), p>`` with ``b`` sampled on the grid nodes."""

    grid: TorusGrid
    drift: np.ndarray = field(repr=False)
    drift_lipschitz: float = 0.0
    kind: str = "quadratic_shifted"
    # Lower/upper bounds on D_pp H; both are 1 for this family.
    C: float = 1.0
    C_bar: float = 1.0

    def __post_init__(self):
        b = np.asarray(self.drift, dtype=float)
        if b.shape != (self.grid.n_cells, self.grid.dim):
            raise DimensionError(f"drift must have shape {(self.grid.n_cells, self.grid.dim)}, got {b.shape}")
        if not np.all(np.isfinite(b)):
            raise ValidationError("drift field must be finite")
        b = b.copy()
        b.flags.writeable = False
        object.__setattr__(self, "drift", b)

    @classmethod
    def zero(cls, grid: TorusGrid) -> HamiltonianSpec:
        return cls(grid, np.zeros((grid.n_cells, grid.dim)))

    @classmethod
    def from_fourier(cls, grid: TorusGrid, constant=0.0, cos=(), sin=()) -> HamiltonianSpec:
        """Drift ``b_i(x) = c_i + sum_k a_k cos(2 pi k x_i) + s_k sin(2 pi k x_i)``.

        ``cos[k-1]`` and ``sin[k-1]`` hold the frequency-``k`` coefficients and
        are applied to every component along its own axis.
        """
        x = grid.coords
        const = np.broadcast_to(np.asarray(constant, dtype=float), (grid.dim,))
        b = np.tile(const, (grid.n_cells, 1))
        lip = 0.0
        for k, a in enumerate(cos, start=1):
            b += a * np.cos(2 * np.pi * k * x)
            lip += 2 * np.pi * k * abs(a)
        for k, s in enumerate(sin, start=1):
            b += s * np.sin(2 * np.pi * k * x)
            lip += 2 * np.pi * k * abs(s)
        return cls(grid, b, drift_lipschitz=lip)

    @property
    def sup_drift(self) -> float:
        return float(np.max(np.linalg.norm(self.drift, axis=-1))) if self.drift.size else 0.0

    def b(self, x) -> np.ndarray:
        return self.drift[np.asarray(x)]


def _vec(spec: HamiltonianSpec, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim == 0 or v.shape[-1] != spec.grid.dim:
        raise DimensionError(f"vectors need a trailing axis of length {spec.grid.dim}, got shape {v.shape}")
    return v


def eval_H(spec: HamiltonianSpec, x, p) -> np.ndarray:
    p = _vec(spec, p)
    return 0.5 * np.sum(p * p, axis=-1) + np.sum(spec.b(x) * p, axis=-1)


def grad_p_H(spec: HamiltonianSpec, x, p) -> np.ndarray:
    return _vec(spec, p) + spec.b(x)


def legendre(spec: HamiltonianSpec, x, q) -> np.ndarray:
    """Convex conjugate ``H*(x, q)`` in closed form."""
    d = _vec(spec, q) - spec.b(x)
    return 0.5 * np.sum(d * d, axis=-1)


def p_hat(spec: HamiltonianSpec, x, q) -> np.ndarray:
    """The unique ``p`` with ``q = D_pH(x, p)``; it attains the sup in ``H*``."""
    return _vec(spec, q) - spec.b(x)


def lagrangian(spec: HamiltonianSpec, x, v) -> np.ndarray:
    """Running cost of moving with velocity ``v``: ``H*(x, -v)``."""
    return legendre(spec, x, -_vec(spec, v))


def fenchel_young_slack(spec: HamiltonianSpec, x, p, q) -> np.ndarray:
    """``H(x,p) + H*(x,q) - <p,q> - |q - D_pH(x,p)|^2 / (2 C_bar)``; nonnegative."""
    p = _vec(spec, p)
    q = _vec(spec, q)
    lhs = eval_H(spec, x, p) + legendre(spec, x, q) - np.sum(p * q, axis=-1)
    gap = q - grad_p_H(spec, x, p)
    return lhs - np.sum(gap * gap, axis=-1) / (2 * spec.C_bar)


def legendre_numeric(spec: HamiltonianSpec, x: int, q, bound: float = 10.0, step: float = 1e-3) -> float:
    """Brute-force ``sup_p <p,q> - H(x,p)`` over the box ``[-bound, bound]^dim``.

    One dimension scans the full lattice of spacing ``step``.  Two dimensions
    scan a coarse lattice first and then the ``step`` lattice around the
    coarse maximizer.
    """
    q = _vec(spec, q)
    if spec.grid.dim == 1:
        p = np.arange(-bound, bound + 0.5 * step, step)[:, None]
        return float(np.max(p[:, 0] * q[0] - eval_H(spec, x, p)))
    coarse = 0.05
    axis = np.arange(-bound, bound + 0.5 * coarse, coarse)
    P = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 2)
    vals = P @ q - eval_H(spec, x, P)
    center = P[np.argmax(vals)]
    fine = np.arange(-2 * coarse, 2 * coarse + 0.5 * step, step)
    P = center + np.stack(np.meshgrid(fine, fine, indexing="ij"), axis=-1).reshape(-1, 2)
    P = np.clip(P, -bound, bound)
    return float(np.max(P @ q - eval_H(spec, x, P)))


@dataclass(frozen=True)
class ConvexityReport:
    samples: int
    min_slack: float


def convexity_sweep(spec: HamiltonianSpec, samples: int, rng: np.random.Generator, scale: float = 5.0) -> ConvexityReport:
    """Evaluate the strong-convexity slack at random ``(x, p, q)`` triples."""
    x = rng.integers(0, spec.grid.n_cells, size=samples)
    p = rng.normal(scale=scale, size=(samples, spec.grid.dim))
    q = rng.normal(scale=scale, size=(samples, spec.grid.dim))
    slack = fenchel_young_slack(spec, x, p, q)
    return ConvexityReport(samples=samples, min_slack=float(np.min(slack)))
