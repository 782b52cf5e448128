"""Initial densities and the seeds that name initial beliefs."""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError
from .geometry import TorusGrid, normalize_density, point_mass


def uniform(grid: TorusGrid) -> np.ndarray:
    return np.ones(grid.n_cells)


def cosine(grid: TorusGrid, amplitude: float = 0.5, frequency: int = 1, phase: float = 0.0) -> np.ndarray:
    """``1 + a cos(2 pi k (x - phase))`` summed over axes, renormalized; needs ``|a| dim < 1``."""
    if abs(amplitude) * grid.dim >= 1:
        raise ConfigurationError(f"amplitude {amplitude} makes the density negative", field="m0.amplitude")
    x = grid.coords
    vals = 1.0 + amplitude * np.cos(2 * np.pi * frequency * (x - phase)).sum(axis=-1)
    return normalize_density(vals, grid)


def bump(grid: TorusGrid, center=0.5, kappa: float = 4.0) -> np.ndarray:
    """Periodic von Mises bump ``exp(kappa cos(2 pi (x - center)))``, product over axes."""
    c = np.broadcast_to(np.asarray(center, dtype=float), (grid.dim,))
    vals = np.exp(kappa * np.cos(2 * np.pi * (grid.coords - c)).sum(axis=-1))
    return normalize_density(vals, grid)


def spike(grid: TorusGrid, position=0.0) -> np.ndarray:
    """All mass on the cell nearest ``position``."""
    pos = np.broadcast_to(np.asarray(position, dtype=float), (grid.dim,))
    idx = np.rint(pos / grid.h).astype(np.int64)
    return point_mass(grid, int(grid.flat_index(idx[None, :])[0]))


def density_from_config(cfg: dict, grid: TorusGrid, where: str = "m0") -> np.ndarray:
    kind = cfg.get("kind", "uniform")
    try:
        if kind == "uniform":
            return uniform(grid)
        if kind == "cosine":
            return cosine(grid, float(cfg.get("amplitude", 0.5)), int(cfg.get("frequency", 1)), float(cfg.get("phase", 0.0)))
        if kind == "bump":
            return bump(grid, cfg.get("center", 0.5), float(cfg.get("kappa", 4.0)))
        if kind == "spike":
            return spike(grid, cfg.get("position", 0.0))
        if kind == "samples":
            return normalize_density(cfg["values"], grid)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(str(exc), field=where) from exc
    raise ConfigurationError(f"unknown density kind {kind!r}", field=f"{where}.kind")


def belief_from_seed(seed: str, grid: TorusGrid, m0: np.ndarray) -> np.ndarray:
    """Density used as the constant-in-time initial belief.

    ``m0`` uses the initial density itself, ``uniform`` the flat density,
    ``spike:x`` (or ``spike:x,y``) a unit mass at that point and
    ``bump:x:kappa`` a von Mises bump.
    """
    seed = str(seed).strip()
    head, _, rest = seed.partition(":")
    if head == "m0":
        return np.array(m0, dtype=float)
    if head == "uniform":
        return uniform(grid)
    try:
        if head == "spike":
            return spike(grid, [float(v) for v in rest.split(",")] if rest else 0.0)
        if head == "bump":
            center, _, kappa = rest.partition(":")
            return bump(grid, [float(v) for v in center.split(",")] if center else 0.5, float(kappa) if kappa else 4.0)
    except ValueError as exc:
        raise ConfigurationError(f"bad seed {seed!r}: {exc}", field="play.seeds") from exc
    raise ConfigurationError(f"unknown seed {seed!r}", field="play.seeds")
