"""Sequence analytics shared by the play loops, plus the report containers.

The theory speaks about limits; runs are finite.  The proxies used here are
explicit: summability of ``a_n / n`` is judged by the share of the sum that
sits in the second half of the sequence, and decay shapes are judged by a
least-squares fit of ``c n^-p`` in log space.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import NamedTuple

import numpy as np

from .errors import ValidationError

FIT_START = 10
FIT_MIN_POINTS = 20


@dataclass(frozen=True)
class SequenceReport:
    n_terms: int
    partial_sums: np.ndarray  # sum_{k<=n} a_k / k
    cesaro: np.ndarray  # (1/n) sum_{k<=n} a_k
    tail_ratio: float
    summable: bool
    cesaro_final: float
    cesaro_half: float
    cesaro_decreasing: bool
    step_bound_c: float | None = None
    step_violations: int = 0
    final_segment_max: float | None = None

    @property
    def step_ok(self) -> bool | None:
        return None if self.step_bound_c is None else self.step_violations == 0


def cesaro_check(a, step_bound_c: float | None = None, tail_fraction: float = 0.01) -> SequenceReport:
    """Finite-run proxies for Cesàro-mean convergence of a summable-step sequence.

    ``summable`` holds when ``sum_{n > N/2} a_n/n <= tail_fraction * sum_n a_n/n``.
    With ``step_bound_c`` the slow-variation hypothesis
    ``|a_{n+1} - a_n| <= c / n`` is counted over the whole sequence and the
    max of ``a_n`` over the last tenth is reported.
    """
    a = np.asarray(a, dtype=float).reshape(-1)
    if a.size == 0:
        raise ValidationError("empty sequence")
    if not np.all(np.isfinite(a)) or np.any(a < 0):
        raise ValidationError("cesaro_check needs finite nonnegative terms")
    N = a.size
    n = np.arange(1, N + 1)
    terms = a / n
    partial = np.cumsum(terms)
    cesaro = np.cumsum(a) / n
    total = partial[-1]
    tail = terms[N // 2 :].sum()
    tail_ratio = float(tail / total) if total > 0 else 0.0
    half = cesaro[max(N // 2 - 1, 0)]
    violations = 0
    seg_max = None
    if step_bound_c is not None:
        steps = np.abs(np.diff(a))
        violations = int(np.sum(steps > step_bound_c / n[:-1]))
        seg_max = float(a[-max(N // 10, 1) :].max())
    return SequenceReport(
        n_terms=N,
        partial_sums=partial,
        cesaro=cesaro,
        tail_ratio=tail_ratio,
        summable=tail_ratio <= tail_fraction,
        cesaro_final=float(cesaro[-1]),
        cesaro_half=float(half),
        cesaro_decreasing=bool(cesaro[-1] <= half),
        step_bound_c=step_bound_c,
        step_violations=violations,
        final_segment_max=seg_max,
    )


class _Fit(NamedTuple):
    c: float
    max_ratio: float


class DecayFit(_Fit):
    """``(c, max_ratio)`` pair; ``growth`` (end-of-window residual ratio over start) rides along."""

    def __new__(cls, c: float, max_ratio: float, growth: float = 1.0):
        self = super().__new__(cls, c, max_ratio)
        self.growth = growth
        return self

    def consistent(self, limit: float = 3.0) -> bool:
        """False when some term exceeds the fit by more than ``limit`` or the residual ratio trends by that factor."""
        return self.max_ratio <= limit and 1.0 / limit <= self.growth <= limit


_EXPONENTS = {"c_over_n": 1.0, "c_over_n2": 2.0}


def fit_decay(x, model: str = "c_over_n") -> DecayFit:
    """Fit ``x_n ~ c n^-p`` over ``n in [10, end]`` (``n`` counts from 1)."""
    if model not in _EXPONENTS:
        raise ValidationError(f"unknown decay model {model!r}")
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size < FIT_MIN_POINTS:
        raise ValidationError(f"need at least {FIT_MIN_POINTS} terms to fit a decay, got {x.size}")
    p = _EXPONENTS[model]
    n = np.arange(1, x.size + 1, dtype=float)[FIT_START - 1 :]
    window = np.abs(x[FIT_START - 1 :])
    if np.any(window <= 0) or not np.all(np.isfinite(window)):
        raise ValidationError("fit_decay needs strictly positive finite terms in the fit window")
    log_c = float(np.mean(np.log(window) + p * np.log(n)))
    c = float(np.exp(log_c))
    ratios = window / (c * n**-p)
    return DecayFit(c, float(np.max(ratios)), float(ratios[-1] / ratios[0]))


def positive_increments(phi) -> np.ndarray:
    """``max(phi[n+1] - phi[n], 0)`` for ``n = 1 .. N-1``."""
    phi = np.asarray(phi, dtype=float)
    return np.maximum(np.diff(phi), 0.0)


# ------------------------------------------------------------------ reports

CSV_COLUMNS = ("n", "phi", "a_n", "du_inf", "dgrad_inf", "dm_inf", "dw_inf", "residual_hjb", "residual_fp")


@dataclass(frozen=True)
class IterationRecord:
    n: int
    phi: float
    a_n: float
    du_inf: float = 0.0
    dgrad_inf: float = 0.0
    dm_inf: float = 0.0
    dw_inf: float = 0.0
    residual_hjb: float = 0.0
    residual_fp: float = 0.0

    def as_row(self) -> tuple:
        return tuple(getattr(self, f.name) for f in fields(self))


@dataclass
class PlayReport:
    """Outcome of one play loop.

    ``checks`` holds auxiliary per-iteration series (mass drift, minimum
    density, continuity residual, ...) that are not part of the CSV.
    """

    mode: str
    records: list[IterationRecord]
    converged: bool
    stop_reason: str
    belief: np.ndarray
    grid: object
    time: object
    checks: dict[str, list[float]] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    value: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    @property
    def n_iterations(self) -> int:
        return len(self.records)

    @property
    def phi(self) -> np.ndarray:
        return np.array([r.phi for r in self.records])

    @property
    def a(self) -> np.ndarray:
        return np.array([r.a_n for r in self.records])

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


class StopRule:
    """Sustained-tolerance stopping: ``a < tol`` for ``sustain`` consecutive iterations."""

    def __init__(self, tol: float, sustain: int = 5, start: int = 1):
        self.tol = tol
        self.sustain = sustain
        self.start = start
        self.streak = 0

    def update(self, n: int, a: float) -> bool:
        if n < self.start:
            return False
        self.streak = self.streak + 1 if a < self.tol else 0
        return self.streak >= self.sustain
