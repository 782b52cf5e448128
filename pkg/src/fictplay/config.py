"""Run configuration: YAML schema, validation and problem assembly.

Every field error is raised as ``ConfigurationError`` carrying the dotted
path of the offending key.  Solver preconditions (CFL in particular) are
checked here, before any run starts.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .coupling import ConvolutionCoupling
from .densities import belief_from_seed, density_from_config
from .errors import ConfigurationError, FictPlayError
from .geometry import TimeGrid, TorusGrid
from .hamiltonian import HamiltonianSpec
from .hjb import HjbScheme, check_cfl, min_steps, theta_bound
from .parabolic import M_FLOOR, ParabolicProblem
from .trajectory import ControlSet, FirstOrderProblem, speed_bound

MODES = ("parabolic", "first_order", "nplayer")
OUTPUT_ROOT_ENV = "FICTPLAY_OUTPUT_ROOT"

_TOP_KEYS = {"mode", "grid", "time", "hamiltonian", "coupling_f", "coupling_g", "m0", "scheme", "play", "first_order", "nplayer", "output", "name"}


@dataclass
class RunConfig:
    mode: str
    grid: TorusGrid
    T: float
    K: int | str
    drift: dict
    coupling_f: dict
    coupling_g: dict
    m0: dict
    theta: float | str = "auto"
    cfl: float = 0.5
    n_max: int = 200
    tol_a: float = 1e-4
    sustain: int = 5
    m_floor: float = M_FLOOR
    belief: str = "average"
    seeds: list = field(default_factory=lambda: ["m0"])
    v_max: float | str = "auto"
    n_ladder: list = field(default_factory=lambda: [16, 64, 256])
    placement: str = "quantile"
    rng_seed: int = 0
    output_dir: str = "out"
    emit_plots: bool = True
    bank_cap: int = 0
    density_stride: int | str = "auto"
    name: str = "run"
    source: str | None = None

    # -------------------------------------------------------- assembly

    def hamiltonian(self) -> HamiltonianSpec:
        d = self.drift
        try:
            return HamiltonianSpec.from_fourier(self.grid, d.get("constant", 0.0), d.get("cos", []), d.get("sin", []))
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(str(exc), field="hamiltonian.drift") from exc

    def coupling(self, which: str) -> ConvolutionCoupling:
        cfg = self.coupling_f if which == "coupling_f" else self.coupling_g
        try:
            offset = float(cfg.get("offset", 0.0))
            monotone = bool(cfg.get("monotone", False))
            if "cosine" in cfg:
                return ConvolutionCoupling.from_cosine(self.grid, [float(c) for c in cfg["cosine"]], offset, monotone)
            if "samples" in cfg:
                return ConvolutionCoupling.from_samples(self.grid, cfg["samples"], offset, monotone)
        except FictPlayError as exc:
            raise ConfigurationError(str(exc), field=which) from exc
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(str(exc), field=which) from exc
        if not cfg or set(cfg) <= {"offset", "monotone"}:
            return ConvolutionCoupling.constant(self.grid, float(cfg.get("offset", 0.0)))
        raise ConfigurationError("needs 'cosine' coefficients or grid 'samples'", field=which)

    def initial_density(self) -> np.ndarray:
        return density_from_config(self.m0, self.grid, "m0")

    def scheme(self) -> HjbScheme:
        if self.theta == "auto":
            theta = theta_bound(self.hamiltonian(), self.coupling("coupling_f"), self.coupling("coupling_g"), self.T)
        else:
            theta = float(self.theta)
        return HjbScheme(theta=theta, cfl=self.cfl)

    def time_grid(self) -> TimeGrid:
        if self.K == "auto":
            if self.mode != "parabolic":
                raise ConfigurationError("'auto' is only meaningful for the parabolic mode", field="time.K")
            return TimeGrid(self.T, min_steps(self.grid, self.T, self.scheme()))
        return TimeGrid(self.T, int(self.K))

    def parabolic_problem(self) -> ParabolicProblem:
        time = self.time_grid()
        scheme = self.scheme()
        check_cfl(self.grid, time, scheme)
        return ParabolicProblem(
            self.grid, time, self.hamiltonian(), self.coupling("coupling_f"), self.coupling("coupling_g"),
            scheme, self.initial_density(), m_floor=self.m_floor, belief_mode=self.belief,
        )

    def first_order_problem(self) -> FirstOrderProblem:
        time = self.time_grid()
        spec = self.hamiltonian()
        f, g = self.coupling("coupling_f"), self.coupling("coupling_g")
        v_max = speed_bound(spec, f, g, self.T) if self.v_max == "auto" else float(self.v_max)
        return FirstOrderProblem(self.grid, time, spec, f, g, ControlSet.from_speed(self.grid, time, v_max), self.initial_density())

    def seed_beliefs(self) -> list[tuple[str, np.ndarray]]:
        m0 = self.initial_density()
        return [(str(s), belief_from_seed(s, self.grid, m0)) for s in self.seeds]

    def output_path(self) -> Path:
        path = Path(self.output_dir)
        root = os.environ.get(OUTPUT_ROOT_ENV)
        if root and not path.is_absolute():
            path = Path(root) / path
        return path

    def validate(self) -> None:
        """Build every object the run needs so that errors surface before it starts."""
        self.initial_density()
        self.hamiltonian()
        self.coupling("coupling_f")
        self.coupling("coupling_g")
        self.seed_beliefs()
        if self.mode == "parabolic":
            self.parabolic_problem()
        else:
            self.first_order_problem()


# ------------------------------------------------------------------ parsing


def _section(raw: dict, key: str, required: bool = False) -> dict:
    if key not in raw or raw[key] is None:
        if required:
            raise ConfigurationError("missing required section", field=key)
        return {}
    val = raw[key]
    if not isinstance(val, dict):
        raise ConfigurationError("must be a mapping", field=key)
    return val


def _get(section: dict, key: str, path: str, kind, default=None, required: bool = False, allow_auto: bool = False):
    if key not in section or section[key] is None:
        if required:
            raise ConfigurationError("missing required field", field=f"{path}.{key}")
        return default
    val = section[key]
    if allow_auto and val == "auto":
        return "auto"
    try:
        if kind is bool:
            if not isinstance(val, bool):
                raise TypeError("expected true or false")
            return val
        if kind is int:
            if isinstance(val, bool) or float(val) != int(val):
                raise TypeError("expected an integer")
            return int(val)
        return kind(val)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad value {val!r}: {exc}", field=f"{path}.{key}") from exc


def parse_config(raw: dict, source: str | None = None) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigurationError("config must be a mapping at the top level")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigurationError(f"unknown section(s) {sorted(unknown)}", field=sorted(unknown)[0])
    mode = raw.get("mode")
    if mode is None:
        raise ConfigurationError("missing required field", field="mode")
    if mode not in MODES:
        raise ConfigurationError(f"must be one of {MODES}, got {mode!r}", field="mode")

    g = _section(raw, "grid", required=True)
    dim = _get(g, "dim", "grid", int, default=1)
    ppd = _get(g, "points_per_dim", "grid", int, required=True)
    try:
        grid = TorusGrid(dim, ppd)
    except FictPlayError as exc:
        raise ConfigurationError(str(exc), field="grid") from exc

    t = _section(raw, "time", required=True)
    T = _get(t, "T", "time", float, required=True)
    if not (np.isfinite(T) and T > 0):
        raise ConfigurationError(f"must be positive, got {T}", field="time.T")
    K = _get(t, "K", "time", int, required=True, allow_auto=True)
    if K != "auto" and K < 1:
        raise ConfigurationError(f"must be >= 1, got {K}", field="time.K")

    ham = _section(raw, "hamiltonian")
    drift = ham.get("drift") or {}
    if not isinstance(drift, dict):
        raise ConfigurationError("must be a mapping with constant/cos/sin", field="hamiltonian.drift")

    cf = _section(raw, "coupling_f", required=True)
    cg = _section(raw, "coupling_g", required=True)
    m0 = _section(raw, "m0") or {"kind": "uniform"}

    sch = _section(raw, "scheme")
    theta = _get(sch, "theta", "scheme", float, default="auto", allow_auto=True)
    cfl = _get(sch, "cfl", "scheme", float, default=0.5)
    if not 0 < cfl <= 1:
        raise ConfigurationError(f"must lie in (0, 1], got {cfl}", field="scheme.cfl")

    play = _section(raw, "play")
    n_max = _get(play, "n_max", "play", int, default=200)
    if n_max < 1:
        raise ConfigurationError("must be >= 1", field="play.n_max")
    tol_a = _get(play, "tol_a", "play", float, default=1e-4)
    sustain = _get(play, "sustain", "play", int, default=5)
    m_floor = _get(play, "m_floor", "play", float, default=M_FLOOR)
    belief = _get(play, "belief", "play", str, default="average")
    if belief not in ("average", "last"):
        raise ConfigurationError(f"must be 'average' or 'last', got {belief!r}", field="play.belief")
    seeds = play.get("seeds") or ["m0"]
    if not isinstance(seeds, list) or not seeds:
        raise ConfigurationError("must be a non-empty list", field="play.seeds")

    fo = _section(raw, "first_order")
    v_max = _get(fo, "v_max", "first_order", float, default="auto", allow_auto=True)

    npl = _section(raw, "nplayer")
    ladder = npl.get("N", [16, 64, 256])
    if isinstance(ladder, int):
        ladder = [ladder]
    if not isinstance(ladder, list) or not ladder or any(isinstance(v, bool) or not isinstance(v, int) or v < 1 for v in ladder):
        raise ConfigurationError("must be a list of positive integers", field="nplayer.N")
    placement = _get(npl, "placement", "nplayer", str, default="quantile")
    if placement not in ("quantile", "iid"):
        raise ConfigurationError(f"must be 'quantile' or 'iid', got {placement!r}", field="nplayer.placement")
    rng_seed = _get(npl, "seed", "nplayer", int, default=0)

    out = _section(raw, "output")
    stride = _get(out, "density_stride", "output", int, default="auto", allow_auto=True)
    if stride != "auto" and stride < 1:
        raise ConfigurationError("must be >= 1", field="output.density_stride")

    cfg = RunConfig(
        mode=mode, grid=grid, T=T, K=K, drift=drift, coupling_f=cf, coupling_g=cg, m0=m0,
        theta=theta, cfl=cfl, n_max=n_max, tol_a=tol_a, sustain=sustain, m_floor=m_floor, belief=belief,
        seeds=seeds, v_max=v_max, n_ladder=ladder, placement=placement, rng_seed=rng_seed,
        output_dir=_get(out, "directory", "output", str, default="out"),
        emit_plots=_get(out, "emit_plots", "output", bool, default=True),
        bank_cap=_get(out, "bank_cap", "output", int, default=0),
        density_stride=stride,
        name=str(raw.get("name", Path(source).stem if source else "run")),
        source=source,
    )
    try:
        cfg.validate()
    except ConfigurationError:
        raise
    except FictPlayError as exc:
        raise ConfigurationError(str(exc)) from exc
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"invalid YAML: {exc}") from exc
    return parse_config(raw, source=str(path))
