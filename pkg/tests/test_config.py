from __future__ import annotations

import copy

import pytest
import yaml

from fictplay.config import load_config, parse_config
from fictplay.errors import ConfigurationError

BASE = {
    "mode": "parabolic",
    "grid": {"dim": 1, "points_per_dim": 16},
    "time": {"T": 0.5, "K": "auto"},
    "coupling_f": {"cosine": [1.0, 0.5]},
    "coupling_g": {"offset": 0.0},
    "m0": {"kind": "cosine", "amplitude": 0.3},
}


def _with(path: str, value):
    raw = copy.deepcopy(BASE)
    *head, last = path.split(".")
    node = raw
    for key in head:
        node = node.setdefault(key, {})
    if value is _DROP:
        node.pop(last)
    else:
        node[last] = value
    return raw


_DROP = object()


def test_valid_config_builds_problem():
    cfg = parse_config(BASE)
    problem = cfg.parabolic_problem()
    assert problem.time.K >= 1 and cfg.grid.n_cells == 16


@pytest.mark.parametrize(
    "path, value, field",
    [
        ("time.T", _DROP, "time.T"),
        ("time.T", -1.0, "time.T"),
        ("time.K", 0, "time.K"),
        ("time.K", "many", "time.K"),
        ("mode", "annealing", "mode"),
        ("scheme.cfl", 2.0, "scheme.cfl"),
        ("play.n_max", 0, "play.n_max"),
        ("play.belief", "median", "play.belief"),
        ("nplayer.N", [4, -1], "nplayer.N"),
        ("nplayer.placement", "grid", "nplayer.placement"),
        ("output.density_stride", 0, "output.density_stride"),
        ("grid.points_per_dim", _DROP, "grid.points_per_dim"),
        ("hamiltonian.drift", [1, 2], "hamiltonian.drift"),
    ],
)
def test_field_errors_name_the_path(path, value, field):
    with pytest.raises(ConfigurationError) as info:
        parse_config(_with(path, value))
    assert info.value.field == field
    assert field in str(info.value)


def test_unknown_section_rejected():
    raw = copy.deepcopy(BASE)
    raw["extras"] = {}
    with pytest.raises(ConfigurationError) as info:
        parse_config(raw)
    assert info.value.field == "extras"


def test_cfl_violation_rejected_before_running():
    raw = _with("time.K", 4)
    with pytest.raises(ConfigurationError):
        parse_config(raw)


def test_auto_K_only_for_parabolic():
    raw = _with("mode", "first_order")
    with pytest.raises(ConfigurationError) as info:
        parse_config(raw)
    assert info.value.field == "time.K"


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("mode: [unclosed\n")
    with pytest.raises(ConfigurationError):
        load_config(bad)
    good = tmp_path / "good.yaml"
    good.write_text(yaml.safe_dump(BASE))
    assert load_config(good).name == "good"


def test_output_root_env(monkeypatch, tmp_path):
    cfg = parse_config(_with("output.directory", "out/x"))
    monkeypatch.setenv("FICTPLAY_OUTPUT_ROOT", str(tmp_path))
    assert cfg.output_path() == tmp_path / "out" / "x"
