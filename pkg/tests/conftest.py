from __future__ import annotations

import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("fictplay", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("fictplay")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_density(rng, grid, floor=0.05):
    from fictplay.geometry import normalize_density

    return normalize_density(rng.random(grid.n_cells) + floor, grid)


def random_flow(rng, grid, K):
    return np.stack([random_density(rng, grid) for _ in range(K + 1)])


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None) if mod else None
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
