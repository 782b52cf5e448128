from __future__ import annotations

import numpy as np
import pytest

from fictplay.densities import belief_from_seed, bump, cosine, density_from_config, spike, uniform
from fictplay.errors import ConfigurationError
from fictplay.geometry import TorusGrid, check_density

G1 = TorusGrid(1, 16)
G2 = TorusGrid(2, 8)


@pytest.mark.parametrize("grid", [G1, G2])
def test_constructors_are_densities(grid):
    for m in (uniform(grid), cosine(grid, 0.4, 2, 0.1), bump(grid, 0.3, 3.0), spike(grid, 0.5)):
        check_density(m, grid)


def test_spike_location_and_seeds():
    m = spike(G1, 0.5)
    assert np.argmax(m) == 8 and m.max() == 16.0
    m0 = cosine(G1)
    assert np.array_equal(belief_from_seed("m0", G1, m0), m0)
    assert np.array_equal(belief_from_seed("uniform", G1, m0), np.ones(16))
    assert np.argmax(belief_from_seed("spike:0.25", G1, m0)) == 4
    assert np.argmax(belief_from_seed("spike:0.5,0.25", G2, uniform(G2))) == 4 * 8 + 2
    check_density(belief_from_seed("bump:0.5:6", G1, m0), G1)
    with pytest.raises(ConfigurationError):
        belief_from_seed("nonsense", G1, m0)
    with pytest.raises(ConfigurationError):
        belief_from_seed("spike:abc", G1, m0)


def test_density_from_config():
    assert np.array_equal(density_from_config({"kind": "uniform"}, G1), np.ones(16))
    vals = density_from_config({"kind": "samples", "values": list(range(1, 17))}, G1)
    check_density(vals, G1)
    with pytest.raises(ConfigurationError) as err:
        density_from_config({"kind": "weird"}, G1)
    assert err.value.field == "m0.kind"
