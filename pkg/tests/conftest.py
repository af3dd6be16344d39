"""Shared fixtures: small scenarios that solve in well under a second."""

import os
import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings as hypothesis_settings

sys.path.insert(0, str(Path(__file__).parent.parent))

from utils.cache_manager import cache_manager
from utils.model import scenario_from_dict

hypothesis_settings.register_profile("dev", max_examples=25, deadline=None)
hypothesis_settings.register_profile(
    "ci", max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
hypothesis_settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "dev"))

HRL_PARAMS = {
    "k": 1e-16,
    "phi": 0.1,
    "mu": 1.1e-3,
    "rho0": 1000.0,
    "alpha": 0.7,
    "omega_max": 0.1,
    "g": 9.81,
    "D": 1e-9,
    "b": 1e-4,
    "k_f": 1e-4 ** 2 / 12.0,
}

# Closed rectangular circuit on the 16 x 8 grid (h = 1.25 m)
CIRCUIT = [
    {"name": "bottom", "points": [[5.0, 2.5], [15.0, 2.5]]},
    {"name": "top", "points": [[5.0, 7.5], [15.0, 7.5]]},
    {"name": "left", "points": [[5.0, 2.5], [5.0, 7.5]]},
    {"name": "right", "points": [[15.0, 2.5], [15.0, 7.5]]},
]


def hrl_document(name="hrl-test", resolution=(16, 8), fractures=(), initial="diffusive-steady",
                 **params):
    """HRL box 20 m x 10 m as a parsed scenario document."""
    return {
        "name": name,
        "domain": {"extents": [20.0, 10.0], "resolution": list(resolution)},
        "params": {**HRL_PARAMS, **params},
        "fractures": [dict(f) for f in fractures],
        "bc": {
            "flow": {"default": {"type": "neumann", "value": 0.0}},
            "transport": {
                "default": {"type": "neumann", "value": 0.0},
                "rules": [
                    {"side": "top", "type": "dirichlet", "value": "omega_max"},
                    {"side": "bottom", "type": "dirichlet", "value": 0.0},
                ],
            },
        },
        "initial": {"kind": initial},
        "eig": {"k": 3, "m": 24},
    }


@pytest.fixture(autouse=True)
def clear_cache():
    cache_manager.clear()
    yield
    cache_manager.clear()


@pytest.fixture
def homogeneous():
    """Unfractured HRL box, Ra about 6.24 (stable)."""
    return scenario_from_dict(hrl_document("hrl-box"))


@pytest.fixture
def unstable_box():
    """Unfractured HRL box at Ra about 80, twice the critical value."""
    return scenario_from_dict(hrl_document("hrl-box-unstable", k=1.28e-15))


@pytest.fixture
def circuit():
    """HRL box with a closed fracture circuit (strongly unstable)."""
    return scenario_from_dict(hrl_document("hrl-circuit", fractures=CIRCUIT))


@pytest.fixture
def single_fracture():
    """HRL box with one horizontal fracture."""
    frac = [{"name": "h", "points": [[5.0, 5.0], [15.0, 5.0]]}]
    return scenario_from_dict(hrl_document("hrl-horizontal", fractures=frac))
