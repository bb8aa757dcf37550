import numpy as np
import pytest

from axiswirl.config import ModelConfig, validate_config
from axiswirl.grid import make_grid


def make_cfg(variant="generalized-nse", **overrides) -> ModelConfig:
    cfg = ModelConfig(variant=variant)
    for key, val in overrides.items():
        obj = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            obj = getattr(obj, part)
        setattr(obj, parts[-1], val)
    validate_config(cfg)
    return cfg


@pytest.fixture
def uniform_grid():
    return make_grid(32, 32, 2.0, 2.0)


@pytest.fixture
def stretched_grid():
    return make_grid(64, 64, 40.0, 20.0, map_kind="tanh", stretch=2.0,
                     anchor_xi=3.6927, anchor_eta=1.0)


def smooth_test_field(grid, kx=1.0, ky=1.0, odd_eta=True):
    """A smooth field with the solver parities: even in xi, odd in eta,
    decaying toward the far boundaries."""
    L, H = grid.xi_max, grid.eta_max
    xi = grid.xi[:, None] / L
    eta = grid.eta[None, :] / H
    f = np.cos(np.pi * kx * xi) * np.exp(-3.0 * xi ** 2)
    g = np.sin(np.pi * ky * eta) * np.exp(-3.0 * eta ** 2)
    if not odd_eta:
        g = np.cos(np.pi * ky * eta) * np.exp(-3.0 * eta ** 2)
    return f * g
