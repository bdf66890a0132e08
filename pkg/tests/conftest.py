"""Shared fixtures: compiled-kernel warmup and the reference network model."""

from __future__ import annotations

import numpy as np
import pytest

import flowscope as fs

from _fixtures import SCENARIO_GAIN, runtime_cfg


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Trigger JIT compilation once so timed tests measure steady-state cost."""
    cfg = runtime_cfg()
    eq = fs.compute_equilibrium(cfg)
    aug = fs.augment(fs.linearize(eq, cfg))
    h = 2e-3
    fs.simulate_plant(cfg, eq, fs.AqmPolicy(kind="constant"), 40 * h, h)
    n = 20
    fs.run_observer(
        aug,
        np.zeros(aug.n),
        np.zeros(n + 1),
        np.zeros((n + 1, aug.n_sources)),
        n * h,
        h,
    )


@pytest.fixture(scope="session")
def rt():
    """Reference model bundle: (cfg, eq, lin, aug)."""
    cfg = runtime_cfg()
    eq = fs.compute_equilibrium(cfg)
    lin = fs.linearize(eq, cfg)
    aug = fs.augment(lin)
    return cfg, eq, lin, aug


@pytest.fixture(scope="session")
def scenario_gain():
    return SCENARIO_GAIN.copy()
