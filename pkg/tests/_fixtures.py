"""Frozen oracle values and builders shared across the test suite.

Every numeric literal here was produced by an independent evaluation path
(exact rational arithmetic for closure values, hand method-of-steps for the
delay-equation oracle, published operating-point tables for the regression
fixture) and is pinned verbatim so the tests cannot drift with the library.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from flowscope import AnomalyWindow, Equilibrium, NetworkConfig, Source

SCENARIO_DIR = Path(__file__).resolve().parents[1] / "scenarios"
BURSTS_SCENARIO = SCENARIO_DIR / "anomaly-bursts.yaml"
QUIET_SCENARIO = SCENARIO_DIR / "quiet-regulation.yaml"

# ---------------------------------------------------------------------------
# Reference three-source network (capacity 2500 pkt/s, backward propagation
# twice the forward). Closure values below were computed with exact rational
# arithmetic (fractions.Fraction) and frozen as floats.
# ---------------------------------------------------------------------------
RT_CAPACITY = 2500.0
RT_BUFFER = 400.0
RT_TARGET = 100.0
RT_ETA = 20.0
RT_TPF = (0.025, 0.05, 0.075)
RT_TPB = (0.05, 0.10, 0.15)
RT_TAU0 = (0.115, 0.19, 0.265)
RT_W0 = 7.049245191137083
RT_X0 = (61.29778427075724, 37.101290479668855, 26.600925249573898)
RT_P0 = 0.03869081295358483

# Anomaly schedule exercised end to end: three constant 750 pkt/s bursts.
RT_BURSTS = ((150.0, 170.0, 750.0), (250.0, 270.0, 750.0), (300.0, 320.0, 750.0))

# Observer gain shipped in the scenario files (decay-rate 0.5 synthesis run,
# frozen so simulation tests do not depend on solver tie-breaking).
SCENARIO_GAIN = np.array(
    [
        -1.5232023372696442,
        -0.4354042043220221,
        -0.19166698357456396,
        9.506924521368555,
        4.583480474414957,
    ]
)

# ---------------------------------------------------------------------------
# Pinned operating point reproducing the published three-source small-signal
# matrices (2-decimal print precision). The rates/probabilities here are a
# regression fixture, not a closure output: the Equilibrium record keeps them
# verbatim.
# ---------------------------------------------------------------------------
PIN_TPF = np.array([0.025, 0.05, 0.075])
PIN_TPB = np.array([0.195959822457, 0.382351536391, 0.570140018149])
PIN_TAU0 = np.array([0.260959822457, 0.472351536391, 0.685140018149])
PIN_X0 = np.array([43.710770261516, 43.692517116178, 43.677676157017])
PIN_P0 = np.array([1.831172130077e-02, 5.400194791339e-03, 2.350921762124e-03])
PIN_B0 = 100.0
PIN_CAPACITY = 2500.0
PIN_ETA = 20.0

PIN_DIAG_A = (-0.73, -0.22, -0.10)
PIN_H = (-0.049, -0.008, -0.002)
PIN_DIAG_B = (-970.0, -959.0, -956.0)
PIN_AD_ROW1 = -1.34
PIN_AD_LAST = 20.0

# Published observer gain for the pinned operating point.
L_PAPER = np.array([0.28, 0.46, 0.45, 1.76, 0.54])

# ---------------------------------------------------------------------------
# Single-source closure toy: c=10, eta=10, b0=1, propagation 0.9 s, so the
# round trip is exactly 1 s, the window and rate are exactly 1, and the
# coefficient formulas evaluate to simple rationals.
# ---------------------------------------------------------------------------
TOY_CAPACITY = 10.0
TOY_ETA = 10.0
TOY_TARGET = 1.0
TOY_BUFFER = 40.0
TOY_TPF = 0.4
TOY_TPB = 0.5
TOY_TAU0 = 1.0
TOY_X0 = 1.0
TOY_P0 = 2.0 / 3.0
TOY_A = -2.0 / 3.0
TOY_E = -1.5
TOY_H = -1.0 / 15.0
TOY_F = -0.1


def runtime_cfg(anomalies: tuple = ()) -> NetworkConfig:
    return NetworkConfig(
        capacity=RT_CAPACITY,
        buffer_size=RT_BUFFER,
        target_queue=RT_TARGET,
        sources=tuple(Source(RT_ETA, f, b) for f, b in zip(RT_TPF, RT_TPB)),
        anomalies=tuple(AnomalyWindow(*w) for w in anomalies),
    )


def toy_cfg() -> NetworkConfig:
    return NetworkConfig(
        capacity=TOY_CAPACITY,
        buffer_size=TOY_BUFFER,
        target_queue=TOY_TARGET,
        sources=(Source(TOY_ETA, TOY_TPF, TOY_TPB),),
    )


def pinned_equilibrium() -> tuple[NetworkConfig, Equilibrium]:
    cfg = NetworkConfig(
        capacity=PIN_CAPACITY,
        buffer_size=400.0,
        target_queue=PIN_B0,
        sources=tuple(
            Source(PIN_ETA, float(f), float(b)) for f, b in zip(PIN_TPF, PIN_TPB)
        ),
    )
    eq = Equilibrium(
        x0=PIN_X0.copy(),
        p0=PIN_P0.copy(),
        tau0=PIN_TAU0.copy(),
        tau_f=PIN_TPF.copy(),
        tau_b=PIN_TPB + PIN_B0 / PIN_CAPACITY,
        b0=PIN_B0,
    )
    return cfg, eq


def random_cfg(rng: np.random.Generator, n: int | None = None) -> NetworkConfig:
    """A random valid anomaly-free configuration for property tests."""
    n = int(rng.integers(1, 6)) if n is None else n
    capacity = float(rng.uniform(200.0, 20000.0))
    buffer_size = float(rng.uniform(50.0, 1000.0))
    target = float(rng.uniform(0.05, 0.8) * buffer_size)
    sources = tuple(
        Source(
            eta=float(rng.integers(1, 60)),
            tp_f=float(rng.uniform(0.005, 0.2)),
            tp_b=float(rng.uniform(0.005, 0.4)),
        )
        for _ in range(n)
    )
    return NetworkConfig(capacity, buffer_size, target, sources)


def dde_exact(t: float) -> float:
    """Analytic solution of x'(t) = -x(t-1), x === 1 on [-1, 0].

    Method of steps gives x(t) = sum_{k=0..floor(t)+1} (-1)^k (t-(k-1))^k / k!.
    """
    if t <= 0:
        return 1.0
    total = 0.0
    for k in range(int(math.floor(t)) + 2):
        arg = t - (k - 1)
        if arg < 0:
            continue
        total += (-1.0) ** k * arg**k / math.factorial(k)
    return total
