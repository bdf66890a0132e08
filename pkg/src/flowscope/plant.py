"""Nonlinear plant simulation: TCP rates, finite queue, AQM, anomaly injection.

The plant integrates the fluid model with the live round-trip time
``tau_i(t) = b(t)/c + tp_i`` inside the vector field, frozen delay arguments,
queue saturation at ``[0, B_max]`` (vector-field projection plus an exact
post-step clamp), rate positivity, and the drop probability emitted by the
AQM from backward-delayed queue/integral history.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import plant_kernel
from .topology import Equilibrium, NetworkConfig, sample_anomaly, validate_config

__all__ = ["AqmPolicy", "PlantTrace", "aqm_step", "simulate_plant"]


@dataclass(frozen=True)
class AqmPolicy:
    """Queue-error drop-probability controller.

    ``kind``: ``"pi"`` computes ``clip(p_ref + kp*(b - b0) + ki*I, 0, 1)``
    with anti-windup (the integral ``I`` freezes while the unclipped output
    is outside (0, 1)); ``"constant"`` always emits the operating-point
    probability. All sources receive the same (backward-delayed) signal.
    """

    kind: str = "pi"
    kp: float = 0.0  # 1/packet
    ki: float = 0.0  # 1/(packet*second)

    def __post_init__(self):
        if self.kind not in ("pi", "constant"):
            raise ValueError(f"unknown AQM kind {self.kind!r}")

    def gains(self) -> tuple[float, float]:
        if self.kind == "constant":
            return 0.0, 0.0
        return float(self.kp), float(self.ki)


def aqm_step(
    policy: AqmPolicy, delta_b: float, integral_state: float, h: float, p_ref: float
) -> tuple[float, float]:
    """One discrete AQM update: returns (drop probability, new integral state).

    The emitted probability is common to all sources; the integral
    accumulates queue error ``delta_b`` over ``h`` only while the unclipped
    output lies strictly inside (0, 1), and stays frozen entirely when the
    policy has no integral action (``ki == 0``, including the constant kind).
    """
    kp, ki = policy.gains()
    raw = p_ref + kp * delta_b + ki * integral_state
    if ki != 0.0 and 0.0 < raw < 1.0:
        integral_state = integral_state + delta_b * h
    return min(max(raw, 0.0), 1.0), integral_state


@dataclass
class PlantTrace:
    """Uniform-grid nonlinear plant trajectory.

    ``x`` are absolute per-source rates, ``b`` the queue, ``p`` the emitted
    (router-local, undelayed) drop probability, ``d`` the sampled anomaly
    rate, ``aqm_integral`` the AQM integral state.
    """

    t: np.ndarray
    x: np.ndarray
    b: np.ndarray
    p: np.ndarray
    d: np.ndarray
    aqm_integral: np.ndarray

    @property
    def h(self) -> float:
        return float(self.t[1] - self.t[0])

    def columns(self) -> dict[str, np.ndarray]:
        cols = {"t": self.t}
        for i in range(self.x.shape[1]):
            cols[f"x{i + 1}"] = self.x[:, i]
        cols["b"] = self.b
        cols["p"] = self.p
        cols["d"] = self.d
        return cols


def _check_grid(eq: Equilibrium, horizon: float, h: float) -> int:
    if h <= 0 or horizon <= 0:
        raise ValueError("horizon and step must be positive")
    nsteps = int(round(horizon / h))
    if nsteps < 1 or abs(nsteps * h - horizon) > 1e-9 * max(1.0, abs(horizon)):
        raise ValueError(f"step {h} does not divide horizon {horizon}")
    min_delay = float(min(np.min(eq.tau0), np.min(eq.tau_f), np.min(eq.tau_b)))
    if h > min_delay / 10.0 + 1e-12:
        raise ValueError(
            f"step {h} too coarse: need h <= min(delay)/10 = {min_delay / 10.0}"
        )
    return nsteps


def simulate_plant(
    cfg: NetworkConfig,
    eq: Equilibrium,
    aqm: AqmPolicy,
    horizon: float,
    h: float,
    x_init: np.ndarray | None = None,
    b_init: float | None = None,
) -> PlantTrace:
    """Integrate the nonlinear closed loop over ``[0, horizon]``.

    History before t=0 is held at the initial state (equilibrium unless
    overridden). Raises ``FloatingPointError`` with the abort time if the
    state leaves the finite range.
    """
    validate_config(cfg)
    nsteps = _check_grid(eq, horizon, h)
    times = h * np.arange(nsteps + 1)
    dnode = sample_anomaly(cfg.anomalies, times)
    p_ref = float(np.mean(eq.p0))
    kp, ki = aqm.gains()
    k0 = int(math.ceil(float(np.max(eq.tau0)) / h)) + 2
    x0 = eq.x0 if x_init is None else np.asarray(x_init, dtype=float)
    b_start = float(eq.b0 if b_init is None else b_init)
    states, p_node = plant_kernel(
        h,
        nsteps,
        k0,
        dnode,
        cfg.eta(),
        cfg.tp_f() + cfg.tp_b(),
        eq.tau0.astype(float),
        eq.tau_b.astype(float),
        eq.tau_f.astype(float),
        float(cfg.capacity),
        float(eq.b0),
        float(cfg.buffer_size),
        p_ref,
        kp,
        ki,
        x0.astype(float),
        b_start,
        0.0,
    )
    if not np.all(np.isfinite(states)):
        bad = np.argwhere(~np.isfinite(states))[0, 0]
        raise FloatingPointError(f"plant state became non-finite at t={bad * h:.6g}")
    n = cfg.n_sources
    return PlantTrace(
        t=times,
        x=states[:, :n],
        b=states[:, n],
        p=p_node,
        d=dnode,
        aqm_integral=states[:, n + 1],
    )
