"""Network description, validation, and operating-point computation.

A :class:`NetworkConfig` describes a single bottleneck router shared by ``N``
long-lived TCP source aggregates. The router serves ``capacity`` pkt/s into a
finite buffer; an AQM marks/drops with probability ``p`` fed back to the
sources. Each aggregate ``i`` bundles ``eta_i`` identical sessions and sees a
forward propagation delay ``tp_f`` (source → router) and a backward
propagation delay ``tp_b`` (router → source, where the congestion signal
travels). The round-trip time is ``tau_i(t) = b(t)/capacity + tp_f + tp_b``.

:func:`compute_equilibrium` closes the stationary window/drop relations by
assuming a drop probability common to all aggregates, which yields a common
equilibrium window ``w0``:

    w0 = capacity / sum_i(eta_i / tau_i0),   x_i0 = w0 / tau_i0,
    p0 = 2 / (2 + w0**2),                    tau_i0 = b0/capacity + tp_f + tp_b.

The delay split used by the simulators and the observer assigns the queueing
delay to the backward path: ``tau_f_i = tp_f_i`` and
``tau_b_i = tp_b_i + b0/capacity``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Source",
    "AnomalyWindow",
    "NetworkConfig",
    "Equilibrium",
    "ValidationError",
    "validate_config",
    "compute_equilibrium",
    "anomaly_rate",
    "sample_anomaly",
    "rhs_residual",
]


@dataclass(frozen=True)
class Source:
    """One TCP aggregate: session count and one-way propagation delays [s]."""

    eta: float
    tp_f: float
    tp_b: float


@dataclass(frozen=True)
class AnomalyWindow:
    """Constant extra arrival rate ``rate`` [pkt/s] active on [start, stop) [s]."""

    start: float
    stop: float
    rate: float


@dataclass(frozen=True)
class NetworkConfig:
    """Bottleneck router, its sources, and an optional anomaly schedule.

    Units: ``capacity`` pkt/s, ``buffer_size`` and ``target_queue`` pkt.
    """

    capacity: float
    buffer_size: float
    target_queue: float
    sources: tuple[Source, ...]
    anomalies: tuple[AnomalyWindow, ...] = field(default_factory=tuple)

    @property
    def n_sources(self) -> int:
        return len(self.sources)

    def eta(self) -> np.ndarray:
        return np.array([s.eta for s in self.sources], dtype=float)

    def tp_f(self) -> np.ndarray:
        return np.array([s.tp_f for s in self.sources], dtype=float)

    def tp_b(self) -> np.ndarray:
        return np.array([s.tp_b for s in self.sources], dtype=float)


@dataclass(frozen=True)
class Equilibrium:
    """A stationary operating point of the fluid model.

    ``p0`` holds the per-source drop probabilities: the stationary closure
    produces one common value, but the record deliberately does not enforce
    that (regression fixtures pin operating points with per-source values).
    Invariants are established by :func:`compute_equilibrium`, not here.
    """

    x0: np.ndarray  # per-source send rates [pkt/s]
    p0: np.ndarray  # per-source drop probabilities
    tau0: np.ndarray  # round-trip times [s]
    tau_f: np.ndarray  # forward (source->router) delays [s]
    tau_b: np.ndarray  # backward (router->source) delays, incl. queueing [s]
    b0: float  # queue level [pkt]
    w0: float = math.nan  # common window [pkt], when the closure applies

    @property
    def n_sources(self) -> int:
        return self.x0.shape[0]


class ValidationError(ValueError):
    """Raised by :func:`validate_config`; ``errors`` lists every violation."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def validate_config(cfg: NetworkConfig) -> NetworkConfig:
    """Check a configuration and return it; raise :class:`ValidationError` listing
    every violated rule otherwise."""
    errors: list[str] = []
    if not math.isfinite(cfg.capacity) or cfg.capacity <= 0:
        errors.append(f"capacity must be positive and finite, got {cfg.capacity}")
    if not math.isfinite(cfg.buffer_size) or cfg.buffer_size <= 0:
        errors.append(f"buffer_size must be positive and finite, got {cfg.buffer_size}")
    if not math.isfinite(cfg.target_queue) or cfg.target_queue <= 0:
        errors.append(f"target_queue must be positive and finite, got {cfg.target_queue}")
    elif math.isfinite(cfg.buffer_size) and cfg.target_queue >= cfg.buffer_size:
        errors.append(
            f"target_queue ({cfg.target_queue}) must be below buffer_size ({cfg.buffer_size})"
        )
    if len(cfg.sources) == 0:
        errors.append("at least one source is required")
    for i, s in enumerate(cfg.sources):
        if not math.isfinite(s.eta) or s.eta <= 0:
            errors.append(f"source {i}: eta must be positive, got {s.eta}")
        if not math.isfinite(s.tp_f) or s.tp_f < 0:
            errors.append(f"source {i}: tp_f must be >= 0, got {s.tp_f}")
        if not math.isfinite(s.tp_b) or s.tp_b < 0:
            errors.append(f"source {i}: tp_b must be >= 0, got {s.tp_b}")
        if s.tp_f + s.tp_b <= 0:
            errors.append(f"source {i}: propagation round trip must be positive")
    prev_stop = -math.inf
    for k, w in enumerate(sorted(cfg.anomalies, key=lambda w: w.start)):
        if not (math.isfinite(w.start) and math.isfinite(w.stop)) or w.start >= w.stop:
            errors.append(f"anomaly {k}: need start < stop, got [{w.start}, {w.stop})")
        if w.start < prev_stop:
            errors.append(f"anomaly {k}: windows overlap at t={w.start}")
        prev_stop = max(prev_stop, w.stop)
        if not math.isfinite(w.rate):
            errors.append(f"anomaly {k}: rate must be finite, got {w.rate}")
    if errors:
        raise ValidationError(errors)
    return cfg


def compute_equilibrium(cfg: NetworkConfig) -> Equilibrium:
    """Stationary operating point under the common-drop-probability closure."""
    validate_config(cfg)
    c = cfg.capacity
    b0 = cfg.target_queue
    eta = cfg.eta()
    tp_f = cfg.tp_f()
    tp_b = cfg.tp_b()
    tau0 = b0 / c + tp_f + tp_b
    w0 = c / float(np.sum(eta / tau0))
    x0 = w0 / tau0
    p0 = 2.0 / (2.0 + w0 * w0)
    return Equilibrium(
        x0=x0,
        p0=np.full(eta.shape, p0),
        tau0=tau0,
        tau_f=tp_f.copy(),
        tau_b=tp_b + b0 / c,
        b0=b0,
        w0=w0,
    )


def anomaly_rate(windows: tuple[AnomalyWindow, ...], t: float) -> float:
    """Piecewise-constant anomaly rate d(t) [pkt/s] at time ``t``."""
    total = 0.0
    for w in windows:
        if w.start <= t < w.stop:
            total += w.rate
    return total


def sample_anomaly(windows: tuple[AnomalyWindow, ...], times: np.ndarray) -> np.ndarray:
    """Sample d(t) on a grid (half-open windows: active on [start, stop))."""
    out = np.zeros_like(np.asarray(times, dtype=float))
    for w in windows:
        out[(times >= w.start) & (times < w.stop)] += w.rate
    return out


def rhs_residual(cfg: NetworkConfig, eq: Equilibrium) -> float:
    """Max |RHS| of the nonlinear model at the operating point, relative to capacity.

    Zero (to rounding) certifies stationarity: every delayed argument is held
    at its equilibrium value and d = 0.
    """
    from .linearize import rhs_nonlinear

    dx, db = rhs_nonlinear(cfg, eq.x0, eq.x0, eq.x0, eq.b0, eq.p0)
    scale = max(cfg.capacity, 1.0)
    return float(max(np.max(np.abs(dx)), abs(db)) / scale)
