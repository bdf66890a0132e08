"""Observer runtime: state estimation, co-simulation, metrics, anomaly alarms.

The observer integrates

    dz/dt = A_bar z + sum_i A_bar_di z(t - tau_f_i) + B_bar u(t)
            + L (y(t) - C_bar z)

against the measured queue deviation ``y(t) = b(t) - b0`` and the
backward-delayed drop-probability deviations ``u_i(t) = dp(t - tau_b_i)``.
Its last state component is the anomaly-rate estimate ``d_hat``; alarms are
raised from ``|d_hat|`` with a dwell-time rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import observer_kernel
from .linearize import AugmentedModel
from .plant import AqmPolicy, PlantTrace, simulate_plant
from .topology import Equilibrium, NetworkConfig

__all__ = [
    "ObserverTrace",
    "CombinedTrace",
    "AlarmInterval",
    "AlarmReport",
    "ErrorMetrics",
    "run_observer",
    "build_delayed_inputs",
    "closed_loop",
    "detect_anomalies",
    "error_metrics",
]


@dataclass
class ObserverTrace:
    """Observer state on the integration grid: columns (dx_hat, db_hat, d_hat)."""

    t: np.ndarray
    z: np.ndarray

    @property
    def d_hat(self) -> np.ndarray:
        return self.z[:, -1]

    @property
    def db_hat(self) -> np.ndarray:
        return self.z[:, -2]


@dataclass(frozen=True)
class AlarmInterval:
    """One detected anomaly interval with its mean estimated rate."""

    onset: float
    clear: float
    mean_d_hat: float


@dataclass(frozen=True)
class AlarmReport:
    """Ordered, disjoint alarm intervals for a given threshold/dwell setting."""

    intervals: tuple[AlarmInterval, ...]
    theta: float
    hold: float

    def __len__(self) -> int:
        return len(self.intervals)

    def summary(self) -> str:
        lines = [
            f"alarms: {len(self.intervals)} (threshold {self.theta:g} pkt/s, "
            f"hold {self.hold:g} s)"
        ]
        for k, iv in enumerate(self.intervals, 1):
            lines.append(
                f"  [{k}] onset {iv.onset:.3f} s  clear {iv.clear:.3f} s  "
                f"duration {iv.clear - iv.onset:.3f} s  mean d_hat {iv.mean_d_hat:.1f} pkt/s"
            )
        return "\n".join(lines)


@dataclass
class CombinedTrace:
    """Plant truth and observer estimates side by side on one grid.

    ``p_applied[:, i]`` is the drop probability source ``i`` is acting on at
    time t (the router output delayed by ``tau_b_i``). ``alarm`` flags samples
    inside detected intervals.
    """

    t: np.ndarray
    x: np.ndarray
    b: np.ndarray
    p_applied: np.ndarray
    d: np.ndarray
    x_hat: np.ndarray
    b_hat: np.ndarray
    d_hat: np.ndarray
    alarm: np.ndarray
    alarms: AlarmReport
    meta: dict = field(default_factory=dict)

    def columns(self) -> dict[str, np.ndarray]:
        n = self.x.shape[1]
        cols: dict[str, np.ndarray] = {"t": self.t}
        for i in range(n):
            cols[f"x{i + 1}"] = self.x[:, i]
        for i in range(n):
            cols[f"xhat{i + 1}"] = self.x_hat[:, i]
        cols["b"] = self.b
        cols["bhat"] = self.b_hat
        for i in range(n):
            cols[f"p{i + 1}"] = self.p_applied[:, i]
        cols["d"] = self.d
        cols["dhat"] = self.d_hat
        cols["alarm"] = self.alarm.astype(float)
        return cols


@dataclass(frozen=True)
class ErrorMetrics:
    """Per-state RMSE and steady bias of (truth - estimate), plus the first
    time the error norm drops below 1% of its initial value (inf if never,
    0 if the initial error is zero)."""

    rmse: np.ndarray
    bias: np.ndarray
    convergence_time: float


def run_observer(
    aug: AugmentedModel,
    L: np.ndarray,
    y: np.ndarray,
    u: np.ndarray,
    horizon: float,
    h: float,
    z0: np.ndarray | None = None,
) -> ObserverTrace:
    """Integrate the observer against sampled measurement/input series.

    ``y`` and ``u`` must be sampled on the integration grid (``nsteps + 1``
    nodes); a shape mismatch is rejected. History before t=0 is held at
    ``z0`` (default zero).
    """
    if h <= 0 or horizon <= 0:
        raise ValueError("horizon and step must be positive")
    nsteps = int(round(horizon / h))
    if nsteps < 1 or abs(nsteps * h - horizon) > 1e-9 * max(1.0, abs(horizon)):
        raise ValueError(f"step {h} does not divide horizon {horizon}")
    if h > float(np.min(aug.tau_f)) / 10.0 + 1e-12:
        raise ValueError(
            f"step {h} too coarse: need h <= min(delay)/10 = {np.min(aug.tau_f) / 10.0}"
        )
    y = np.asarray(y, dtype=float)
    u = np.asarray(u, dtype=float)
    if y.shape != (nsteps + 1,):
        raise ValueError(f"measurement series shape {y.shape} != ({nsteps + 1},)")
    if u.shape != (nsteps + 1, aug.n_sources):
        raise ValueError(
            f"input series shape {u.shape} != ({nsteps + 1}, {aug.n_sources})"
        )
    L = np.asarray(L, dtype=float).ravel()
    if L.shape[0] != aug.n:
        raise ValueError(f"gain length {L.shape[0]} != {aug.n}")
    z0 = np.zeros(aug.n) if z0 is None else np.asarray(z0, dtype=float)
    k0 = int(math.ceil(float(np.max(aug.tau_f)) / h)) + 2
    z = observer_kernel(
        h,
        nsteps,
        k0,
        y,
        u,
        aug.A_bar,
        aug.delay_column(),
        aug.eta,
        aug.e,
        L,
        aug.tau_f.astype(float),
        z0,
    )
    if not np.all(np.isfinite(z)):
        bad = np.argwhere(~np.isfinite(z))[0, 0]
        raise FloatingPointError(f"observer state became non-finite at t={bad * h:.6g}")
    return ObserverTrace(t=h * np.arange(nsteps + 1), z=z)


def build_delayed_inputs(
    p_node: np.ndarray, p_ref: float, tau_b: np.ndarray, h: float
) -> np.ndarray:
    """Per-source backward-delayed drop deviations ``u_i(k) = dp(t_k - tau_b_i)``.

    Router-local node series ``p_node`` is shifted by each backward delay with
    linear interpolation; before t=0 the deviation is zero (equilibrium
    pre-history).
    """
    nsteps = p_node.shape[0] - 1
    dp = p_node - p_ref
    out = np.zeros((nsteps + 1, tau_b.shape[0]))
    for i, tb in enumerate(np.asarray(tau_b, dtype=float)):
        idx = np.arange(nsteps + 1) - tb / h
        j = np.floor(idx).astype(int)
        th = idx - j
        lo = dp[np.clip(j, 0, nsteps)]
        hi = dp[np.clip(j + 1, 0, nsteps)]
        vals = lo * (1.0 - th) + hi * th
        vals[idx <= 0] = 0.0
        out[:, i] = vals
    return out


def closed_loop(
    cfg: NetworkConfig,
    eq: Equilibrium,
    aqm: AqmPolicy,
    L: np.ndarray,
    horizon: float,
    h: float,
    aug: AugmentedModel | None = None,
    theta: float | None = None,
    hold: float = 1.0,
    z0: np.ndarray | None = None,
    x_init: np.ndarray | None = None,
    b_init: float | None = None,
    quantize_measurement: bool = False,
) -> CombinedTrace:
    """Plant and observer co-simulated on one grid.

    The observer consumes the plant's measured queue deviation and the AQM's
    backward-delayed drop deviations; it does not feed back into the plant, so
    the co-simulation runs plant-first on the same grid. ``theta`` defaults to
    5% of capacity; ``quantize_measurement`` rounds the measured queue to
    whole packets (off by default).
    """
    if aug is None:
        from .linearize import augment, linearize

        aug = augment(linearize(eq, cfg))
    plant = simulate_plant(cfg, eq, aqm, horizon, h, x_init=x_init, b_init=b_init)
    b_meas = np.round(plant.b) if quantize_measurement else plant.b
    y = b_meas - eq.b0
    p_ref = float(np.mean(eq.p0))
    u = build_delayed_inputs(plant.p, p_ref, aug.tau_b, h)
    obs = run_observer(aug, L, y, u, horizon, h, z0=z0)
    n = cfg.n_sources
    theta = 0.05 * cfg.capacity if theta is None else float(theta)
    report = detect_anomalies(obs.d_hat, h, theta, hold)
    alarm = np.zeros(plant.t.shape[0], dtype=bool)
    for iv in report.intervals:
        alarm[(plant.t >= iv.onset) & (plant.t < iv.clear)] = True
    return CombinedTrace(
        t=plant.t,
        x=plant.x,
        b=plant.b,
        p_applied=u + p_ref,
        d=plant.d,
        x_hat=eq.x0[None, :] + obs.z[:, :n],
        b_hat=eq.b0 + obs.z[:, n],
        d_hat=obs.d_hat,
        alarm=alarm,
        alarms=report,
        meta={"theta": theta, "hold": hold, "h": h},
    )


def detect_anomalies(
    d_hat: np.ndarray, h: float, theta: float, hold: float
) -> AlarmReport:
    """Dwell-time thresholding of the anomaly estimate.

    An alarm opens at the start of the first run with ``|d_hat| > theta``
    sustained for at least ``hold`` seconds, and closes at the start of the
    next run with ``|d_hat| <= theta`` sustained for at least ``hold``
    (shorter excursions in either direction are ignored). An alarm still open
    at the end of the series is closed at the final sample.
    """
    if theta <= 0:
        raise ValueError("theta must be positive")
    if hold < 0:
        raise ValueError("hold must be >= 0")
    d_hat = np.asarray(d_hat, dtype=float)
    above = np.abs(d_hat) > theta
    n = d_hat.shape[0]
    t_end = (n - 1) * h
    # run-length encode the above/below sequence
    runs: list[tuple[int, int, bool]] = []
    start = 0
    for k in range(1, n + 1):
        if k == n or above[k] != above[start]:
            runs.append((start, k, bool(above[start])))
            start = k
    intervals: list[AlarmInterval] = []
    onset: float | None = None
    for start, stop, is_above in runs:
        duration = (stop - start) * h
        if is_above and onset is None and duration >= hold - 1e-12:
            onset = start * h
        elif not is_above and onset is not None and duration >= hold - 1e-12:
            clear = start * h
            intervals.append(_make_interval(d_hat, h, onset, clear))
            onset = None
    if onset is not None:
        intervals.append(_make_interval(d_hat, h, onset, t_end))
    return AlarmReport(intervals=tuple(intervals), theta=float(theta), hold=float(hold))


def _make_interval(d_hat: np.ndarray, h: float, onset: float, clear: float) -> AlarmInterval:
    i0 = int(round(onset / h))
    i1 = max(int(round(clear / h)), i0 + 1)
    return AlarmInterval(
        onset=onset, clear=clear, mean_d_hat=float(np.mean(d_hat[i0 : i1 + 1]))
    )


def error_metrics(
    t: np.ndarray, truth: np.ndarray, estimate: np.ndarray, steady_frac: float = 0.1
) -> ErrorMetrics:
    """Deterministic estimation-quality scalars for aligned traces.

    Error is ``truth - estimate`` (column-wise). ``bias`` averages the error
    over the trailing ``steady_frac`` of the horizon; ``convergence_time`` is
    the first grid time with ``||e(t)|| < 0.01 ||e(0)||``.
    """
    truth = np.atleast_2d(np.asarray(truth, dtype=float).T).T
    estimate = np.atleast_2d(np.asarray(estimate, dtype=float).T).T
    if truth.shape != estimate.shape or truth.shape[0] != np.asarray(t).shape[0]:
        raise ValueError(
            f"misaligned traces: truth {truth.shape}, estimate {estimate.shape}, "
            f"t {np.asarray(t).shape}"
        )
    err = truth - estimate
    rmse = np.sqrt(np.mean(err**2, axis=0))
    tail = max(1, int(round(steady_frac * err.shape[0])))
    bias = np.mean(err[-tail:], axis=0)
    norms = np.linalg.norm(err, axis=1)
    if norms[0] == 0.0:
        conv = 0.0
    else:
        below = np.nonzero(norms < 0.01 * norms[0])[0]
        conv = float(t[below[0]]) if below.size else math.inf
    return ErrorMetrics(rmse=rmse, bias=bias, convergence_time=conv)
