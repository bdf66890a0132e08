"""Scenario files: one YAML document describing a full experiment.

Schema (``schema_version: 1``, all SI units — pkt/s, pkt, s):

.. code-block:: yaml

    schema_version: 1
    name: my-experiment
    network:
      capacity: 2500.0
      buffer_size: 400.0
      target_queue: 100.0
      sources:
        - {eta: 20.0, tp_f: 0.025, tp_b: 0.05}
    anomalies:
      - {start: 150.0, stop: 170.0, rate: 750.0}
    aqm: {kind: pi, kp: 3.0e-4, ki: 0.0}
    integration: {horizon: 400.0, step: 1.0e-3}
    observer:
      eps: null            # synthesis margin (null -> automatic)
      theta: 125.0         # alarm threshold, pkt/s (null -> 5% of capacity)
      hold: 3.0            # alarm dwell time, s
      gain: [...]          # optional fixed observer gain (length N+2)
      initial_estimate: [...]  # optional observer start (length N+2)
      quantize_measurement: false
    output:
      directory: out
      decimate: 100        # CSV row decimation (1 = every step)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .plant import AqmPolicy
from .topology import AnomalyWindow, NetworkConfig, Source, ValidationError, validate_config

__all__ = ["Scenario", "load_scenario", "SCHEMA_VERSION"]

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Scenario:
    """Validated experiment description."""

    name: str
    cfg: NetworkConfig
    aqm: AqmPolicy
    horizon: float
    step: float
    eps: float | None = None
    theta: float | None = None
    hold: float = 1.0
    gain: np.ndarray | None = None
    initial_estimate: np.ndarray | None = None
    quantize_measurement: bool = False
    output_dir: str = "out"
    decimate: int = 1
    source_path: str | None = None
    meta: dict = field(default_factory=dict)


def _require(mapping: dict, key: str, ctx: str):
    if key not in mapping:
        raise ValidationError([f"{ctx}: missing required key {key!r}"])
    return mapping[key]


def load_scenario(path: str | Path) -> Scenario:
    """Parse and validate a scenario file; raises ValidationError on any problem."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except FileNotFoundError:
        raise ValidationError([f"scenario file not found: {path}"]) from None
    except yaml.YAMLError as exc:
        raise ValidationError([f"scenario file is not valid YAML: {exc}"]) from None
    if not isinstance(raw, dict):
        raise ValidationError([f"{path}: scenario must be a mapping"])
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValidationError(
            [f"{path}: unsupported schema_version {version!r} (expected {SCHEMA_VERSION})"]
        )
    net = _require(raw, "network", str(path))
    sources = tuple(
        Source(eta=float(s["eta"]), tp_f=float(s["tp_f"]), tp_b=float(s["tp_b"]))
        for s in _require(net, "sources", "network")
    )
    anomalies = tuple(
        AnomalyWindow(start=float(w["start"]), stop=float(w["stop"]), rate=float(w["rate"]))
        for w in raw.get("anomalies", []) or []
    )
    cfg = NetworkConfig(
        capacity=float(_require(net, "capacity", "network")),
        buffer_size=float(_require(net, "buffer_size", "network")),
        target_queue=float(_require(net, "target_queue", "network")),
        sources=sources,
        anomalies=anomalies,
    )
    validate_config(cfg)

    aqm_raw = raw.get("aqm", {}) or {}
    aqm = AqmPolicy(
        kind=str(aqm_raw.get("kind", "pi")),
        kp=float(aqm_raw.get("kp", 0.0)),
        ki=float(aqm_raw.get("ki", 0.0)),
    )
    integ = _require(raw, "integration", str(path))
    horizon = float(_require(integ, "horizon", "integration"))
    step = float(_require(integ, "step", "integration"))
    if horizon <= 0 or step <= 0:
        raise ValidationError(["integration: horizon and step must be positive"])

    obs = raw.get("observer", {}) or {}
    gain = obs.get("gain")
    gain_arr = None
    if gain is not None:
        gain_arr = np.asarray([float(g) for g in gain], dtype=float)
        if gain_arr.shape[0] != len(sources) + 2:
            raise ValidationError(
                [f"observer.gain must have length {len(sources) + 2}, got {gain_arr.shape[0]}"]
            )
    z0 = obs.get("initial_estimate")
    z0_arr = None
    if z0 is not None:
        z0_arr = np.asarray([float(g) for g in z0], dtype=float)
        if z0_arr.shape[0] != len(sources) + 2:
            raise ValidationError(
                [
                    f"observer.initial_estimate must have length {len(sources) + 2}, "
                    f"got {z0_arr.shape[0]}"
                ]
            )
    eps = obs.get("eps")
    theta = obs.get("theta")
    hold = float(obs.get("hold", 1.0))
    if hold < 0:
        raise ValidationError(["observer.hold must be >= 0"])
    if theta is not None and float(theta) <= 0:
        raise ValidationError(["observer.theta must be positive"])

    out = raw.get("output", {}) or {}
    decimate = int(out.get("decimate", 1))
    if decimate < 1:
        raise ValidationError(["output.decimate must be >= 1"])

    return Scenario(
        name=str(raw.get("name", path.stem)),
        cfg=cfg,
        aqm=aqm,
        horizon=horizon,
        step=step,
        eps=None if eps is None else float(eps),
        theta=None if theta is None else float(theta),
        hold=hold,
        gain=gain_arr,
        initial_estimate=z0_arr,
        quantize_measurement=bool(obs.get("quantize_measurement", False)),
        output_dir=str(out.get("directory", "out")),
        decimate=decimate,
        source_path=str(path),
    )
