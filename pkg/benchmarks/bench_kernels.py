"""Benchmark the compiled simulation kernels against the pure-Python fallback.

Runs the reference three-source network (plant integration and observer
integration separately) in two subprocesses — one with numba enabled, one
with ``FLOWSCOPE_NO_NUMBA=1`` — and reports best-of-``--repeat`` wall times.

Usage::

    python benchmarks/bench_kernels.py [--horizon 30] [--step 1e-3] [--repeat 3]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time


def _measure(horizon: float, step: float, repeat: int) -> dict[str, float]:
    import numpy as np

    import flowscope as fs

    cfg = fs.NetworkConfig(
        capacity=2500.0,
        buffer_size=400.0,
        target_queue=100.0,
        sources=(
            fs.Source(20.0, 0.025, 0.05),
            fs.Source(20.0, 0.05, 0.10),
            fs.Source(20.0, 0.075, 0.15),
        ),
        anomalies=(fs.AnomalyWindow(horizon / 3, 2 * horizon / 3, 750.0),),
    )
    eq = fs.compute_equilibrium(cfg)
    aug = fs.augment(fs.linearize(eq, cfg))
    aqm = fs.AqmPolicy(kind="pi", kp=3e-4, ki=0.0)
    gain = np.array([-1.52, -0.44, -0.19, 9.51, 4.58])

    # Warm the JIT caches (no-op on the fallback path) before timing.
    warm = fs.simulate_plant(cfg, eq, aqm, horizon=1.0, h=step)
    fs.run_observer(
        aug, gain, warm.b - eq.b0, np.zeros((warm.t.shape[0], 3)), horizon=1.0, h=step
    )

    def best(fn) -> float:
        times = []
        for _ in range(repeat):
            t0 = time.perf_counter()
            fn()
            times.append(time.perf_counter() - t0)
        return min(times)

    plant = fs.simulate_plant(cfg, eq, aqm, horizon=horizon, h=step)
    y = plant.b - eq.b0
    u = fs.build_delayed_inputs(plant.p, float(np.mean(eq.p0)), aug.tau_b, step)
    return {
        "plant": best(lambda: fs.simulate_plant(cfg, eq, aqm, horizon=horizon, h=step)),
        "observer": best(lambda: fs.run_observer(aug, gain, y, u, horizon=horizon, h=step)),
    }


def _run_child(no_numba: bool, args: argparse.Namespace) -> dict[str, float]:
    env = dict(os.environ)
    env.pop("FLOWSCOPE_NO_NUMBA", None)
    if no_numba:
        env["FLOWSCOPE_NO_NUMBA"] = "1"
    cmd = [
        sys.executable,
        os.path.abspath(__file__),
        "--_emit-json",
        "--horizon",
        str(args.horizon),
        "--step",
        str(args.step),
        "--repeat",
        str(args.repeat),
    ]
    out = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--horizon", type=float, default=30.0, help="simulated seconds per run")
    ap.add_argument("--step", type=float, default=1e-3, help="integration step (s)")
    ap.add_argument("--repeat", type=int, default=3, help="repetitions; best time kept")
    ap.add_argument("--_emit-json", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()

    if getattr(args, "_emit_json"):
        print(json.dumps(_measure(args.horizon, args.step, args.repeat)))
        return

    steps = int(round(args.horizon / args.step))
    print(f"reference network, horizon {args.horizon:g} s, {steps} steps, best of {args.repeat}")
    jit = _run_child(no_numba=False, args=args)
    py = _run_child(no_numba=True, args=args)
    print(f"{'kernel':<10} {'numba (s)':>12} {'pure python (s)':>17} {'speedup':>9}")
    for name in ("plant", "observer"):
        print(f"{name:<10} {jit[name]:>12.4f} {py[name]:>17.4f} {py[name] / jit[name]:>8.1f}x")


if __name__ == "__main__":
    main()
