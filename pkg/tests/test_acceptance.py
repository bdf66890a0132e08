"""Release acceptance: nine end-to-end criteria, one printed verdict line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
``CRITERION n: PASS/FAIL`` lines alongside the pytest verdicts.
"""

from __future__ import annotations

import time

import numpy as np

import flowscope as fs
from flowscope.cli import main
from flowscope.synthesis import SynthesisOptions, check_certificate, synthesize_gain, verify_gain

import _fixtures as fx


def _report(n: int, ok: bool, detail: str = "") -> None:
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f"  [{detail}]"
    print("\n" + line)
    assert ok, line


def _rel_residual(cfg, eq) -> float:
    dx, db = fs.rhs_nonlinear(cfg, eq.x0, eq.x0, eq.x0, eq.b0, eq.p0)
    rel_x = np.max(np.abs(dx) / (eq.x0 / eq.tau0))
    rel_b = abs(db) / cfg.capacity
    return max(float(rel_x), float(rel_b))


def test_criterion_01_equilibrium_identities():
    rng = np.random.default_rng(20260815)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        cfg = fx.random_cfg(rng)
        eq = fs.compute_equilibrium(cfg)
        rate_gap = abs(float(cfg.eta() @ eq.x0) - cfg.capacity) / cfg.capacity
        drop_gap = float(np.max(np.abs(eq.p0 - 2.0 / (2.0 + (eq.x0 * eq.tau0) ** 2)) / eq.p0))
        worst = max(worst, rate_gap, drop_gap, _rel_residual(cfg, eq))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-8 and elapsed < 1.0
    _report(1, ok, f"worst rel {worst:.2e}, {elapsed:.2f} s")


def test_criterion_02_finite_difference_oracle():
    t0 = time.perf_counter()
    worst = 0.0
    for n in (1, 2, 3, 5):
        rng = np.random.default_rng(100 + n)
        cfg = fx.random_cfg(rng, n=n)
        eq = fs.compute_equilibrium(cfg)
        lin = fs.linearize(eq, cfg)
        A_fd, Ad_fd = fs.fd_jacobian(cfg, eq)
        for fd, exact in ((A_fd, lin.A), (Ad_fd, lin.A_d)):
            denom = np.maximum(np.abs(exact), 1e-6 * np.max(np.abs(exact)))
            worst = max(worst, float(np.max(np.abs(fd - exact) / denom)))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-5 and elapsed < 1.0
    _report(2, ok, f"worst rel {worst:.2e} over N in (1,2,3,5), {elapsed:.2f} s")


def test_criterion_03_published_matrix_fixture():
    cfg, eq = fx.pinned_equilibrium()
    lin = fs.linearize(eq, cfg)
    checks = [
        np.max(np.abs(np.diag(lin.A)[:3] - fx.PIN_DIAG_A)) <= 0.005,
        np.max(np.abs(lin.A[:3, 3] - fx.PIN_H)) <= 0.005,
        np.max(np.abs(np.diag(lin.B) - fx.PIN_DIAG_B)) <= 0.5,
        np.max(np.abs(lin.A_d[0, :3] - fx.PIN_AD_ROW1)) <= 0.005,
        np.max(np.abs(lin.A_d[3, :3] - fx.PIN_AD_LAST)) <= 0.5,
    ]
    _report(3, all(checks), f"entry groups within print precision: {checks}")


def test_criterion_04_dde_oracle():
    t0 = time.perf_counter()
    sys = fs.DelaySystem(
        rhs=lambda t, y, zs: -zs[0], delays=np.array([1.0]), history=lambda t: np.array([1.0])
    )
    tr = fs.integrate(sys, horizon=3.0, h=1e-3)
    err = float(np.max(np.abs(tr.y[:, 0] - [fx.dde_exact(t) for t in tr.t])))

    def max_err(h):
        trace = fs.integrate(sys, horizon=5.0, h=h)
        return float(np.max(np.abs(trace.y[:, 0] - [fx.dde_exact(t) for t in trace.t])))

    ratio = max_err(0.02) / max_err(0.01)
    elapsed = time.perf_counter() - t0
    ok = err < 1e-6 and ratio >= 8.0 and elapsed < 1.0
    _report(4, ok, f"max err {err:.2e}, halving ratio {ratio:.1f}, {elapsed:.2f} s")


def test_criterion_05_synthesis_and_error_decay(rt):
    _, _, _, aug = rt
    t0 = time.perf_counter()
    result = synthesize_gain(aug)
    cert = check_certificate(aug, result)
    feasible = result.feasible and cert.ok
    min_eigs_ok = feasible and min(
        cert.min_eig_P, cert.min_eig_Q, cert.min_eig_S, cert.min_eig_block
    ) >= result.eps / 2.0
    rng = np.random.default_rng(5)
    horizon, h = 20.0, 1e-3
    nsteps = int(round(horizon / h))
    y = np.zeros(nsteps + 1)
    u = np.zeros((nsteps + 1, aug.n_sources))
    worst_ratio = 0.0
    if feasible:
        for _ in range(10):
            e0 = rng.standard_normal(aug.A_bar.shape[0])
            e0 *= 10.0 / np.linalg.norm(e0)
            obs = fs.run_observer(aug, result.L, y, u, horizon, h, z0=e0)
            worst_ratio = max(
                worst_ratio, float(np.linalg.norm(obs.z[-1]) / np.linalg.norm(e0))
            )
    elapsed = time.perf_counter() - t0
    ok = feasible and min_eigs_ok and worst_ratio < 0.01 and elapsed < 30.0
    _report(
        5,
        ok,
        f"status {result.status}, cert ok {cert.ok}, worst 20 s decay "
        f"{worst_ratio:.2e}, {elapsed:.1f} s",
    )


def test_criterion_06_published_gain_certification():
    cfg, eq = fx.pinned_equilibrium()
    aug = fs.augment(fs.linearize(eq, cfg))
    result = verify_gain(aug, fx.L_PAPER)
    retried = False
    if not result.feasible:
        retried = True
        result = verify_gain(aug, fx.L_PAPER, SynthesisOptions(eps=result.eps / 10.0))
    cert = check_certificate(aug, result)
    ok = result.feasible and cert.ok
    _report(6, ok, f"status {result.status}, retried at eps/10: {retried}")


def test_criterion_07_anomaly_scenario():
    scn = fs.load_scenario(fx.BURSTS_SCENARIO)
    eq = fs.compute_equilibrium(scn.cfg)
    t0 = time.perf_counter()
    tr = fs.closed_loop(
        scn.cfg, eq, scn.aqm, scn.gain, scn.horizon, scn.step, theta=scn.theta, hold=scn.hold
    )
    elapsed = time.perf_counter() - t0

    count_ok = len(tr.alarms) == 3
    onset_ok = contain_ok = mean_ok = count_ok
    if count_ok:
        for iv, (start, stop, rate) in zip(tr.alarms.intervals, fx.RT_BURSTS):
            onset_ok &= abs(iv.onset - start) <= 3.0
            contain_ok &= iv.onset >= start - scn.hold and iv.clear <= stop + scn.hold
            tail = (tr.t >= stop - 10.0) & (tr.t < stop)
            mean_ok &= abs(float(np.mean(tr.d_hat[tail])) - rate) <= 0.1 * rate
    padded = np.zeros_like(tr.alarm)
    for start, stop, _ in fx.RT_BURSTS:
        padded |= (tr.t >= start - scn.hold) & (tr.t < stop + scn.hold)
    quiet_ok = not np.any(tr.alarm & ~padded)

    ok = count_ok and onset_ok and contain_ok and mean_ok and quiet_ok and elapsed < 60.0
    _report(
        7,
        ok,
        f"{len(tr.alarms)} alarms, onsets {[f'{iv.onset:.1f}' for iv in tr.alarms.intervals]}, "
        f"{elapsed:.1f} s",
    )


def test_criterion_08_quiet_regulation():
    scn = fs.load_scenario(fx.QUIET_SCENARIO)
    eq = fs.compute_equilibrium(scn.cfg)
    tr = fs.closed_loop(
        scn.cfg,
        eq,
        scn.aqm,
        scn.gain,
        scn.horizon,
        scn.step,
        theta=scn.theta,
        hold=scn.hold,
        z0=scn.initial_estimate,
    )
    tail = tr.t >= scn.horizon - 100.0
    queue_mean = float(np.mean(tr.b[tail]))
    queue_ok = abs(queue_mean - eq.b0) <= 0.2 * eq.b0
    settled = tr.t >= 30.0
    rate_err = float(np.max(np.abs(tr.x_hat[settled] - tr.x[settled]) / tr.x[settled]))
    rate_ok = rate_err <= 0.02
    ok = queue_ok and rate_ok
    _report(
        8, ok, f"final-100 s queue mean {queue_mean:.1f} pkt, worst rate err {rate_err:.2%}"
    )


def test_criterion_09_run_determinism(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    for out in (out1, out2):
        code = main(["run", str(fx.BURSTS_SCENARIO), "--out", str(out), "--no-plots"])
        assert code == 0
    same = all(
        (out1 / name).read_bytes() == (out2 / name).read_bytes()
        for name in ("combined.csv", "metrics.csv")
    )
    _report(9, same, "combined.csv and metrics.csv byte-identical across reruns")
