"""Command-line pipeline: validate → equilibrium → linearize → synthesize →
simulate → detect → report.

Subcommands: ``equilibrium``, ``linearize``, ``synthesize``, ``run`` (full
closed loop; ``--batch`` for a directory of scenarios), ``detect``
(re-threshold an existing trace CSV). Exit codes: 0 success, 1 validation
error, 2 proven infeasibility, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .linearize import augment, fd_jacobian, linearize
from .observer import closed_loop, detect_anomalies, error_metrics
from .output import atomic_write_text, plot_combined, read_csv_columns, write_csv, write_matrix_csv
from .scenario import Scenario, load_scenario
from .synthesis import (
    SynthesisOptions,
    SynthesisResult,
    check_certificate,
    export_triplets,
    synthesize_gain,
    verify_gain,
)
from .topology import ValidationError, compute_equilibrium

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_INFEASIBLE = 2
EXIT_NUMERICAL = 3


def _apply_overrides(scn: Scenario, args) -> Scenario:
    updates = {}
    if getattr(args, "out", None):
        updates["output_dir"] = args.out
    if getattr(args, "step", None):
        updates["step"] = args.step
    if getattr(args, "theta", None) is not None:
        updates["theta"] = args.theta
    if getattr(args, "hold", None) is not None:
        updates["hold"] = args.hold
    if getattr(args, "eps", None) is not None:
        updates["eps"] = args.eps
    if getattr(args, "decimate", None) is not None:
        updates["decimate"] = args.decimate
    return dataclasses.replace(scn, **updates) if updates else scn


def _equilibrium_table(scn: Scenario):
    eq = compute_equilibrium(scn.cfg)
    n = scn.cfg.n_sources
    cols = {
        "source": np.arange(1, n + 1, dtype=float),
        "eta": scn.cfg.eta(),
        "tp_f": scn.cfg.tp_f(),
        "tp_b": scn.cfg.tp_b(),
        "tau0": eq.tau0,
        "tau_f": eq.tau_f,
        "tau_b": eq.tau_b,
        "x0": eq.x0,
        "p0": eq.p0,
        "w0": np.full(n, eq.w0),
        "b0": np.full(n, eq.b0),
    }
    return eq, cols


def cmd_equilibrium(args) -> int:
    scn = _apply_overrides(load_scenario(args.scenario), args)
    eq, cols = _equilibrium_table(scn)
    outdir = Path(scn.output_dir)
    path = write_csv(outdir / "equilibrium.csv", cols)
    print(f"operating point: w0={eq.w0:.6g} pkt, p0={float(np.mean(eq.p0)):.6g}")
    for i in range(scn.cfg.n_sources):
        print(
            f"  source {i + 1}: tau0={eq.tau0[i]:.6g} s  x0={eq.x0[i]:.6g} pkt/s"
        )
    print(f"wrote {path}")
    return EXIT_OK


def cmd_linearize(args) -> int:
    scn = _apply_overrides(load_scenario(args.scenario), args)
    eq = compute_equilibrium(scn.cfg)
    lin = linearize(eq, scn.cfg)
    aug = augment(lin)
    outdir = Path(scn.output_dir)
    write_matrix_csv(outdir / "A.csv", lin.A)
    write_matrix_csv(outdir / "Ad.csv", lin.A_d)
    write_matrix_csv(outdir / "B.csv", lin.B)
    write_matrix_csv(outdir / "C.csv", lin.C)
    write_matrix_csv(outdir / "Abar.csv", aug.A_bar)
    write_matrix_csv(outdir / "Cbar.csv", aug.C_bar)
    for i, M in enumerate(aug.A_bar_d, 1):
        write_matrix_csv(outdir / f"Abar_d{i}.csv", M)
    write_csv(
        outdir / "coefficients.csv",
        {
            "source": np.arange(1, lin.n_sources + 1, dtype=float),
            "a": lin.a,
            "h": lin.h,
            "f": lin.f,
            "e": lin.e,
        },
    )
    if args.fd_check:
        A_fd, Ad_fd = fd_jacobian(scn.cfg, eq)
        err_A = float(np.max(np.abs(A_fd - lin.A)))
        err_Ad = float(np.max(np.abs(Ad_fd - lin.A_d)))
        print(f"finite-difference check: max|A-A_fd|={err_A:.3e} max|Ad-Ad_fd|={err_Ad:.3e}")
    print(f"wrote linear model matrices to {outdir}/")
    return EXIT_OK


def _synthesize(scn: Scenario, aug) -> SynthesisResult:
    opts = SynthesisOptions(eps=scn.eps)
    if scn.gain is not None:
        return verify_gain(aug, scn.gain, opts)
    return synthesize_gain(aug, opts)


def _result_exit(result: SynthesisResult) -> int:
    if result.feasible:
        return EXIT_OK
    if result.status == "infeasible":
        return EXIT_INFEASIBLE
    return EXIT_NUMERICAL


def cmd_synthesize(args) -> int:
    scn = _apply_overrides(load_scenario(args.scenario), args)
    eq = compute_equilibrium(scn.cfg)
    aug = augment(linearize(eq, scn.cfg))
    result = _synthesize(scn, aug)
    outdir = Path(scn.output_dir)
    mode = "verify" if scn.gain is not None else "synthesize"
    lines = [
        f"mode: {mode}",
        f"status: {result.status}",
        f"solver: {result.solver_status}",
        f"eps: {result.eps!r}",
    ]
    if result.feasible:
        report = check_certificate(aug, result)
        write_csv(outdir / "gain.csv", {"L": result.L})
        write_matrix_csv(outdir / "certificate_P.csv", result.P)
        write_matrix_csv(outdir / "certificate_X.csv", result.X)
        for i, Q in enumerate(result.Qs, 1):
            write_matrix_csv(outdir / f"certificate_Q{i}.csv", Q)
        for i, S in enumerate(result.Ss, 1):
            write_matrix_csv(outdir / f"certificate_S{i}.csv", S)
        lines += [
            f"gain: {np.array2string(result.L, precision=6)}",
            f"certificate check: {'pass' if report.ok else 'FAIL'}",
            f"min eig P: {report.min_eig_P!r}",
            f"min eig Q: {report.min_eig_Q!r}",
            f"min eig S: {report.min_eig_S!r}",
            f"min eig block: {report.min_eig_block!r}",
            f"gain residual: {report.gain_residual!r}",
        ]
        lines += [f"note: {m}" for m in report.messages]
    elif result.status == "infeasible" and scn.gain is not None:
        lines.append("note: condition is sufficient only; infeasibility is inconclusive")
    atomic_write_text(outdir / "synthesis_report.txt", "\n".join(lines) + "\n")
    atomic_write_text(outdir / "lmi_sdpa.dats", export_triplets(aug, eps=result.eps))
    print("\n".join(lines))
    print(f"wrote synthesis artifacts to {outdir}/")
    return _result_exit(result)


def _run_one(scn: Scenario, make_plots: bool) -> int:
    eq = compute_equilibrium(scn.cfg)
    aug = augment(linearize(eq, scn.cfg))
    if scn.gain is not None:
        gain = scn.gain
        gain_note = "fixed gain from scenario"
    else:
        result = _synthesize(scn, aug)
        code = _result_exit(result)
        if code != EXIT_OK:
            print(f"synthesis failed: {result.status} ({result.solver_status})", file=sys.stderr)
            return code
        gain = result.L
        gain_note = f"synthesized gain ({result.solver_status})"
    theta = scn.theta if scn.theta is not None else 0.05 * scn.cfg.capacity
    trace = closed_loop(
        scn.cfg,
        eq,
        scn.aqm,
        gain,
        scn.horizon,
        scn.step,
        aug=aug,
        theta=theta,
        hold=scn.hold,
        z0=scn.initial_estimate,
        quantize_measurement=scn.quantize_measurement,
    )
    outdir = Path(scn.output_dir)
    csv_path = write_csv(outdir / "combined.csv", trace.columns(), decimate=scn.decimate)
    truth = np.column_stack([trace.x, trace.b])
    estimate = np.column_stack([trace.x_hat, trace.b_hat])
    metrics = error_metrics(trace.t, truth, estimate)
    names = [f"x{i + 1}" for i in range(trace.x.shape[1])] + ["b"]
    write_csv(
        outdir / "metrics.csv",
        {
            "state": np.arange(1, len(names) + 1, dtype=float),
            "rmse": metrics.rmse,
            "bias": metrics.bias,
        },
    )
    report_txt = (
        trace.alarms.summary()
        + f"\nconvergence time: {metrics.convergence_time!r} s"
        + f"\ngain: {gain_note}"
        + "\n"
    )
    atomic_write_text(outdir / "alarms.txt", report_txt)
    if make_plots:
        plot_combined(csv_path, outdir / "combined.svg", theta=theta)
    print(f"[{scn.name}] {trace.alarms.summary()}")
    print(f"[{scn.name}] wrote trace and reports to {outdir}/")
    return EXIT_OK


def _run_batch_entry(path_str: str, outbase: str, make_plots: bool) -> tuple[str, int]:
    try:
        scn = load_scenario(path_str)
        scn = dataclasses.replace(scn, output_dir=str(Path(outbase) / scn.name))
        return path_str, _run_one(scn, make_plots)
    except ValidationError as exc:
        print(f"{path_str}: {exc}", file=sys.stderr)
        return path_str, EXIT_VALIDATION
    except FloatingPointError as exc:
        print(f"{path_str}: {exc}", file=sys.stderr)
        return path_str, EXIT_NUMERICAL


def cmd_run(args) -> int:
    if args.batch:
        base = Path(args.scenario)
        files = sorted(str(p) for p in base.glob("*.yaml"))
        if not files:
            raise ValidationError([f"no scenario files (*.yaml) in {base}"])
        outbase = args.out or "out"
        make_plots = not args.no_plots
        worst = EXIT_OK
        with concurrent.futures.ProcessPoolExecutor(
            max_workers=min(len(files), os.cpu_count() or 1)
        ) as pool:
            for _, code in pool.map(
                _run_batch_entry, files, [outbase] * len(files), [make_plots] * len(files)
            ):
                worst = max(worst, code)
        return worst
    scn = _apply_overrides(load_scenario(args.scenario), args)
    return _run_one(scn, make_plots=not args.no_plots)


def cmd_detect(args) -> int:
    cols = read_csv_columns(args.trace)
    if "dhat" not in cols or "t" not in cols:
        raise ValidationError([f"{args.trace}: need columns 't' and 'dhat'"])
    t = cols["t"]
    if t.shape[0] < 2:
        raise ValidationError([f"{args.trace}: trace too short"])
    h = float(t[1] - t[0])
    report = detect_anomalies(cols["dhat"], h, args.theta, args.hold)
    print(report.summary())
    if args.out:
        atomic_write_text(Path(args.out) / "alarms.txt", report.summary() + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowscope",
        description="Fluid-flow TCP/AQM lab: equilibrium, linearization, "
        "delay-LMI observer synthesis, nonlinear simulation, anomaly detection.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, step=True):
        p.add_argument("scenario", help="scenario YAML file")
        p.add_argument("--out", help="output directory (overrides scenario)")
        p.add_argument("--eps", type=float, help="LMI strictness margin override")
        if step:
            p.add_argument("--step", type=float, help="integration step override [s]")

    p = sub.add_parser("equilibrium", help="compute and export the operating point")
    common(p)
    p.set_defaults(func=cmd_equilibrium)

    p = sub.add_parser("linearize", help="export small-signal model matrices")
    common(p)
    p.add_argument(
        "--fd-check",
        action="store_true",
        help="also print the finite-difference Jacobian agreement",
    )
    p.set_defaults(func=cmd_linearize)

    p = sub.add_parser("synthesize", help="solve the observer-gain LMI (or verify a fixed gain)")
    common(p, step=False)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("run", help="full closed-loop run with trace/alarm/metric artifacts")
    common(p)
    p.add_argument("--batch", action="store_true", help="treat SCENARIO as a directory of YAML files")
    p.add_argument("--theta", type=float, help="alarm threshold override [pkt/s]")
    p.add_argument("--hold", type=float, help="alarm dwell time override [s]")
    p.add_argument("--decimate", type=int, help="CSV row decimation override")
    p.add_argument("--no-plots", action="store_true", help="skip SVG rendering")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("detect", help="re-threshold the anomaly estimate of an existing trace CSV")
    p.add_argument("trace", help="trace CSV with 't' and 'dhat' columns")
    p.add_argument("--theta", type=float, required=True, help="alarm threshold [pkt/s]")
    p.add_argument("--hold", type=float, default=1.0, help="alarm dwell time [s]")
    p.add_argument("--out", help="optional output directory for alarms.txt")
    p.set_defaults(func=cmd_detect)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        for line in exc.errors:
            print(f"validation error: {line}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ValueError, FileNotFoundError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FloatingPointError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
