"""Deterministic artifact writers: CSV tables, text reports, static SVG plots.

All writers are atomic (write to a temp file in the target directory, then
rename), so failed runs leave no partial outputs. Floats are serialized with
``repr`` (shortest round-trip form), which is deterministic for identical
inputs; plots fix the SVG hash salt and strip date metadata so re-runs are
byte-stable there too.
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np

__all__ = [
    "atomic_write_text",
    "write_csv",
    "write_matrix_csv",
    "read_csv_columns",
    "plot_combined",
]


def atomic_write_text(path: str | Path, text: str) -> Path:
    """Write text via temp file + rename; creates parent directories."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
    return path


def _fmt(v: float) -> str:
    return repr(float(v))


def write_csv(path: str | Path, columns: dict[str, np.ndarray], decimate: int = 1) -> Path:
    """Write named columns as CSV (optionally keeping every ``decimate``-th row).

    The final row is always kept so trace endpoints survive decimation.
    """
    names = list(columns)
    arrays = [np.asarray(columns[n]) for n in names]
    n_rows = arrays[0].shape[0]
    for nm, arr in zip(names, arrays):
        if arr.shape[0] != n_rows:
            raise ValueError(f"column {nm!r} has {arr.shape[0]} rows, expected {n_rows}")
    idx = np.arange(0, n_rows, max(1, int(decimate)))
    if idx[-1] != n_rows - 1:
        idx = np.append(idx, n_rows - 1)
    lines = [",".join(names)]
    for k in idx:
        lines.append(",".join(_fmt(arr[k]) for arr in arrays))
    return atomic_write_text(path, "\n".join(lines) + "\n")


def write_matrix_csv(path: str | Path, M: np.ndarray) -> Path:
    """Write a 2-D matrix as CSV with generic column headers."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    header = ",".join(f"c{j}" for j in range(M.shape[1]))
    lines = [header] + [",".join(_fmt(v) for v in row) for row in M]
    return atomic_write_text(path, "\n".join(lines) + "\n")


def read_csv_columns(path: str | Path) -> dict[str, np.ndarray]:
    """Read a CSV written by :func:`write_csv` back into named float columns."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return {name: data[:, j] for j, name in enumerate(header)}


def plot_combined(csv_path: str | Path, out_path: str | Path, theta: float | None = None) -> Path:
    """Render queue/rate/anomaly time series (with alarm shading) from a trace CSV."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "flowscope"
    cols = read_csv_columns(csv_path)
    t = cols["t"]
    n = sum(1 for name in cols if name.startswith("x") and not name.startswith("xhat"))

    fig, axes = plt.subplots(3, 1, figsize=(9, 9), sharex=True)
    ax = axes[0]
    ax.plot(t, cols["b"], label="queue b", lw=1.2)
    ax.plot(t, cols["bhat"], label="estimate", lw=1.0, ls="--")
    ax.set_ylabel("queue [pkt]")
    ax.legend(loc="upper right", fontsize=8)
    ax = axes[1]
    for i in range(1, n + 1):
        ax.plot(t, cols[f"x{i}"], lw=1.2, label=f"x{i}")
        ax.plot(t, cols[f"xhat{i}"], lw=1.0, ls="--", label=f"estimate {i}")
    ax.set_ylabel("rates [pkt/s]")
    ax.legend(loc="upper right", fontsize=8, ncol=2)
    ax = axes[2]
    ax.plot(t, cols["dhat"], lw=1.2, label="anomaly estimate")
    if "d" in cols:
        ax.plot(t, cols["d"], lw=1.0, ls=":", label="anomaly truth")
    if theta is not None:
        ax.axhline(theta, color="k", lw=0.8, ls="--", label="threshold")
    if "alarm" in cols:
        alarm = cols["alarm"] > 0.5
        edges = np.flatnonzero(np.diff(alarm.astype(int)))
        starts = list(edges[alarm[edges + 1]] + 1)
        stops = list(edges[~alarm[edges + 1]] + 1)
        if alarm[0]:
            starts.insert(0, 0)
        if alarm[-1]:
            stops.append(alarm.shape[0] - 1)
        for s, e in zip(starts, stops):
            ax.axvspan(t[s], t[e], color="tab:red", alpha=0.15, lw=0)
    ax.set_ylabel("rate [pkt/s]")
    ax.set_xlabel("time [s]")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=out_path.parent, prefix=f".{out_path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        fig.savefig(tmp, format="svg", metadata={"Date": None})
        os.replace(tmp, out_path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
    finally:
        plt.close(fig)
    return out_path
