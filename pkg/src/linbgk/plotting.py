"""PNG figures of run series and tables, written next to the CSV files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .series import NormSeries  # noqa: E402


def plot_series(series: NormSeries, path: Path, title: str) -> Path:
    """Norm trajectories (log scale) with their envelopes."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    t = series.times
    for k in sorted(series.norms):
        vals = series.norms[k]
        if np.any(vals > 0):
            ax.semilogy(t, np.where(vals > 0, vals, np.nan), label=f"order {k}")
    for name in sorted(series.envelopes):
        env = series.envelopes[name]
        if np.any(env > 0):
            ax.semilogy(t, np.where(env > 0, env, np.nan), "--", label=f"envelope {name}")
    for name in sorted(series.diagnostics):
        ax.semilogy(t, series.diagnostics[name], ":", label=name)
    ax.set_xlabel("t")
    ax.set_ylabel("weighted L2 norm")
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_table(header: list[str], rows: list[list], path: Path, title: str,
               logx: bool = True, logy: bool = True) -> Path:
    """First column against every other numeric column."""
    data = [[r[i] for r in rows] for i in range(len(header))]
    fig, ax = plt.subplots(figsize=(6, 4.2))
    x = np.asarray(data[0], dtype=float)
    for name, col in zip(header[1:], data[1:]):
        ax.plot(x, np.asarray(col, dtype=float), "o-", label=name)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(header[0])
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path
