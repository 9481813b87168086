"""Figures for benchmark results (written to files, never shown)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .bench import BENCHMARKS, BenchResult  # noqa: E402

_STYLE = {"lock": ("o", "-"), "map": ("s", "--"), "atomicint": ("^", ":")}


def plot_ratios(result: BenchResult, path: str | Path) -> Path:
    """State ratio and median time ratio against thread count, one line per benchmark."""
    path = Path(path)
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6), constrained_layout=True)
    panels = (("state_ratio", "state ratio (reference / abstracted)"),
              ("time_ratio", "time ratio (median of repeats)"))
    names = [n for n in BENCHMARKS if any(r.benchmark == n for r in result.rows)]
    for ax, (kind, label) in zip(axes, panels):
        for name in names:
            pts = sorted(result.ratios(name, kind).items())
            if not pts:
                continue
            marker, ls = _STYLE.get(name, ("o", "-"))
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker=marker, linestyle=ls, label=name)
        ax.set_yscale("log")
        ax.set_xlabel("threads")
        ax.set_ylabel(label)
        ax.axhline(1.0, color="0.6", linewidth=0.8)
        threads = sorted({r.threads for r in result.rows})
        if threads:
            ax.set_xticks(threads)
        ax.grid(True, which="both", alpha=0.3)
    axes[0].legend(frameon=False)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_states(result: BenchResult, path: str | Path) -> Path:
    """Unique states per benchmark and mode (log scale)."""
    path = Path(path)
    names = [n for n in BENCHMARKS if any(r.benchmark == n for r in result.rows)]
    fig, axes = plt.subplots(1, max(len(names), 1), figsize=(3.2 * max(len(names), 1), 3.4),
                             constrained_layout=True, squeeze=False)
    for ax, name in zip(axes[0], names):
        for mode, ls in (("abstracted", "-"), ("reference", "--")):
            pts = sorted((r.threads, r.states) for r in result.rows
                         if r.benchmark == name and r.mode == mode and r.completed)
            if pts:
                ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", linestyle=ls, label=mode)
        ax.set_title(name)
        ax.set_yscale("log")
        ax.set_xlabel("threads")
        ax.grid(True, which="both", alpha=0.3)
    axes[0][0].set_ylabel("unique states")
    axes[0][0].legend(frameon=False)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
