"""Figure rendering for the CLI report paths.

Every helper takes already-computed results and writes one PNG next to the
delimited output; nothing here recomputes or displays interactively.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .harness import ExperimentRecord, PairRecord, SweepRecord

_RC = {
    "figure.figsize": (7.0, 4.5),
    "figure.dpi": 110,
    "savefig.dpi": 150,
    "axes.grid": True,
    "grid.alpha": 0.35,
    "lines.linewidth": 1.6,
    "font.size": 10,
}


def _axes(title: str, xlabel: str, ylabel: str):
    plt.rcParams.update(_RC)
    fig, ax = plt.subplots()
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    return fig, ax


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_slice_figure(path, s_nodes: np.ndarray,
                      slices: Mapping[str, np.ndarray], title: str) -> None:
    """Price slices V(S) for one or more labelled solutions."""
    fig, ax = _axes(title, "asset price S", "option value V")
    for label, values in slices.items():
        ax.plot(s_nodes, values, label=label)
    ax.legend()
    _save(fig, path)


def save_iterations_figure(path, iterations_per_level: Sequence[int], title: str) -> None:
    """Per-time-level iteration counts of a solve."""
    fig, ax = _axes(title, "time level", "iterations")
    levels = np.arange(1, len(iterations_per_level) + 1)
    ax.step(levels, iterations_per_level, where="mid")
    ax.set_ylim(bottom=0)
    _save(fig, path)


def save_sweep_figure(path, rows: Sequence[SweepRecord], title: str) -> None:
    """Newton-vs-asymptotic gap against the model parameter, one line per grid."""
    fig, ax = _axes(title, "model parameter", "relative sup-norm gap")
    by_grid: dict[tuple[int, int], list[SweepRecord]] = {}
    for row in rows:
        by_grid.setdefault((row.grid.m, row.grid.n), []).append(row)
    for (m, n), cells in sorted(by_grid.items()):
        cells = sorted(cells, key=lambda c: c.param)
        ax.plot([c.param for c in cells], [c.gap_linf for c in cells],
                marker="o", label=f"M=N={m}" if m == n else f"M={m}, N={n}")
    ax.set_yscale("log")
    ax.legend()
    _save(fig, path)


def save_pair_figure(path, rows: Sequence[PairRecord], title: str) -> None:
    """Difference between two solver variants against grid size, both norms."""
    fig, ax = _axes(title, "spatial points M", "relative difference")
    ms = [row.grid.m for row in rows]
    ax.plot(ms, [row.diff_linf for row in rows], marker="o", label="sup norm")
    ax.plot(ms, [row.diff_l2 for row in rows], marker="s", label="L2 norm")
    ax.set_yscale("log")
    ax.legend()
    _save(fig, path)


def save_eoc_figure(path, records: Sequence[ExperimentRecord], title: str) -> None:
    """Error against dS on log-log axes (slope = convergence order)."""
    fig, ax = _axes(title, "dS", "relative error")
    pts = [(r.grid.delta_s, r.err_linf, r.err_l2) for r in records
           if r.err_linf is not None and r.err_l2 is not None]
    if pts:
        ds, linf, l2 = zip(*pts)
        ax.plot(ds, linf, marker="o", label="sup norm")
        ax.plot(ds, l2, marker="s", label="L2 norm")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.legend()
    _save(fig, path)


def save_eotc_figure(path, records: Sequence[ExperimentRecord], title: str) -> None:
    """Wall time against dtau on log-log axes (slope = -EOTC)."""
    fig, ax = _axes(title, "dtau", "wall time [s]")
    pts = [(r.grid.delta_tau, r.wall_time) for r in records if r.wall_time is not None]
    if pts:
        dtau, wall = zip(*pts)
        ax.plot(dtau, wall, marker="o")
        ax.set_xscale("log")
        ax.set_yscale("log")
    _save(fig, path)


def save_calibration_figure(path, taus: Sequence[float], rhos: Sequence[float],
                            title: str) -> None:
    """Calibrated parameter per quote maturity."""
    fig, ax = _axes(title, "time to maturity tau", "calibrated rho")
    ax.plot(taus, rhos, marker="o", linestyle="--")
    _save(fig, path)
