"""Figure rendering for experiment reports.

Every runner drops a PNG next to its CSV tables; rendering is headless
(Agg) and file-only.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .analysis import RateFit


def _finish(fig, ax, path: Path, title: str, xlabel: str, ylabel: str) -> Path:
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_rate_plot(
    path: str | Path,
    xs,
    ys,
    yerr,
    *,
    fit: RateFit | None = None,
    ref_slope: float | None = None,
    title: str,
    xlabel: str,
    ylabel: str,
) -> Path:
    """Log-log error plot with the fitted power law and an optional reference slope."""
    path = Path(path)
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    ax.errorbar(xs, ys, yerr=yerr, fmt="o", capsize=3, label="estimate")
    if fit is not None:
        ax.plot(xs, np.exp(fit.intercept) * xs**fit.slope, "--", label=f"fit: slope {fit.slope:+.3f}")
    if ref_slope is not None and np.all(ys > 0):
        anchor = ys[0] / xs[0] ** ref_slope
        ax.plot(xs, anchor * xs**ref_slope, ":", color="gray", label=f"reference slope {ref_slope:+g}")
    ax.set_xscale("log")
    if np.all(ys > 0):
        ax.set_yscale("log")
    return _finish(fig, ax, path, title, xlabel, ylabel)


def save_series_plot(
    path: str | Path,
    series: list[tuple[np.ndarray, np.ndarray, np.ndarray, str]],
    *,
    title: str,
    xlabel: str,
    ylabel: str,
    logx: bool = True,
    logy: bool = True,
) -> Path:
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    for xs, ys, yerr, label in series:
        ax.errorbar(xs, ys, yerr=yerr, fmt="o-", capsize=3, label=label)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    return _finish(fig, ax, path, title, xlabel, ylabel)


def save_gap_plot(path: str | Path, gaps, tol: float, *, title: str) -> Path:
    path = Path(path)
    gaps = np.asarray(gaps, dtype=float)
    iters = np.arange(2, gaps.size + 2)  # gap k compares iterates k and k-1
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    positive = gaps > 0
    ax.semilogy(iters[positive], gaps[positive], "o-", label="pathwise gap")
    if np.any(~positive):
        ax.plot(iters[~positive], np.full((~positive).sum(), tol * 1e-3), "v", label="gap = 0")
    ax.axhline(tol, color="red", linestyle="--", label=f"tol = {tol:g}")
    return _finish(fig, ax, path, title, "iterate", "sup-square gap")


def save_bar_plot(path: str | Path, labels, values, *, title: str, cap: float | None = 1.0) -> Path:
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    ax.bar(labels, values, color="steelblue", label="max observed ratio")
    if cap is not None:
        ax.axhline(cap, color="red", linestyle="--", label="declared bound")
    return _finish(fig, ax, path, title, "condition", "ratio")
