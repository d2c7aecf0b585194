"""Distribution-iterated solver for the limit equation.

Freeze the law flow, solve the resulting classical SDE for a cloud of
samples by Euler, take the empirical flow of that cloud as the next law,
and repeat.  One (init, bundle) pair drives every iteration, so the gap
between successive iterates is a pathwise quantity with no Monte Carlo
noise floor, and it upper-bounds the squared 2-Wasserstein gap via the
identity coupling.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .kernels import KernelPair
from .paths import GridError, InitialSample, TimeGrid, derive_seed, generate_bundle, sample_initial
from .simulator import BrownianBundle, Trajectory, euler_limit_particles

Array = np.ndarray

_LAW_INIT_TAG = 31
_LAW_BUNDLE_TAG = 32


class PicardNonConvergence(RuntimeError):
    def __init__(self, report: "PicardReport"):
        self.report = report
        terminal = f"{report.gap_history[-1]:.3e}" if report.gap_history else "unknown (no comparison yet)"
        super().__init__(
            f"no convergence after {report.iterations} iterations; "
            f"terminal gap {terminal} > tol {report.tol:.3e}"
        )


@dataclass(frozen=True)
class LawFlow:
    """A cloud of samples at every grid time: points has shape (n_steps + 1, M, d)."""

    grid: TimeGrid
    points: Array

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 3 or pts.shape[0] != self.grid.n_steps + 1:
            raise GridError(
                f"law points must have shape (n_steps + 1, M, d), got {pts.shape} "
                f"for {self.grid.n_steps} steps"
            )
        object.__setattr__(self, "points", pts)

    @property
    def n_samples(self) -> int:
        return self.points.shape[1]

    @property
    def dim(self) -> int:
        return self.points.shape[2]

    def points_at(self, k: int) -> Array:
        if not 0 <= k <= self.grid.n_steps:
            raise GridError(f"law flow has no index {k}")
        return self.points[k]

    def at_time(self, t: float) -> Array:
        """Exact grid-time lookup; off-grid times are an error, never interpolated."""
        return self.points[self.grid.index_of(t)]

    @classmethod
    def constant(cls, grid: TimeGrid, pts: Array) -> "LawFlow":
        """The flow frozen at one cloud for every time (the iteration seed)."""
        pts = np.asarray(pts, dtype=float)
        return cls(grid=grid, points=np.broadcast_to(pts, (grid.n_steps + 1, *pts.shape)))

    @classmethod
    def from_trajectory(cls, traj: Trajectory) -> "LawFlow":
        if traj.states is None:
            raise GridError("trajectory has no stored path")
        return cls(grid=traj.grid, points=traj.states)


def analytic_linear_flow(a: float, c: float, initial_mean, grid: TimeGrid, dim: int = 1) -> LawFlow:
    """Exact limit flow for the linear kernel, as point masses at the mean.

    The linear kernel's averaged coefficients depend on the law only
    through its mean m_t = m_0 * exp((a + c) t), so a single point at the
    exact mean represents the limit law without sampling error.
    """
    m0 = np.asarray(initial_mean, dtype=float)
    if m0.ndim == 0:
        m0 = np.full(dim, float(m0))
    means = m0[None, :] * np.exp((a + c) * grid.times)[:, None]
    return LawFlow(grid=grid, points=means[:, None, :])


@dataclass(frozen=True)
class PicardReport:
    """Gap history of the iteration; gap k is the pathwise sup-square
    distance between iterates k+1 and k."""

    iterations: int
    gap_history: tuple[float, ...]
    contraction_ratio: float | None
    converged: bool
    tol: float


def _pathwise_gap(new_points: Array, old_points: Array) -> float:
    """sup over grid times of the mean squared sample displacement."""
    d2 = np.sum((new_points - old_points) ** 2, axis=2).mean(axis=1)
    return float(d2.max())


def _contraction_ratio(gaps: tuple[float, ...]) -> float | None:
    positive = [g for g in gaps if g > 0]
    if len(positive) < 2:
        return None
    logs = np.log(positive)
    return float(math.exp(np.diff(logs).mean()))


def picard_step(
    kernel: KernelPair,
    law_prev: LawFlow,
    init: InitialSample,
    bundle: BrownianBundle,
    grid: TimeGrid,
    *,
    threads: int = 1,
) -> LawFlow:
    """One iteration: Euler under the frozen law, then read off the new flow."""
    if law_prev.grid.n_steps != grid.n_steps or law_prev.grid.horizon != grid.horizon:
        raise GridError("previous law flow lives on a different grid")
    traj = euler_limit_particles(
        kernel, init, bundle, grid, law_prev, store_path=True, threads=threads
    )
    return LawFlow.from_trajectory(traj)


def picard_solve(
    kernel: KernelPair,
    initial_law: str,
    initial_params,
    grid: TimeGrid,
    *,
    m_law: int = 4000,
    tol: float = 1e-6,
    max_iter: int = 30,
    seed: int = 0,
    threads: int = 1,
) -> tuple[LawFlow, PicardReport]:
    """Iterate until the pathwise gap certifies sup-Wasserstein convergence.

    The stopping statistic sup_t mean_m |X_t^(k+1),m - X_t^(k),m|^2 bounds
    sup_t W_2(mu_t^(k+1), mu_t^(k))^2 from above (identity coupling), so
    meeting ``tol`` certifies the W_2 gap as well.
    """
    if tol <= 0:
        raise GridError("tol must be positive")
    if max_iter < 1:
        raise GridError("max_iter must be >= 1")
    init = sample_initial(derive_seed(seed, _LAW_INIT_TAG), initial_law, initial_params, m_law, kernel.dim)
    bundle = generate_bundle(derive_seed(seed, _LAW_BUNDLE_TAG), m_law, kernel.dim, grid)

    flow = LawFlow.constant(grid, init.points)
    prev_points: Array | None = None
    gaps: list[float] = []
    for k in range(1, max_iter + 1):
        flow = picard_step(kernel, flow, init, bundle, grid, threads=threads)
        if prev_points is not None:
            gaps.append(_pathwise_gap(flow.points, prev_points))
            if gaps[-1] <= tol:
                report = PicardReport(
                    iterations=k,
                    gap_history=tuple(gaps),
                    contraction_ratio=_contraction_ratio(tuple(gaps)),
                    converged=True,
                    tol=tol,
                )
                return flow, report
        prev_points = flow.points

    report = PicardReport(
        iterations=max_iter,
        gap_history=tuple(gaps),
        contraction_ratio=_contraction_ratio(tuple(gaps)),
        converged=False,
        tol=tol,
    )
    raise PicardNonConvergence(report)


# ---------------------------------------------------------------------------
# Serialization and caching
# ---------------------------------------------------------------------------
#
# A law flow is stored as a pair of files sharing one stem:
#   <stem>.npy  binary point array, shape (n_steps + 1, M, d)
#   <stem>.csv  one row per grid time: "index,time" (17 significant digits)
# The grid is reconstructed from the csv (horizon = last time).


def save_law_flow(flow: LawFlow, stem: str | Path) -> tuple[Path, Path]:
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    npy = stem.with_suffix(".npy")
    csv = stem.with_suffix(".csv")
    np.save(npy, np.ascontiguousarray(flow.points))
    times = flow.grid.times
    with open(csv, "w") as fh:
        fh.write("index,time\n")
        for k in range(flow.grid.n_steps + 1):
            fh.write(f"{k},{times[k]:.17g}\n")
    return npy, csv


def load_law_flow(stem: str | Path) -> LawFlow:
    stem = Path(stem)
    points = np.load(stem.with_suffix(".npy"))
    with open(stem.with_suffix(".csv")) as fh:
        rows = fh.read().strip().splitlines()[1:]
    horizon = float(rows[-1].split(",")[1])
    grid = TimeGrid(horizon=horizon, n_steps=len(rows) - 1)
    return LawFlow(grid=grid, points=points)


def law_cache_key(
    kernel: KernelPair,
    initial_law: str,
    initial_params,
    grid: TimeGrid,
    m_law: int,
    seed: int,
    tol: float,
) -> str:
    payload = json.dumps(
        {
            "kernel": kernel.name,
            "kernel_params": {k: float(v) for k, v in sorted(kernel.params.items())},
            "initial_law": initial_law,
            "initial_params": {k: v for k, v in sorted(dict(initial_params).items())},
            "horizon": grid.horizon,
            "n_steps": grid.n_steps,
            "m_law": m_law,
            "seed": seed,
            "tol": tol,
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:24]


def cached_picard_solve(
    kernel: KernelPair,
    initial_law: str,
    initial_params,
    grid: TimeGrid,
    *,
    m_law: int = 4000,
    tol: float = 1e-6,
    max_iter: int = 30,
    seed: int = 0,
    threads: int = 1,
    cache_dir: str | Path | None = None,
) -> tuple[LawFlow, PicardReport | None]:
    """picard_solve with a file cache keyed by everything that matters.

    A cache hit returns (flow, None): the stored flow was produced by a
    converged solve, but its iteration report is not persisted.
    """
    if cache_dir is None:
        return picard_solve(
            kernel, initial_law, initial_params, grid,
            m_law=m_law, tol=tol, max_iter=max_iter, seed=seed, threads=threads,
        )
    key = law_cache_key(kernel, initial_law, initial_params, grid, m_law, seed, tol)
    stem = Path(cache_dir) / key
    if stem.with_suffix(".npy").exists() and stem.with_suffix(".csv").exists():
        return load_law_flow(stem), None
    flow, report = picard_solve(
        kernel, initial_law, initial_params, grid,
        m_law=m_law, tol=tol, max_iter=max_iter, seed=seed, threads=threads,
    )
    save_law_flow(flow, stem)
    return flow, report
