"""Time grids, seeded Brownian increment bundles, and initial samples.

All randomness in the package flows through here.  Increments are produced
by a counter-based generator keyed per (seed, step), with each particle
occupying a fixed offset inside the step block.  Consequences:

* regeneration is bit-exact for a fixed seed,
* a particle's increments do not depend on how many other particles exist
  (a bundle for N particles is a prefix of the bundle for N' > N),
* coarser time grids see sums of fine increments computed directly from
  the finest stored grid, so nested restrictions agree bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

Array = np.ndarray

_BUNDLE_DOMAIN = 0xB0
_INIT_DOMAIN = 0x1D
_DERIVE_DOMAIN = 0xDE

DEFAULT_MEMORY_BUDGET = 2**31  # bytes of increments a bundle may materialize

INITIAL_LAWS = ("point_mass", "gaussian", "uniform_box")


class GridError(ValueError):
    pass


class MemoryBudgetError(RuntimeError):
    pass


def derive_seed(master: int, *tags: int) -> int:
    """Deterministic 64-bit child seed for an independent substream."""
    ss = np.random.SeedSequence(entropy=[_DERIVE_DOMAIN, int(master), *map(int, tags)])
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_k = k * (horizon / n_steps), k = 0..n_steps.

    Parametrized by the step count so the horizon is hit exactly; the step
    is derived, never the other way around.
    """

    horizon: float
    n_steps: int

    def __post_init__(self):
        if self.horizon <= 0:
            raise GridError("horizon must be positive")
        if self.n_steps < 1:
            raise GridError("n_steps must be >= 1")

    @property
    def step(self) -> float:
        return self.horizon / self.n_steps

    @property
    def times(self) -> Array:
        return np.arange(self.n_steps + 1) * self.step

    @classmethod
    def from_step(cls, horizon: float, step: float) -> "TimeGrid":
        if step <= 0:
            raise GridError("step must be positive")
        n = round(horizon / step)
        if n < 1 or not math.isclose(n * step, horizon, rel_tol=1e-9, abs_tol=0.0):
            raise GridError(f"step {step} does not divide horizon {horizon}")
        return cls(horizon=horizon, n_steps=n)

    def floor_time(self, t: float) -> float:
        """Left grid endpoint for t: step * floor(t / step)."""
        if not 0.0 <= t <= self.horizon * (1 + 1e-12):
            raise GridError(f"time {t} outside [0, {self.horizon}]")
        return self.step * math.floor(min(t, self.horizon) / self.step)

    def index_of(self, t: float) -> int:
        """Index k with t_k == t; rejects off-grid times (no interpolation)."""
        k = round(t / self.step)
        if not 0 <= k <= self.n_steps or not math.isclose(k * self.step, t, rel_tol=1e-9, abs_tol=1e-12):
            raise GridError(f"time {t} is not a grid point")
        return k

    def refines(self, coarse: "TimeGrid") -> bool:
        return (
            math.isclose(self.horizon, coarse.horizon, rel_tol=1e-12)
            and self.n_steps % coarse.n_steps == 0
        )


def _step_normals(seed: int, step_index: int, n_particles: int, dim: int, step: float) -> Array:
    """Increments for one fine step: (N, d) normals with variance = step.

    The generator key depends only on (seed, step_index); particle i reads
    a fixed offset of the stream, independent of the total particle count.
    """
    ss = np.random.SeedSequence(entropy=[_BUNDLE_DOMAIN, int(seed), int(step_index)])
    gen = np.random.Generator(np.random.Philox(seed=ss))
    return gen.standard_normal((n_particles, dim)) * math.sqrt(step)


@dataclass(frozen=True)
class BrownianBundle:
    """Per-particle Brownian increments, stored (or streamed) on the finest grid.

    ``grid`` is the current view; ``base_grid`` always holds the finest
    resolution.  ``increments_at(k)`` returns the (N, d) increment over the
    view's k-th interval, summing fine increments when the view is coarse.
    A streaming bundle (``base is None``) regenerates fine steps on demand
    and holds no increment state; callers index it freely from any thread.
    """

    seed: int
    n_particles: int
    dim: int
    base_grid: TimeGrid
    grid: TimeGrid
    base: Array | None

    @property
    def ratio(self) -> int:
        return self.base_grid.n_steps // self.grid.n_steps

    def _fine_step(self, j: int) -> Array:
        if self.base is not None:
            return self.base[j]
        return _step_normals(self.seed, j, self.n_particles, self.dim, self.base_grid.step)

    def increments_at(self, k: int) -> Array:
        if not 0 <= k < self.grid.n_steps:
            raise GridError(f"step index {k} out of range")
        r = self.ratio
        if r == 1:
            return self._fine_step(k)
        block = np.stack([self._fine_step(j) for j in range(k * r, (k + 1) * r)])
        return block.sum(axis=0)

    @property
    def increments(self) -> Array:
        """All increments on the view grid, shape (n_steps, N, d)."""
        return np.stack([self.increments_at(k) for k in range(self.grid.n_steps)])


def generate_bundle(
    seed: int,
    n_particles: int,
    dim: int,
    grid: TimeGrid,
    *,
    stream: bool = False,
    memory_budget: int = DEFAULT_MEMORY_BUDGET,
) -> BrownianBundle:
    """Generate (or set up streaming for) increments on the finest grid."""
    if n_particles < 1 or dim < 1:
        raise GridError("n_particles and dim must be >= 1")
    nbytes = grid.n_steps * n_particles * dim * 8
    if not stream and nbytes > memory_budget:
        raise MemoryBudgetError(
            f"bundle needs {nbytes} bytes > budget {memory_budget}; "
            "pass stream=True to generate increments per step instead"
        )
    base = None
    if not stream:
        base = np.empty((grid.n_steps, n_particles, dim))
        for k in range(grid.n_steps):
            base[k] = _step_normals(seed, k, n_particles, dim, grid.step)
    return BrownianBundle(
        seed=int(seed), n_particles=n_particles, dim=dim, base_grid=grid, grid=grid, base=base
    )


def restrict(bundle: BrownianBundle, coarse: TimeGrid) -> BrownianBundle:
    """View the bundle on a coarser nested grid.

    Coarse increments are always derived from the finest stored grid, so
    restrict(restrict(b, mid), coarse) and restrict(b, coarse) are the same
    object modulo the intermediate grid, bit for bit.
    """
    if not bundle.grid.refines(coarse):
        raise GridError(
            f"grid with {coarse.n_steps} steps does not nest in the bundle view "
            f"({bundle.grid.n_steps} steps)"
        )
    return BrownianBundle(
        seed=bundle.seed,
        n_particles=bundle.n_particles,
        dim=bundle.dim,
        base_grid=bundle.base_grid,
        grid=coarse,
        base=bundle.base,
    )


@dataclass(frozen=True)
class InitialSample:
    """N i.i.d. draws from a named initial law, seed-deterministic."""

    seed: int
    law: str
    params: Mapping[str, object]
    points: Array

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def _vector_param(value, dim: int, name: str) -> Array:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(dim, float(arr))
    if arr.shape != (dim,):
        raise GridError(f"initial-law parameter {name!r} must be scalar or length {dim}")
    return arr


def sample_initial(seed: int, law: str, params: Mapping[str, object], n: int, dim: int) -> InitialSample:
    """Draw N i.i.d. points from the catalog law.

    Catalog: point_mass(x0), gaussian(mean, cov) with diagonal covariance,
    uniform_box(lo, hi).  All have finite second moments.  For a fixed seed
    the first N draws do not depend on N.
    """
    if n < 1 or dim < 1:
        raise GridError("n and dim must be >= 1")
    ss = np.random.SeedSequence(entropy=[_INIT_DOMAIN, int(seed)])
    gen = np.random.Generator(np.random.Philox(seed=ss))
    if law == "point_mass":
        x0 = _vector_param(params.get("x0", 0.0), dim, "x0")
        pts = np.tile(x0, (n, 1))
    elif law == "gaussian":
        mean = _vector_param(params.get("mean", 0.0), dim, "mean")
        cov = _vector_param(params.get("cov", 1.0), dim, "cov")
        if np.any(cov < 0):
            raise GridError("gaussian cov entries must be >= 0")
        pts = mean + gen.standard_normal((n, dim)) * np.sqrt(cov)
    elif law == "uniform_box":
        lo = _vector_param(params.get("lo", 0.0), dim, "lo")
        hi = _vector_param(params.get("hi", 1.0), dim, "hi")
        if np.any(hi < lo):
            raise GridError("uniform_box needs hi >= lo")
        pts = lo + gen.random((n, dim)) * (hi - lo)
    else:
        raise GridError(f"unknown initial law {law!r}; catalog: {', '.join(INITIAL_LAWS)}")
    return InitialSample(seed=int(seed), law=law, params=dict(params), points=pts)
