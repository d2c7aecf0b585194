"""Euler time-stepping for the interacting particle system and for the
non-interacting limit particles driven by an external law flow.

Both simulators share the update
    X_{k+1} = X_k + drift_bar(X_k, mu_k) * h + sigma_bar(X_k, mu_k) * dW_k,
where the coefficient averages are taken over the step-k particle cloud
(interacting) or over the supplied law flow at t_k (limit particles).  All
coefficients for a step are computed from the step-k state before any
particle moves, so the update order within a step is immaterial.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import KernelPair, mean_field_diffusion, mean_field_drift
from .paths import BrownianBundle, InitialSample, TimeGrid, restrict

Array = np.ndarray


class BlowUpError(RuntimeError):
    """Non-finite state encountered; carries the step and particle indices."""

    def __init__(self, step: int, particles: list[int]):
        self.step = step
        self.particles = particles
        super().__init__(f"non-finite state at step {step} for particles {particles[:8]}")


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class ParticleCloud:
    """Particle states at one time; doubles as an empirical measure."""

    time: float
    states: Array

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def points(self) -> Array:
        # EmpiricalMeasure protocol: same array, no copy.
        return self.states


@dataclass(frozen=True)
class Trajectory:
    """Result of one Euler run.

    ``states`` holds the full path (n_steps + 1, N, d) when the run stored
    it; ``sup_sq`` is the per-particle running maximum of |X_t|^2 over grid
    times, which is monotone by construction.
    """

    grid: TimeGrid
    states: Array | None
    sup_sq: Array
    final_states: Array
    law: "object | None" = None

    @property
    def n_particles(self) -> int:
        return self.final_states.shape[0]

    def cloud_at(self, k: int) -> ParticleCloud:
        if self.states is None:
            raise SimulationError("trajectory was run without path storage")
        return ParticleCloud(time=k * self.grid.step, states=self.states[k])


def _check_inputs(kernel: KernelPair, init: InitialSample, bundle: BrownianBundle, grid: TimeGrid) -> BrownianBundle:
    if init.dim != kernel.dim:
        raise SimulationError(f"initial sample dimension {init.dim} != kernel dimension {kernel.dim}")
    if bundle.dim != kernel.dim:
        raise SimulationError("bundle dimension mismatch")
    if init.n != bundle.n_particles:
        raise SimulationError(
            f"initial sample has {init.n} particles but bundle carries {bundle.n_particles}"
        )
    if bundle.grid != grid:
        bundle = restrict(bundle, grid)
    return bundle


def _apply_diffusion(sigma: Array, dw: Array) -> Array:
    """sigma_bar applied to the particle's own increment, row by row."""
    if sigma.ndim == 2:  # one constant matrix for everybody
        return dw @ sigma.T
    return np.einsum("nij,nj->ni", sigma, dw)


def _assert_finite(x: Array, step: int) -> None:
    if not np.all(np.isfinite(x)):
        bad = np.where(~np.isfinite(x).all(axis=1))[0]
        raise BlowUpError(step, bad.tolist())


def _euler_loop(
    kernel: KernelPair,
    init: InitialSample,
    bundle: BrownianBundle,
    grid: TimeGrid,
    *,
    law=None,
    store_path: bool,
    threads: int,
    exact: bool,
) -> Trajectory:
    bundle = _check_inputs(kernel, init, bundle, grid)
    if law is not None and (law.grid.n_steps != grid.n_steps or law.grid.horizon != grid.horizon):
        raise SimulationError("law flow is not defined on the simulation grid")

    h = grid.step
    x = init.points.copy()
    const_sigma = kernel.constant_diffusion
    sup_sq = np.sum(x * x, axis=1)
    states = None
    if store_path:
        states = np.empty((grid.n_steps + 1, init.n, kernel.dim))
        states[0] = x

    for k in range(grid.n_steps):
        source = x if law is None else law.points_at(k)
        drift = mean_field_drift(kernel, x, source, threads=threads, exact=exact)
        if const_sigma is not None and not exact:
            move = drift * h + bundle.increments_at(k) @ const_sigma.T
        else:
            sigma = mean_field_diffusion(kernel, x, source, threads=threads, exact=exact)
            move = drift * h + _apply_diffusion(sigma, bundle.increments_at(k))
        x = x + move
        _assert_finite(x, k + 1)
        np.maximum(sup_sq, np.sum(x * x, axis=1), out=sup_sq)
        if store_path:
            states[k + 1] = x

    return Trajectory(grid=grid, states=states, sup_sq=sup_sq, final_states=x, law=law)


def euler_interacting(
    kernel: KernelPair,
    init: InitialSample,
    bundle: BrownianBundle,
    grid: TimeGrid,
    *,
    store_path: bool = True,
    threads: int = 1,
    exact: bool = False,
) -> Trajectory:
    """Euler scheme for the N-interacting system.

    Coefficients are empirical averages over the step-k cloud itself, with
    drift and diffusion frozen at the left grid endpoint.  Deterministic
    given (kernel, init, bundle, grid).
    """
    return _euler_loop(
        kernel, init, bundle, grid, law=None, store_path=store_path, threads=threads, exact=exact
    )


def reference_interacting(
    kernel: KernelPair,
    init: InitialSample,
    bundle: BrownianBundle,
    fine_grid: TimeGrid,
    *,
    store_path: bool = True,
    threads: int = 1,
) -> Trajectory:
    """Numerical surrogate for the continuous-time interacting system.

    Alias of euler_interacting on the finest grid; the time-discretization
    error it carries vanishes at a known rate as the fine step shrinks.
    """
    return euler_interacting(
        kernel, init, bundle, fine_grid, store_path=store_path, threads=threads
    )


def euler_limit_particles(
    kernel: KernelPair,
    init: InitialSample,
    bundle: BrownianBundle,
    grid: TimeGrid,
    law,
    *,
    store_path: bool = True,
    threads: int = 1,
    exact: bool = False,
) -> Trajectory:
    """Euler scheme for non-interacting particles driven by a law flow.

    Each particle evolves independently with coefficients averaged over
    law(t_k); the only coupling to an interacting run is a shared
    (init, bundle).
    """
    if law is None:
        raise SimulationError("limit particles need a law flow")
    return _euler_loop(
        kernel, init, bundle, grid, law=law, store_path=store_path, threads=threads, exact=exact
    )


@dataclass(frozen=True)
class ChaosErrorReport:
    """Per-particle sup-square coupling errors and their exchangeable mean."""

    sup_sq_errors: Array
    mean_sup_sq: float
    n_particles: int


def coupled_chaos_error(
    kernel: KernelPair,
    init: InitialSample,
    bundle: BrownianBundle,
    grid: TimeGrid,
    law,
    *,
    threads: int = 1,
) -> ChaosErrorReport:
    """Run the interacting and the limit systems on the same (init, bundle)
    and return max_t |X_t^{N,i} - X_t^i|^2 for each particle.

    The two states advance in lockstep so no full path is stored.
    """
    bundle = _check_inputs(kernel, init, bundle, grid)
    if law is None:
        raise SimulationError("coupled run needs a law flow")
    if law.grid.n_steps != grid.n_steps or law.grid.horizon != grid.horizon:
        raise SimulationError("law flow is not defined on the simulation grid")

    h = grid.step
    x_int = init.points.copy()
    x_lim = init.points.copy()
    const_sigma = kernel.constant_diffusion
    dsup = np.sum((x_int - x_lim) ** 2, axis=1)

    for k in range(grid.n_steps):
        dw = bundle.increments_at(k)
        law_pts = law.points_at(k)
        drift_int = mean_field_drift(kernel, x_int, x_int, threads=threads)
        drift_lim = mean_field_drift(kernel, x_lim, law_pts, threads=threads)
        if const_sigma is not None:
            noise = dw @ const_sigma.T
            x_int = x_int + drift_int * h + noise
            x_lim = x_lim + drift_lim * h + noise
        else:
            sig_int = mean_field_diffusion(kernel, x_int, x_int, threads=threads)
            sig_lim = mean_field_diffusion(kernel, x_lim, law_pts, threads=threads)
            x_int = x_int + drift_int * h + _apply_diffusion(sig_int, dw)
            x_lim = x_lim + drift_lim * h + _apply_diffusion(sig_lim, dw)
        _assert_finite(x_int, k + 1)
        _assert_finite(x_lim, k + 1)
        np.maximum(dsup, np.sum((x_int - x_lim) ** 2, axis=1), out=dsup)

    return ChaosErrorReport(sup_sq_errors=dsup, mean_sup_sq=float(dsup.mean()), n_particles=init.n)


@dataclass(frozen=True)
class CenteredKernelStats:
    """Statistics of the centered kernels at one time slice.

    ``avg_sq_*`` estimates E|(1/N) sum_j k_tilde(X^i, X^j)|^2, the quantity
    whose 1/N decay drives the chaos rate; ``cross_corr_*`` estimates the
    correlation of k_tilde(X^i, X^j) and k_tilde(X^i, X^k) for distinct
    j, k, which the centering makes vanish.
    """

    avg_sq_drift: float
    avg_sq_diffusion: float
    cross_corr_drift: float
    cross_corr_diffusion: float
    var_drift: float
    var_diffusion: float
    n_particles: int


def _centered_cross_stats(tilde: Array) -> tuple[float, float, float]:
    """(mean |row mean|^2, cross correlation, variance) for (N, N, c) values."""
    n = tilde.shape[0]
    row_mean = tilde.mean(axis=1)
    avg_sq = float(np.mean(np.sum(row_mean**2, axis=-1)))
    idx = np.arange(n)
    j = (idx + 1) % n
    k = (idx + 2) % n
    prods = np.sum(tilde[idx, j] * tilde[idx, k], axis=-1)
    off_diag = ~np.eye(n, dtype=bool)
    var = float(np.mean(np.sum(tilde**2, axis=-1)[off_diag]))
    corr = float(prods.mean() / var) if var > 0 else 0.0
    return avg_sq, corr, var


def centered_kernel_stats(
    kernel: KernelPair,
    limit_traj: Trajectory,
    law=None,
    *,
    time_index: int = -1,
) -> CenteredKernelStats:
    """Estimate the centered kernels on an i.i.d. limit-particle cloud.

    k_tilde(x, x') = k(x, x') - (average of k(x, .) over the law flow), for
    both the drift and the diffusion kernel, evaluated at one grid time of
    a limit-particle trajectory.
    """
    law = law if law is not None else limit_traj.law
    if law is None:
        raise SimulationError("centered statistics need the trajectory's law flow")
    if limit_traj.states is None:
        raise SimulationError("limit trajectory must be run with store_path=True")
    if limit_traj.n_particles < 3:
        raise SimulationError("need at least 3 particles for cross statistics")

    n_times = limit_traj.states.shape[0]
    t_idx = time_index % n_times
    x = limit_traj.states[t_idx]
    law_pts = law.points_at(min(t_idx, law.grid.n_steps))

    b_pair = kernel.drift(x[:, None, :], x[None, :, :])
    b_center = mean_field_drift(kernel, x, law_pts)
    b_tilde = b_pair - b_center[:, None, :]
    avg_b, corr_b, var_b = _centered_cross_stats(b_tilde)

    n, d = x.shape
    s_pair = kernel.diffusion(x[:, None, :], x[None, :, :]).reshape(n, n, d * d)
    s_center = mean_field_diffusion(kernel, x, law_pts).reshape(n, d * d)
    s_tilde = s_pair - s_center[:, None, :]
    avg_s, corr_s, var_s = _centered_cross_stats(s_tilde)

    return CenteredKernelStats(
        avg_sq_drift=avg_b,
        avg_sq_diffusion=avg_s,
        cross_corr_drift=corr_b,
        cross_corr_diffusion=corr_s,
        var_drift=var_b,
        var_diffusion=var_s,
        n_particles=n,
    )
