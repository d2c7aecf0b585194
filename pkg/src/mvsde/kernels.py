"""Coefficient kernels b(x, y) and sigma(x, y) with growth/modulus metadata.

A kernel pair defines the pointwise coefficients of a mean-field equation
whose drift and diffusion at state x are empirical averages of b(x, .) and
sigma(x, .) over a particle cloud.  Each catalog kernel declares the
constants of its linear-growth bound and of its (possibly log-Lipschitz)
continuity modulus, and those declarations can be checked by sampling.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

Array = np.ndarray

# Clamp argument of log so that u * log(u) evaluates to 0 at u = 0, not NaN.
_TINY = 1e-300

# Rows per chunk in pairwise averages; fixed so results do not depend on
# thread count (each output row is reduced over the full cloud regardless
# of how rows are grouped).
_CHUNK_ROWS = 256


class KernelError(ValueError):
    """Bad kernel arguments (dimension mismatch, empty measure, ...)."""


@dataclass(frozen=True)
class ModulusFn:
    """Continuity modulus gamma: positive and continuous on (0, inf).

    ``log_ratio_limit`` is the limit of gamma(x)/log(1/x) as x -> 0 and
    ``bound_on_tail`` is an upper bound for gamma on [1, inf).
    ``limit_tolerance`` is the slack allowed when the declared limit is
    checked numerically at small arguments.
    """

    evaluate: Callable[[Array], Array]
    log_ratio_limit: float
    bound_on_tail: float
    limit_tolerance: float = 0.16

    def __call__(self, x) -> Array:
        return self.evaluate(np.asarray(x, dtype=float))


def constant_modulus(value: float = 1.0) -> ModulusFn:
    """Constant modulus: r * gamma(r) is plain Lipschitz continuity."""
    if value <= 0:
        raise KernelError("modulus must be positive")

    def evaluate(x: Array) -> Array:
        return np.full_like(x, value, dtype=float)

    return ModulusFn(evaluate, log_ratio_limit=0.0, bound_on_tail=value)


def log_modulus(knot: float) -> ModulusFn:
    """log(1/r) for r <= knot, glued to the constant log(1/knot) beyond.

    The glued tail makes the modulus bounded on [1, inf) while keeping the
    genuinely non-Lipschitz log blow-up near 0.
    """
    if not 0.0 < knot < 1.0 / math.e:
        raise KernelError("glue knot must lie in (0, 1/e)")

    def evaluate(x: Array) -> Array:
        return -np.log(np.minimum(np.maximum(x, _TINY), knot))

    return ModulusFn(
        evaluate,
        log_ratio_limit=1.0,
        bound_on_tail=-math.log(knot),
        limit_tolerance=1e-6,
    )


@dataclass(frozen=True)
class KernelPair:
    """Drift/diffusion kernel pair plus declared growth and modulus data.

    ``drift(x, y)`` maps broadcastable arrays of shape (..., d) to (..., d);
    ``diffusion(x, y)`` maps them to (..., d, d).  ``growth_bound`` is the
    constant of the linear growth estimate
    |b| + ||sigma|| <= growth_bound * (1 + |x| + |y|), and
    ``drift_scale`` / ``diffusion_scale`` are the prefactors of the modulus
    inequalities for b and sigma.

    ``mean_drift``, when present, is a closed-form shortcut for the
    empirical average (1/N) sum_j b(x, y_j); it must agree with the generic
    average up to rounding.  ``constant_diffusion`` marks kernels whose
    sigma does not depend on (x, y).
    """

    name: str
    dim: int
    drift: Callable[[Array, Array], Array]
    diffusion: Callable[[Array, Array], Array]
    growth_bound: float
    drift_scale: float
    diffusion_scale: float
    drift_modulus: ModulusFn
    diffusion_modulus: ModulusFn
    params: Mapping[str, float] = field(default_factory=dict)
    mean_drift: Callable[[Array, Array], Array] | None = None
    constant_diffusion: Array | None = None


def _as_points(measure) -> Array:
    """Accept an EmpiricalMeasure, a ParticleCloud, or a raw (N, d) array."""
    pts = getattr(measure, "points", None)
    if pts is None:
        pts = getattr(measure, "states", None)
    if pts is None:
        pts = measure
    arr = np.asarray(pts, dtype=float)
    if arr.ndim != 2:
        raise KernelError(f"measure points must be a (N, d) array, got shape {arr.shape}")
    return arr


def _check_point(kernel: KernelPair, v, name: str) -> Array:
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1 or arr.shape[0] != kernel.dim:
        raise KernelError(f"{name} must be a vector of dimension {kernel.dim}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise KernelError(f"{name} must be finite")
    return arr


def eval_drift(kernel: KernelPair, x, y) -> Array:
    """Pointwise drift b(x, y) for single points x, y."""
    x = _check_point(kernel, x, "x")
    y = _check_point(kernel, y, "y")
    return np.asarray(kernel.drift(x, y), dtype=float)


def eval_diffusion(kernel: KernelPair, x, y) -> Array:
    """Pointwise diffusion matrix sigma(x, y) for single points x, y."""
    x = _check_point(kernel, x, "x")
    y = _check_point(kernel, y, "y")
    return np.asarray(kernel.diffusion(x, y), dtype=float)


def _chunked_rows(n: int) -> list[tuple[int, int]]:
    return [(lo, min(lo + _CHUNK_ROWS, n)) for lo in range(0, n, _CHUNK_ROWS)]


def _pair_average(fn, xb: Array, pts: Array, trailing: tuple[int, ...], threads: int) -> Array:
    """mean over j of fn(x_i, y_j), chunked over i.

    Chunk boundaries are fixed by _CHUNK_ROWS, so the reduction tree per
    output row is independent of the thread count and results are
    bit-reproducible.
    """
    m = xb.shape[0]
    out = np.empty((m, *trailing), dtype=float)
    ranges = _chunked_rows(m)

    def work(bounds: tuple[int, int]) -> None:
        lo, hi = bounds
        vals = fn(xb[lo:hi, None, :], pts[None, :, :])
        out[lo:hi] = vals.mean(axis=1)

    if threads > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, ranges))
    else:
        for bounds in ranges:
            work(bounds)
    return out


def _exact_pair_average(fn, xb: Array, pts: Array) -> Array:
    """Order-insensitive exact average, one fsum per output component.

    Slow; intended for small clouds where bit-level permutation invariance
    matters more than speed.
    """
    vals = np.asarray(fn(xb[:, None, :], pts[None, :, :]), dtype=float)
    n = pts.shape[0]
    flat = vals.reshape(xb.shape[0], n, -1)
    out = np.empty((xb.shape[0], flat.shape[2]), dtype=float)
    for i in range(out.shape[0]):
        for c in range(out.shape[1]):
            out[i, c] = math.fsum(flat[i, :, c]) / n
    return out.reshape((xb.shape[0], *vals.shape[2:]))


def mean_field_drift(kernel: KernelPair, x, measure, *, threads: int = 1, exact: bool = False) -> Array:
    """Empirical-measure drift (1/N) sum_j b(x, y_j).

    ``x`` may be one point (d,) or a batch (m, d); the result matches.
    """
    pts = _as_points(measure)
    if pts.shape[0] == 0:
        raise KernelError("empty measure")
    if pts.shape[1] != kernel.dim:
        raise KernelError(f"measure dimension {pts.shape[1]} != kernel dimension {kernel.dim}")
    xa = np.asarray(x, dtype=float)
    single = xa.ndim == 1
    xb = xa[None, :] if single else xa
    if xb.ndim != 2 or xb.shape[1] != kernel.dim:
        raise KernelError(f"x must have dimension {kernel.dim}, got shape {xa.shape}")

    if exact:
        out = _exact_pair_average(kernel.drift, xb, pts)
    elif kernel.mean_drift is not None:
        out = np.asarray(kernel.mean_drift(xb, pts), dtype=float)
    else:
        out = _pair_average(kernel.drift, xb, pts, (kernel.dim,), threads)
    return out[0] if single else out


def mean_field_diffusion(kernel: KernelPair, x, measure, *, threads: int = 1, exact: bool = False) -> Array:
    """Empirical-measure diffusion (1/N) sum_j sigma(x, y_j), entrywise.

    The averaged matrix is what multiplies a single Brownian increment;
    sigma * dW is never averaged over pairs.
    """
    pts = _as_points(measure)
    if pts.shape[0] == 0:
        raise KernelError("empty measure")
    if pts.shape[1] != kernel.dim:
        raise KernelError(f"measure dimension {pts.shape[1]} != kernel dimension {kernel.dim}")
    xa = np.asarray(x, dtype=float)
    single = xa.ndim == 1
    xb = xa[None, :] if single else xa
    if xb.ndim != 2 or xb.shape[1] != kernel.dim:
        raise KernelError(f"x must have dimension {kernel.dim}, got shape {xa.shape}")

    d = kernel.dim
    if exact:
        out = _exact_pair_average(kernel.diffusion, xb, pts)
    elif kernel.constant_diffusion is not None:
        out = np.broadcast_to(kernel.constant_diffusion, (xb.shape[0], d, d)).copy()
    else:
        out = _pair_average(kernel.diffusion, xb, pts, (d, d), threads)
    return out[0] if single else out


# ---------------------------------------------------------------------------
# Catalog
# ---------------------------------------------------------------------------


def _constant_matrix_diffusion(mat: Array):
    def diffusion(x: Array, y: Array) -> Array:
        shape = np.broadcast_shapes(x.shape, y.shape)[:-1]
        return np.broadcast_to(mat, shape + mat.shape).copy()

    return diffusion


def linear(a: float, c: float, s: float, dim: int = 1) -> KernelPair:
    """b(x, y) = a*x + c*y componentwise, sigma = s*I.

    This kernel is the exact oracle of the catalog: the mean of the limit
    dynamics solves m' = (a + c) m, and with constant diffusion each limit
    particle is an Ornstein-Uhlenbeck process with known variance.
    """
    if dim < 1:
        raise KernelError("dim must be >= 1")
    amp = max(abs(a), abs(c))
    sigma_norm = abs(s) * math.sqrt(dim)
    const = s * np.eye(dim)

    def drift(x: Array, y: Array) -> Array:
        return a * x + c * y

    def mean_drift(xb: Array, pts: Array) -> Array:
        return a * xb + c * pts.mean(axis=0)

    return KernelPair(
        name="linear",
        dim=dim,
        drift=drift,
        diffusion=_constant_matrix_diffusion(const),
        growth_bound=max(amp + sigma_norm, 1e-12),
        drift_scale=max(amp, 1e-12),
        diffusion_scale=1.0,
        drift_modulus=constant_modulus(1.0),
        diffusion_modulus=constant_modulus(1.0),
        params={"a": a, "c": c, "s": s, "dim": dim},
        mean_drift=mean_drift,
        constant_diffusion=const,
    )


def kuramoto(kappa: float, s: float = 0.3) -> KernelPair:
    """b(x, y) = kappa * sin(y - x), sigma = s; bounded, globally Lipschitz."""
    if kappa <= 0:
        raise KernelError("kappa must be positive")
    const = s * np.eye(1)

    def drift(x: Array, y: Array) -> Array:
        return kappa * np.sin(y - x)

    def mean_drift(xb: Array, pts: Array) -> Array:
        # sin(y - x) = sin(y)cos(x) - cos(y)sin(x); averaging separates.
        mean_sin = float(np.sin(pts).mean())
        mean_cos = float(np.cos(pts).mean())
        return kappa * (mean_sin * np.cos(xb) - mean_cos * np.sin(xb))

    return KernelPair(
        name="kuramoto",
        dim=1,
        drift=drift,
        diffusion=_constant_matrix_diffusion(const),
        growth_bound=kappa + abs(s),
        drift_scale=kappa,
        diffusion_scale=1.0,
        drift_modulus=constant_modulus(1.0),
        diffusion_modulus=constant_modulus(1.0),
        params={"kappa": kappa, "s": s},
        mean_drift=mean_drift,
        constant_diffusion=const,
    )


def _glued_u_log(v: Array, knot: float) -> Array:
    """v * log(min(|v|, knot)); equals -u*log|u| glued linear past the knot."""
    av = np.abs(v)
    np.clip(av, _TINY, knot, out=av)
    np.log(av, out=av)
    return v * av


def loglip(knot: float = math.exp(-2.0), s: float = 0.3) -> KernelPair:
    """Scalar drift b(x, y) = f(x - y) with f(u) = u*log(1/|u|) near 0.

    f is glued to the linear function u*log(1/knot) for |u| > knot, so the
    drift has genuinely log-Lipschitz (non-Lipschitz) continuity at the
    origin while keeping linear growth.  Diffusion is the constant s.
    """
    if not 0.0 < knot < 1.0 / math.e:
        raise KernelError("knot must lie in (0, 1/e)")
    tail_slope = -math.log(knot)
    peak = knot * tail_slope  # max of |f| on |u| <= knot (f increasing there)
    const = s * np.eye(1)

    def drift(x: Array, y: Array) -> Array:
        # f(x - y) written with v = y - x so no extra negation pass is needed.
        return _glued_u_log(y - x, knot)

    return KernelPair(
        name="loglip",
        dim=1,
        drift=drift,
        diffusion=_constant_matrix_diffusion(const),
        growth_bound=max(peak + abs(s), tail_slope),
        drift_scale=2.0,
        diffusion_scale=1.0,
        drift_modulus=log_modulus(knot),
        diffusion_modulus=constant_modulus(1.0),
        params={"knot": knot, "s": s},
        constant_diffusion=const,
    )


def loglip_diffusion(knot: float = math.exp(-2.0)) -> KernelPair:
    """sigma(x, y) = g(x - y) with g(u) = u*sqrt(log(1/|u|)) near 0.

    Exercises the squared modulus branch of the diffusion condition; the
    drift -x keeps the dynamics stable and is deliberately Lipschitz.
    """
    if not 0.0 < knot < 1.0 / math.e:
        raise KernelError("knot must lie in (0, 1/e)")
    tail_slope = math.sqrt(-math.log(knot))
    peak = knot * tail_slope

    def drift(x: Array, y: Array) -> Array:
        return 0.0 * y - x

    def mean_drift(xb: Array, pts: Array) -> Array:
        return -xb

    def diffusion(x: Array, y: Array) -> Array:
        v = x - y
        av = np.abs(v)
        np.clip(av, _TINY, knot, out=av)
        np.log(av, out=av)
        np.negative(av, out=av)
        np.sqrt(av, out=av)
        return (v * av)[..., None]

    return KernelPair(
        name="loglip-diffusion",
        dim=1,
        drift=drift,
        diffusion=diffusion,
        growth_bound=max(peak, 1.0 + tail_slope),
        drift_scale=1.0,
        diffusion_scale=2.5,
        drift_modulus=constant_modulus(1.0),
        diffusion_modulus=log_modulus(knot),
        params={"knot": knot},
        mean_drift=mean_drift,
    )


def zero(dim: int = 1) -> KernelPair:
    """b = 0, sigma = 0; frozen dynamics, useful as a degenerate check."""

    def drift(x: Array, y: Array) -> Array:
        return 0.0 * x + 0.0 * y

    return KernelPair(
        name="zero",
        dim=dim,
        drift=drift,
        diffusion=_constant_matrix_diffusion(np.zeros((dim, dim))),
        growth_bound=1.0,
        drift_scale=1.0,
        diffusion_scale=1.0,
        drift_modulus=constant_modulus(1.0),
        diffusion_modulus=constant_modulus(1.0),
        constant_diffusion=np.zeros((dim, dim)),
    )


_CATALOG: dict[str, Callable[..., KernelPair]] = {
    "linear": linear,
    "kuramoto": kuramoto,
    "loglip": loglip,
    "loglip-diffusion": loglip_diffusion,
    "zero": zero,
}

_CATALOG_DEFAULTS: dict[str, dict[str, float]] = {
    "linear": {"a": -1.0, "c": 0.5, "s": 0.2},
    "kuramoto": {"kappa": 0.5, "s": 0.3},
    "loglip": {},
    "loglip-diffusion": {},
    "zero": {},
}


def catalog_names() -> list[str]:
    return sorted(_CATALOG)


def make_kernel(name: str, params: Mapping[str, float] | None = None) -> KernelPair:
    """Build a catalog kernel from its name and a parameter map."""
    if name not in _CATALOG:
        raise KernelError(f"unknown kernel {name!r}; catalog: {', '.join(catalog_names())}")
    merged = dict(_CATALOG_DEFAULTS[name])
    merged.update(params or {})
    if name == "linear" and "dim" in merged:
        merged["dim"] = int(merged["dim"])
    try:
        return _CATALOG[name](**merged)
    except TypeError as exc:
        raise KernelError(f"bad parameters for kernel {name!r}: {exc}") from None


# ---------------------------------------------------------------------------
# Sampling-based condition validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ValidationReport:
    """Maximal observed constraint ratios; all must stay <= 1 + tolerance."""

    kernel: str
    n_samples: int
    tolerance: float
    growth_ratio: float
    drift_modulus_ratio: float
    diffusion_modulus_ratio: float

    @property
    def passed(self) -> bool:
        cap = 1.0 + self.tolerance
        return (
            self.growth_ratio <= cap
            and self.drift_modulus_ratio <= cap
            and self.diffusion_modulus_ratio <= cap
        )

    def ratios(self) -> dict[str, float]:
        return {
            "growth": self.growth_ratio,
            "drift_modulus": self.drift_modulus_ratio,
            "diffusion_modulus": self.diffusion_modulus_ratio,
        }


def gaussian_sampler(scale: float = 2.0):
    def sample(rng: np.random.Generator, n: int, dim: int) -> Array:
        return scale * rng.standard_normal((n, dim))

    return sample


def validate_conditions(
    kernel: KernelPair,
    sampler=None,
    n_samples: int = 4000,
    *,
    tolerance: float = 1e-6,
    seed: int = 0,
) -> ValidationReport:
    """Check the declared growth/modulus constants on random samples.

    Half of the modulus samples are small perturbations with log-spaced
    displacement sizes, probing the regime near zero where log-Lipschitz
    moduli matter; the other half are free pairs.  Report-only: never
    raises on a violated constraint.
    """
    if n_samples < 1:
        raise KernelError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    draw = sampler or gaussian_sampler()
    d = kernel.dim

    x = draw(rng, n_samples, d)
    y = draw(rng, n_samples, d)
    b = kernel.drift(x, y)
    sig = kernel.diffusion(x, y)
    num = np.linalg.norm(b, axis=-1) + np.linalg.norm(sig, axis=(-2, -1))
    den = kernel.growth_bound * (1.0 + np.linalg.norm(x, axis=-1) + np.linalg.norm(y, axis=-1))
    growth_ratio = float(np.max(num / den))

    half = n_samples // 2 or 1
    x1 = draw(rng, n_samples, d)
    y1 = draw(rng, n_samples, d)
    # Free second pair for the first half, small log-spaced displacements
    # for the second half.
    x2 = draw(rng, n_samples, d)
    y2 = draw(rng, n_samples, d)
    eps = 10.0 ** rng.uniform(-9.0, 0.0, size=(n_samples - half, 1))
    dir_x = rng.standard_normal((n_samples - half, d))
    dir_x /= np.linalg.norm(dir_x, axis=-1, keepdims=True)
    dir_y = rng.standard_normal((n_samples - half, d))
    dir_y /= np.linalg.norm(dir_y, axis=-1, keepdims=True)
    x2[half:] = x1[half:] + eps * dir_x
    y2[half:] = y1[half:] + eps * 10.0 ** rng.uniform(-9.0, 0.0, size=(n_samples - half, 1)) * dir_y

    dx = np.linalg.norm(x1 - x2, axis=-1)
    dy = np.linalg.norm(y1 - y2, axis=-1)
    live = (dx > 0) | (dy > 0)

    b_num = np.linalg.norm(kernel.drift(x1, y1) - kernel.drift(x2, y2), axis=-1)
    b_den = kernel.drift_scale * (dx * kernel.drift_modulus(dx) + dy * kernel.drift_modulus(dy))
    drift_ratio = float(np.max(b_num[live] / b_den[live])) if live.any() else 0.0

    s_num = np.linalg.norm(kernel.diffusion(x1, y1) - kernel.diffusion(x2, y2), axis=(-2, -1)) ** 2
    s_den = kernel.diffusion_scale * (
        dx**2 * kernel.diffusion_modulus(dx) + dy**2 * kernel.diffusion_modulus(dy)
    )
    diffusion_ratio = float(np.max(s_num[live] / s_den[live])) if live.any() else 0.0

    return ValidationReport(
        kernel=kernel.name,
        n_samples=n_samples,
        tolerance=tolerance,
        growth_ratio=growth_ratio,
        drift_modulus_ratio=drift_ratio,
        diffusion_modulus_ratio=diffusion_ratio,
    )
