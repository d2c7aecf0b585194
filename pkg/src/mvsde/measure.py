"""Empirical measures, moments, and exact Wasserstein distances.

Equal-size uniform empirical measures only: that is what every producer in
this package emits, and on such measures the optimal coupling is a
permutation, so small instances can be solved exactly.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

Array = np.ndarray

ASSIGNMENT_CAP = 512


class MeasureError(ValueError):
    pass


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Uniform atomic measure on N points in R^d, stored as a (N, d) array."""

    points: Array

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise MeasureError(f"points must be a nonempty (N, d) array, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise MeasureError("points must be finite")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class TransportPlan:
    """Optimal pairing between two equal-size clouds and its W_p cost."""

    pairing: Array
    cost: float
    p: float

    def __post_init__(self):
        perm = np.asarray(self.pairing, dtype=int)
        if sorted(perm.tolist()) != list(range(perm.shape[0])):
            raise MeasureError("pairing must be a permutation")
        object.__setattr__(self, "pairing", perm)


def _as_measure(mu) -> EmpiricalMeasure:
    return mu if isinstance(mu, EmpiricalMeasure) else EmpiricalMeasure(mu)


def moment(mu, p: float = 2.0) -> float:
    """(1/N) sum |x_i|^p with the Euclidean norm."""
    mu = _as_measure(mu)
    if p < 1:
        raise MeasureError("p must be >= 1")
    norms = np.linalg.norm(mu.points, axis=1)
    return float(np.mean(norms**p))


def wasserstein_1d(mu, nu, p: float = 2.0) -> float:
    """Exact W_p in dimension one by pairing order statistics."""
    mu, nu = _as_measure(mu), _as_measure(nu)
    if p < 1:
        raise MeasureError("p must be >= 1")
    if mu.dim != 1 or nu.dim != 1:
        raise MeasureError("wasserstein_1d supports d = 1 only")
    if mu.n != nu.n:
        raise MeasureError("unequal sample counts are unsupported")
    xs = np.sort(mu.points[:, 0])
    ys = np.sort(nu.points[:, 0])
    return float(np.mean(np.abs(xs - ys) ** p) ** (1.0 / p))


def wasserstein_assignment(mu, nu, p: float = 2.0, *, cap: int = ASSIGNMENT_CAP) -> TransportPlan:
    """Exact W_p via an optimal assignment over the N x N cost matrix.

    Refuses clouds above ``cap`` (the solve is O(N^3)); use wasserstein_1d
    in dimension one, or the identity-coupling upper bound, for larger N.
    """
    mu, nu = _as_measure(mu), _as_measure(nu)
    if p < 1:
        raise MeasureError("p must be >= 1")
    if mu.n != nu.n:
        raise MeasureError("unequal sample counts are unsupported")
    if mu.dim != nu.dim:
        raise MeasureError("dimension mismatch")
    if mu.n > cap:
        raise MeasureError(
            f"N = {mu.n} exceeds the assignment cap {cap}; use wasserstein_1d (d = 1) "
            "or w2sq_upper_bound for an upper bound"
        )
    diff = mu.points[:, None, :] - nu.points[None, :, :]
    cost_mat = np.linalg.norm(diff, axis=2) ** p
    rows, cols = linear_sum_assignment(cost_mat)
    pairing = np.empty(mu.n, dtype=int)
    pairing[rows] = cols
    cost = float(np.mean(cost_mat[rows, cols]) ** (1.0 / p))
    return TransportPlan(pairing=pairing, cost=cost, p=p)


def wasserstein_bruteforce(mu, nu, p: float = 2.0, *, max_n: int = 8) -> float:
    """Minimum over all N! pairings; the independent oracle for small N."""
    mu, nu = _as_measure(mu), _as_measure(nu)
    if mu.n != nu.n:
        raise MeasureError("unequal sample counts are unsupported")
    if mu.n > max_n:
        raise MeasureError(f"brute force is capped at N = {max_n}")
    diff = mu.points[:, None, :] - nu.points[None, :, :]
    cost_mat = np.linalg.norm(diff, axis=2) ** p
    idx = range(mu.n)
    best = min(sum(cost_mat[i, perm[i]] for i in idx) for perm in itertools.permutations(idx))
    return float((best / mu.n) ** (1.0 / p))


def w2sq_upper_bound(mu, nu) -> float:
    """Identity-coupling bound: W_2(mu, nu)^2 <= mean_i |x_i - y_i|^2.

    Valid because pairing samples by index is one admissible coupling; the
    Picard stopping rule needs only this upper bound.
    """
    mu, nu = _as_measure(mu), _as_measure(nu)
    if mu.n != nu.n:
        raise MeasureError("identity coupling needs equal sample counts")
    return float(np.mean(np.sum((mu.points - nu.points) ** 2, axis=1)))
