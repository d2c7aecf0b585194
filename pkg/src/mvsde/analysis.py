"""Analytic utilities: the concave comparison modulus, the Bihari-type
bound it contracts under, modulus domination checks, and log-log rate fits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernels import ModulusFn

Array = np.ndarray

_E_INV = 1.0 / math.e


class AnalysisError(ValueError):
    pass


@dataclass(frozen=True)
class RhoEta:
    """Concave comparison function: x*log(1/x) on (0, eta], linear beyond.

    The linear branch (log(1/eta) - 1) * x + eta matches value and slope at
    x = eta, so the function is strictly increasing, concave, and C^1; it
    vanishes continuously at 0.
    """

    eta: float

    def __post_init__(self):
        if not 0.0 < self.eta < _E_INV:
            raise AnalysisError(f"eta must lie strictly inside (0, 1/e), got {self.eta}")

    def __call__(self, x) -> Array | float:
        arr = np.asarray(x, dtype=float)
        if np.any(arr < 0):
            raise AnalysisError("rho_eta is defined for x >= 0 only")
        safe = np.where(arr > 0, arr, 1.0)
        small = -safe * np.log(safe)
        large = (math.log(1.0 / self.eta) - 1.0) * arr + self.eta
        out = np.where(arr <= self.eta, np.where(arr > 0, small, 0.0), large)
        return float(out) if np.isscalar(x) or arr.ndim == 0 else out


def rho_eta(x, eta: float):
    return RhoEta(eta)(x)


@dataclass(frozen=True)
class DominationReport:
    """Outcome of checking x*gamma(x) <= rho_eta(x) and x^2*gamma(x) <= rho_eta(x^2)."""

    eta: float
    ok: bool
    max_ratio_linear: float
    max_ratio_squared: float
    violation_x: float | None


def check_modulus_domination(gamma: ModulusFn, eta: float, xs) -> DominationReport:
    """Grid check that the modulus is dominated by the comparison function."""
    xs = np.asarray(xs, dtype=float)
    if np.any(xs <= 0):
        raise AnalysisError("grid must be positive")
    rho = RhoEta(eta)
    g = gamma(xs)
    slack = 1.0 + 1e-12  # equality on the log branch is legitimate
    ratio_lin = xs * g / rho(xs)
    ratio_sq = xs**2 * g / rho(xs**2)
    ok_lin = ratio_lin <= slack
    ok_sq = ratio_sq <= slack
    ok = bool(np.all(ok_lin) and np.all(ok_sq))
    violation = None
    if not ok:
        bad = ~(ok_lin & ok_sq)
        violation = float(xs[bad][0])
    return DominationReport(
        eta=eta,
        ok=ok,
        max_ratio_linear=float(ratio_lin.max()),
        max_ratio_squared=float(ratio_sq.max()),
        violation_x=violation,
    )


def select_eta(
    gamma: ModulusFn,
    xs=None,
    *,
    eta_start: float = 0.35,
    eta_min: float = 1e-10,
) -> DominationReport:
    """Bisect eta downward until domination holds on the grid.

    Returns the first passing report; if no eta in (0, 1/e) works, the
    report of the last (smallest) attempt comes back with ok=False and the
    violating grid point.
    """
    if xs is None:
        xs = np.logspace(-9, 1, 400)
    eta = min(eta_start, _E_INV * 0.999)
    report = check_modulus_domination(gamma, eta, xs)
    while not report.ok and eta > eta_min:
        eta /= 2.0
        report = check_modulus_domination(gamma, eta, xs)
    return report


def bihari_bound(g0: float, q_integral: float, eta: float) -> float:
    """Comparison bound g(t) <= g0 ** exp(-integral of q) for g' <= q * rho_eta(g).

    Requires the starting value below eta; the bound contracts doubly
    exponentially in the integrated rate.
    """
    RhoEta(eta)  # validates eta
    if not 0.0 < g0 < eta:
        raise AnalysisError(f"need 0 < g0 < eta, got g0={g0}, eta={eta}")
    if q_integral < 0:
        raise AnalysisError("q_integral must be >= 0")
    return float(g0 ** math.exp(-q_integral))


@dataclass(frozen=True)
class RateFit:
    """Least-squares line through (log x, log err)."""

    slope: float
    intercept: float
    r_squared: float
    log_xs: Array
    log_errs: Array
    residuals: Array

    def predicted(self) -> Array:
        return self.slope * self.log_xs + self.intercept


def fit_rate(xs, errs) -> RateFit:
    """Fit the empirical convergence order: err ~ C * x^slope.

    Plain unweighted least squares on log-log coordinates; the intercept
    absorbs the unknown constant, so rescaling errs leaves the slope alone.
    """
    xs = np.asarray(xs, dtype=float)
    errs = np.asarray(errs, dtype=float)
    if xs.shape != errs.shape or xs.ndim != 1:
        raise AnalysisError("xs and errs must be 1-d arrays of equal length")
    if xs.shape[0] < 3:
        raise AnalysisError("need at least 3 points to fit a rate")
    if np.unique(xs).shape[0] != xs.shape[0]:
        raise AnalysisError("xs must be distinct")
    if np.any(xs <= 0) or np.any(errs <= 0):
        raise AnalysisError("xs and errs must be positive")
    lx = np.log(xs)
    ly = np.log(errs)
    mx, my = lx.mean(), ly.mean()
    var = float(np.sum((lx - mx) ** 2))
    slope = float(np.sum((lx - mx) * (ly - my)) / var)
    intercept = float(my - slope * mx)
    resid = ly - (slope * lx + intercept)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((ly - my) ** 2))
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res <= 1e-24 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return RateFit(slope=slope, intercept=intercept, r_squared=r2, log_xs=lx, log_errs=ly, residuals=resid)


def alpha_envelope_check(hs, sq_errs, alpha: float, *, slope_tolerance: float = 0.05) -> bool:
    """True iff squared errors decay at least like h^(2*alpha).

    The theoretical statement is an upper bound, so faster decay passes;
    operationally the fitted log-log slope must reach 2*alpha up to the
    tolerance.
    """
    if not 0.0 < alpha < 0.5:
        raise AnalysisError("alpha must lie in (0, 1/2)")
    hs = np.asarray(hs, dtype=float)
    if np.any(np.diff(hs) >= 0):
        raise AnalysisError("h values must be strictly decreasing")
    fit = fit_rate(hs, sq_errs)
    return bool(fit.slope >= 2.0 * alpha - slope_tolerance)


def mean_and_stderr(values) -> tuple[float, float]:
    """Sample mean and its standard error across replications."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise AnalysisError("no values")
    if arr.size == 1:
        return float(arr[0]), 0.0
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size))
