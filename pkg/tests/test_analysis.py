import math

import numpy as np
import pytest

from mvsde import RhoEta, alpha_envelope_check, bihari_bound, fit_rate, rho_eta
from mvsde.analysis import AnalysisError, check_modulus_domination, select_eta
from mvsde.kernels import constant_modulus, log_modulus, ModulusFn

from .oracles import integrate_comparison_ode, least_squares_slope

ETA = math.exp(-2.0)


# ---------------------------------------------------------------------------
# rho_eta
# ---------------------------------------------------------------------------


def test_rho_eta_branch_continuity_at_knot():
    rho = RhoEta(ETA)
    first = ETA * math.log(1.0 / ETA)
    second = (math.log(1.0 / ETA) - 1.0) * ETA + ETA
    assert abs(first - second) < 1e-12
    assert abs(rho(ETA) - first) < 1e-12
    assert rho(ETA) == pytest.approx(2.0 * math.exp(-2.0), rel=1e-12)


def test_rho_eta_values():
    rho = RhoEta(ETA)
    assert rho(0.0) == 0.0
    assert rho(1.0) == pytest.approx(1.0 + math.exp(-2.0), rel=1e-12)
    tiny = 1e-9
    assert rho(tiny) == pytest.approx(tiny * math.log(1.0 / tiny), rel=1e-12)


def test_rho_eta_strictly_increasing_and_concave(rng):
    rho = RhoEta(ETA)
    xs = np.sort(np.concatenate([np.logspace(-12, 0.5, 2000), [ETA]]))
    vals = rho(xs)
    assert np.all(np.diff(vals) > 0)
    a = 10.0 ** rng.uniform(-9, 0.5, size=500)
    b = 10.0 ** rng.uniform(-9, 0.5, size=500)
    mid = rho((a + b) / 2.0)
    chord = 0.5 * (rho(a) + rho(b))
    assert np.all(mid >= chord - 1e-12)


def test_rho_eta_domain_checks():
    with pytest.raises(AnalysisError):
        RhoEta(0.5)  # >= 1/e
    with pytest.raises(AnalysisError):
        RhoEta(0.0)
    with pytest.raises(AnalysisError):
        rho_eta(-1.0, ETA)


# ---------------------------------------------------------------------------
# modulus domination
# ---------------------------------------------------------------------------


def test_constant_modulus_dominated_at_default_eta():
    # kappa = 0.5 <= log(1/eta) - 1 = 1, so the linear branch dominates.
    xs = np.logspace(-9, 1, 300)
    report = check_modulus_domination(constant_modulus(0.5), ETA, xs)
    assert report.ok


def test_log_modulus_dominated_at_smaller_eta():
    xs = np.logspace(-9, 1, 300)
    report = check_modulus_domination(log_modulus(math.exp(-2.0)), math.exp(-3.0), xs)
    assert report.ok


def test_doubled_log_modulus_fails_near_zero():
    gamma = ModulusFn(lambda x: 2.0 * (-np.log(np.minimum(x, 0.1))), log_ratio_limit=2.0, bound_on_tail=2.0 * math.log(10.0))
    xs = np.logspace(-9, 1, 300)
    report = check_modulus_domination(gamma, ETA, xs)
    assert not report.ok
    assert report.violation_x is not None and report.violation_x < ETA
    # and no eta rescues it
    final = select_eta(gamma, xs)
    assert not final.ok


def test_select_eta_for_catalog_moduli():
    for gamma in (constant_modulus(1.0), log_modulus(math.exp(-2.0))):
        report = select_eta(gamma)
        assert report.ok
        assert 0.0 < report.eta < 1.0 / math.e


# ---------------------------------------------------------------------------
# bihari bound
# ---------------------------------------------------------------------------


def test_bihari_hand_values():
    g0 = math.exp(-4.0)
    assert bihari_bound(g0, 0.0, 0.3) == pytest.approx(g0, rel=1e-15)
    assert bihari_bound(g0, math.log(2.0), 0.3) == pytest.approx(math.exp(-2.0), rel=1e-12)


def test_bihari_dominates_integrated_comparison_ode():
    g0, eta = math.exp(-4.0), 0.3
    integrated = integrate_comparison_ode(g0, eta, t_end=1.0, n_steps=200_000)
    assert integrated <= bihari_bound(g0, 1.0, eta) + 1e-6


def test_bihari_monotonicity():
    # The base is below 1, so a larger integrated rate weakens (raises) the
    # bound, consistent with the hand value e^-4 -> e^-2 at q = log 2.
    assert bihari_bound(1e-3, 2.0, 0.3) > bihari_bound(1e-3, 1.0, 0.3)
    assert bihari_bound(1e-3, 1.0, 0.3) > bihari_bound(1e-3, 0.0, 0.3)
    assert bihari_bound(1e-4, 1.0, 0.3) < bihari_bound(1e-3, 1.0, 0.3)


def test_bihari_precondition():
    with pytest.raises(AnalysisError):
        bihari_bound(0.31, 1.0, 0.3)
    with pytest.raises(AnalysisError):
        bihari_bound(0.0, 1.0, 0.3)


# ---------------------------------------------------------------------------
# rate fitting
# ---------------------------------------------------------------------------


def test_fit_exact_power_laws():
    xs = np.array([4.0, 8.0, 16.0, 32.0])
    fit = fit_rate(xs, 3.0 / xs)
    assert fit.slope == pytest.approx(-1.0, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    fit = fit_rate(xs, 0.5 * xs**0.8)
    assert fit.slope == pytest.approx(0.8, abs=1e-12)


def test_fit_three_hand_points_matches_longhand_regression():
    xs = [1.0, 2.0, 4.0]
    errs = [2.0, 1.0, 0.5]
    expected = least_squares_slope(np.log(xs), np.log(errs))
    fit = fit_rate(xs, errs)
    assert fit.slope == pytest.approx(expected, abs=1e-14)
    assert fit.slope == pytest.approx(-1.0, abs=1e-14)


def test_fit_residuals_recompute():
    rng = np.random.default_rng(0)
    xs = np.array([1.0, 2.0, 4.0, 8.0, 16.0])
    errs = 2.0 * xs**-1.3 * np.exp(0.05 * rng.standard_normal(5))
    fit = fit_rate(xs, errs)
    np.testing.assert_allclose(fit.log_errs - fit.predicted(), fit.residuals, atol=1e-12)


def test_fit_scale_invariance():
    xs = np.array([1.0, 3.0, 9.0, 27.0])
    errs = np.array([5.0, 2.0, 1.1, 0.4])
    s1 = fit_rate(xs, errs).slope
    s2 = fit_rate(xs, 1e6 * errs).slope
    assert s1 == pytest.approx(s2, abs=1e-12)


def test_fit_input_validation():
    with pytest.raises(AnalysisError):
        fit_rate([1.0, 2.0], [1.0, 2.0])
    with pytest.raises(AnalysisError):
        fit_rate([1.0, 1.0, 2.0], [1.0, 2.0, 3.0])
    with pytest.raises(AnalysisError):
        fit_rate([1.0, 2.0, 3.0], [1.0, -2.0, 3.0])


# ---------------------------------------------------------------------------
# envelope check
# ---------------------------------------------------------------------------


def test_envelope_passes_for_linear_decay():
    hs = [2.0**-k for k in range(4, 9)]
    errs = [0.3 * h for h in hs]
    assert alpha_envelope_check(hs, errs, 0.4)


def test_envelope_fails_for_constant_errors():
    hs = [2.0**-k for k in range(4, 9)]
    assert not alpha_envelope_check(hs, [1.0 + 0.001 * k for k in range(5)], 0.4)


def test_envelope_boundary_case():
    hs = [2.0**-k for k in range(4, 9)]
    errs = [h**0.8 for h in hs]
    assert alpha_envelope_check(hs, errs, 0.4, slope_tolerance=0.0)


def test_envelope_input_validation():
    with pytest.raises(AnalysisError):
        alpha_envelope_check([0.1, 0.2, 0.4], [1, 1, 1], 0.4)  # increasing h
    with pytest.raises(AnalysisError):
        alpha_envelope_check([0.4, 0.2, 0.1], [1, 1, 1], 0.6)  # alpha out of range
