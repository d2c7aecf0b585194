"""Pre-verification of the oracles themselves, before anything they gate.

The closed-form mean/variance formulas asserted elsewhere are confirmed
here by direct simulation, and the hand-computed constants frozen in other
test modules are derived once by the independent implementations.
"""

import math

import numpy as np

from .oracles import (
    euler_mean_recursion,
    integrate_comparison_ode,
    least_squares_slope,
    ou_euler_direct,
    ou_exact_moments,
    ou_exact_transition_samples,
)

A, C, S, M0, V0, T = -1.0, 0.5, 0.2, 1.0, 0.04, 1.0


def test_ou_formulas_match_exact_transition_sampling():
    mean, var = ou_exact_moments(A, C, S, M0, V0, T)
    n = 1_000_000
    x = ou_exact_transition_samples(A, C, S, M0, V0, T, n, seed=1)
    se_mean = x.std() / math.sqrt(n)
    assert abs(x.mean() - mean) < 4 * se_mean
    se_var = x.var() * math.sqrt(2.0 / n)
    assert abs(x.var() - var) < 4 * se_var


def test_ou_formulas_match_direct_euler_simulation():
    # Independent of the transition algebra: brute force stepping.
    mean, var = ou_exact_moments(A, C, S, M0, V0, T)
    n = 1_000_000
    x = ou_euler_direct(A, C, S, M0, V0, T, n_steps=256, n_samples=n, seed=2)
    # Euler carries an O(h) bias, so allow it on top of the Monte Carlo band.
    h_margin = 4.0 / 256
    assert abs(x.mean() - mean) < 4 * x.std() / math.sqrt(n) + h_margin * abs(mean)
    assert abs(x.var() - var) < 4 * x.var() * math.sqrt(2.0 / n) + h_margin * var


def test_ou_reference_values_are_frozen():
    # The numbers quoted in the acceptance module.
    mean, var = ou_exact_moments(A, C, S, M0, V0, T)
    assert math.isclose(mean, math.exp(-0.5), rel_tol=1e-15)
    assert math.isclose(var, 0.04 * math.exp(-2.0) + 0.02 * (1.0 - math.exp(-2.0)), rel_tol=1e-12)


def test_comparison_ode_stays_below_double_exponential_bound():
    # With eta = 0.3 the trajectory stays on the x*log(1/x) branch over [0, 1]
    # and the integrated solution meets the bound g0^exp(-1) with equality.
    g0, eta = math.exp(-4.0), 0.3
    bound = g0 ** math.exp(-1.0)
    g1 = integrate_comparison_ode(g0, eta, t_end=1.0, n_steps=100_000)
    assert g1 <= bound + 1e-6
    assert bound - g1 < 1e-4  # the bound is tight here, not just valid


def test_hand_regression_slope_for_collinear_points():
    # Points (1, 2), (2, 1), (4, 0.5) halve the error per doubling of x,
    # so the log-log slope is exactly -1.
    slope = least_squares_slope(np.log([1.0, 2.0, 4.0]), np.log([2.0, 1.0, 0.5]))
    assert math.isclose(slope, -1.0, rel_tol=1e-12)


def test_discrete_mean_recursion_approaches_exponential():
    h = 2**-9
    m_discrete = euler_mean_recursion(A, C, M0, h, round(T / h))
    m_exact = M0 * math.exp((A + C) * T)
    assert abs(m_discrete - m_exact) < 2.0 * abs(A + C) ** 2 * h * abs(m_exact)
