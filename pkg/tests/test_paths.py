import math

import numpy as np
import pytest

from mvsde import TimeGrid, derive_seed, generate_bundle, restrict, sample_initial
from mvsde.paths import GridError, MemoryBudgetError


def test_grid_from_step_and_floor_map():
    grid = TimeGrid.from_step(1.0, 0.25)
    assert grid.n_steps == 4
    assert grid.step == 0.25
    np.testing.assert_allclose(grid.times, [0.0, 0.25, 0.5, 0.75, 1.0])
    for t in grid.times:
        assert grid.floor_time(t) == t
    assert grid.floor_time(0.3) == 0.25
    with pytest.raises(GridError):
        TimeGrid.from_step(1.0, 0.3)


def test_grid_index_of_rejects_off_grid():
    grid = TimeGrid.from_step(1.0, 0.125)
    assert grid.index_of(0.375) == 3
    with pytest.raises(GridError):
        grid.index_of(0.3)


def test_bundle_determinism_and_prefix_independence():
    grid = TimeGrid.from_step(1.0, 2**-4)
    b1 = generate_bundle(99, 2, 1, grid)
    b2 = generate_bundle(99, 2, 1, grid)
    np.testing.assert_array_equal(b1.increments, b2.increments)
    b3 = generate_bundle(99, 3, 1, grid)
    np.testing.assert_array_equal(b3.increments[:, :2, :], b1.increments)


def test_bundle_variance_within_chi2_band():
    grid = TimeGrid.from_step(1.0, 2**-7)
    bundle = generate_bundle(7, 512, 2, grid)
    inc = bundle.increments
    n = inc.size
    sample_var = float(np.mean(inc**2))
    h = grid.step
    assert abs(sample_var - h) <= 4.0 * h * math.sqrt(2.0 / n)
    assert abs(float(inc.mean())) <= 4.0 * math.sqrt(h / n)


def test_restrict_sums_fine_increments_exactly():
    grid = TimeGrid.from_step(1.0, 0.25)
    bundle = generate_bundle(5, 3, 1, grid)
    coarse = TimeGrid.from_step(1.0, 0.5)
    view = restrict(bundle, coarse)
    fine = bundle.increments
    np.testing.assert_array_equal(view.increments_at(0), fine[0] + fine[1])
    np.testing.assert_array_equal(view.increments_at(1), fine[2] + fine[3])


def test_restrict_to_same_grid_is_identity():
    grid = TimeGrid.from_step(1.0, 2**-3)
    bundle = generate_bundle(5, 2, 1, grid)
    view = restrict(bundle, grid)
    np.testing.assert_array_equal(view.increments, bundle.increments)


def test_nested_restriction_is_bitwise_associative():
    fine = TimeGrid.from_step(1.0, 2**-6)
    mid = TimeGrid.from_step(1.0, 2**-4)
    coarse = TimeGrid.from_step(1.0, 2**-2)
    bundle = generate_bundle(17, 4, 2, fine)
    direct = restrict(bundle, coarse).increments
    via_mid = restrict(restrict(bundle, mid), coarse).increments
    np.testing.assert_array_equal(direct, via_mid)


def test_restrict_rejects_non_nested():
    fine = TimeGrid.from_step(1.0, 2**-4)
    bundle = generate_bundle(1, 1, 1, fine)
    with pytest.raises(GridError):
        restrict(bundle, TimeGrid.from_step(1.0, 1.0 / 3.0))


def test_streaming_matches_materialized():
    grid = TimeGrid.from_step(1.0, 2**-5)
    stored = generate_bundle(123, 6, 1, grid)
    streamed = generate_bundle(123, 6, 1, grid, stream=True)
    np.testing.assert_array_equal(stored.increments, streamed.increments)
    coarse = TimeGrid.from_step(1.0, 2**-3)
    np.testing.assert_array_equal(
        restrict(stored, coarse).increments, restrict(streamed, coarse).increments
    )


def test_memory_budget_refusal_mentions_streaming():
    grid = TimeGrid.from_step(1.0, 2**-4)
    with pytest.raises(MemoryBudgetError, match="stream"):
        generate_bundle(1, 64, 1, grid, memory_budget=1024)
    bundle = generate_bundle(1, 64, 1, grid, memory_budget=1024, stream=True)
    assert bundle.base is None
    assert bundle.increments_at(0).shape == (64, 1)


def test_initial_samples():
    pm = sample_initial(1, "point_mass", {"x0": 2.0}, 5, 1)
    np.testing.assert_array_equal(pm.points, np.full((5, 1), 2.0))

    g1 = sample_initial(2, "gaussian", {"mean": 0.0, "cov": 1.0}, 100_000, 1)
    g2 = sample_initial(2, "gaussian", {"mean": 0.0, "cov": 1.0}, 100_000, 1)
    np.testing.assert_array_equal(g1.points, g2.points)
    assert abs(g1.points.mean()) <= 4.0 / math.sqrt(100_000)

    ub = sample_initial(3, "uniform_box", {"lo": -1.0, "hi": 1.0}, 1000, 2)
    assert np.all(ub.points >= -1.0) and np.all(ub.points <= 1.0)

    with pytest.raises(GridError):
        sample_initial(4, "cauchy", {}, 10, 1)


def test_initial_sample_prefix_independence():
    small = sample_initial(9, "gaussian", {"mean": 1.0, "cov": 0.04}, 10, 1)
    large = sample_initial(9, "gaussian", {"mean": 1.0, "cov": 0.04}, 50, 1)
    np.testing.assert_array_equal(large.points[:10], small.points)


def test_derive_seed_distinct_streams():
    s1 = derive_seed(42, 1, 0)
    s2 = derive_seed(42, 1, 1)
    s3 = derive_seed(42, 2, 0)
    assert len({s1, s2, s3}) == 3
    assert derive_seed(42, 1, 0) == s1
