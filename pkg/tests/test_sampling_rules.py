import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dynsgd.num_core import RngStream
from dynsgd.sampling_rules import (
    GradientBatchStats,
    Rule,
    SamplingController,
    accumulate_stats,
    descent_probability_per_dim,
    lower_median,
    next_size,
    per_dimension_candidates,
    per_dimension_next_size,
    single_update_next_size,
)

from oracles import phi_series, quantile_bisection
from synthetic import descent_frequencies

Z95 = quantile_bisection(0.95)


def stats(mean, var, n):
    return GradientBatchStats(np.atleast_1d(np.asarray(mean, float)), np.atleast_1d(np.asarray(var, float)), n)


def pd_ctl(**kw):
    return SamplingController(Rule.PER_DIMENSION_MEDIAN, **kw)


def su_ctl(**kw):
    return SamplingController(Rule.SINGLE_UPDATE, **kw)


# -- accumulate_stats ------------------------------------------------------


def test_two_point_stats():
    s = accumulate_stats([[1.0], [3.0]])
    np.testing.assert_array_equal(s.mean, [2.0])
    np.testing.assert_array_equal(s.var_of_mean, [1.0])
    assert s.batch_size == 2


def test_identical_samples_have_zero_variance():
    v = np.array([1.5, -2.0, 0.25])
    s = accumulate_stats(np.tile(v, (7, 1)))
    np.testing.assert_array_equal(s.mean, v)
    np.testing.assert_array_equal(s.var_of_mean, np.zeros(3))


def test_variance_of_mean_monte_carlo():
    draws = 5.0 + 3.0 * RngStream(1, 0).standard_normal((10**4, 1))
    s = accumulate_stats(draws)
    assert abs(s.var_of_mean[0] - 9.0 / 10**4) <= 0.1 * 9.0 / 10**4


@given(arrays(np.float64, st.tuples(st.integers(2, 30), st.integers(1, 5)),
              elements=st.floats(-1e3, 1e3)))
def test_stats_match_two_pass_formula(g):
    s = accumulate_stats(g)
    n = g.shape[0]
    mean = [math.fsum(col) / n for col in g.T]
    var = [math.fsum((x - m) ** 2 for x in col) / (n * (n - 1)) for col, m in zip(g.T, mean)]
    np.testing.assert_allclose(s.mean, mean, rtol=1e-12, atol=1e-9)
    np.testing.assert_allclose(s.var_of_mean, var, rtol=1e-9, atol=1e-9)


def test_stats_errors():
    with pytest.raises(ValueError):
        accumulate_stats([[1.0, 2.0]])
    with pytest.raises(ValueError):
        accumulate_stats([[1.0, 2.0], [3.0]])
    with pytest.raises(ValueError):
        GradientBatchStats(np.zeros(2), np.array([1.0, -1.0]), 5)
    with pytest.raises(ValueError):
        GradientBatchStats(np.zeros(1), np.zeros(1), 1)


# -- descent probability ---------------------------------------------------


def test_descent_probability_examples():
    p = descent_probability_per_dim(stats([0.0, 2.0, -3.0, 3.0], [1.0, 4.0, 1.0, 1.0], 10))
    assert p[0] == 0.5
    assert abs(p[1] - phi_series(1.0)) <= 1e-6
    assert abs(p[1] - 0.8413447) <= 1e-6
    assert p[2] == p[3]


def test_descent_probability_zero_variance():
    p = descent_probability_per_dim(stats([0.0, 1.0], [0.0, 0.0], 4))
    np.testing.assert_array_equal(p, [0.5, 1.0])


# -- per-dimension rule ----------------------------------------------------


def test_per_dimension_worked_example():
    # ceil(100 * 4 * z^2 / 4) with z = 1.6448536... -> ceil(270.554) = 271
    assert math.ceil(100 * Z95 ** 2) == 271
    assert per_dimension_next_size(stats([2.0], [4.0], 100), pd_ctl(n_current=100)) == 271


def test_per_dimension_fixed_point():
    ctl = pd_ctl(n_current=100)
    mean = np.array([0.5, 2.0, 7.0])
    var = mean ** 2 / ctl.z_alpha ** 2
    np.testing.assert_array_equal(per_dimension_candidates(stats(mean, var, 100), ctl), [100, 100, 100])


def test_median_and_clamp_semantics():
    assert lower_median([10, 5000, 12]) == 12
    assert lower_median([600, 700, 800]) == 700
    assert lower_median([4, 1, 3, 2]) == 2
    ctl = pd_ctl(n_max=512)
    assert ctl.clamp(12) == 12
    assert ctl.clamp(700) == 512
    assert ctl.clamp(1) == ctl.n_min
    assert ctl.clamp(math.inf) == 512


def test_per_dimension_median_branch():
    # var chosen so the candidates are exactly {10, 5000, 12} at N = 10
    ctl = pd_ctl(n_current=10, n_max=512)
    z2 = ctl.z_alpha ** 2
    s = stats([1.0, 1.0, 1.0], np.array([10, 5000, 12]) / (10 * z2), 10)
    np.testing.assert_array_equal(per_dimension_candidates(s, ctl), [10, 5000, 12])
    assert per_dimension_next_size(s, ctl) == 12
    s = stats([1.0, 1.0, 1.0], np.array([600, 700, 800]) / (10 * z2), 10)
    assert per_dimension_next_size(s, ctl) == 512


def test_per_dimension_decreases_when_accurate():
    ctl = pd_ctl(n_current=1000)
    assert per_dimension_next_size(stats([5.0], [0.01], 1000), ctl) < 1000


def test_zero_mean_saturates():
    ctl = pd_ctl()
    assert per_dimension_next_size(stats([0.0, 0.0, 1.0], [1.0, 1.0, 1.0], 32), ctl) == ctl.n_max
    assert single_update_next_size(stats([0.0, 0.0], [1.0, 1.0], 32), su_ctl()) == 8192


finite = st.floats(-1e6, 1e6, allow_nan=False)
nonneg = st.floats(0.0, 1e6)


@given(st.lists(st.tuples(finite, nonneg), min_size=1, max_size=12), st.integers(2, 10**5),
       st.sampled_from([Rule.PER_DIMENSION_MEDIAN, Rule.SINGLE_UPDATE, Rule.FIXED]))
def test_rules_respect_bounds(pairs, n, rule):
    mean, var = map(np.array, zip(*pairs))
    ctl = SamplingController(rule, n_current=32, n_min=4, n_max=8192)
    out = next_size(stats(mean, var, n), ctl)
    assert 4 <= out <= 8192
    assert ctl.n_current == out


@given(st.lists(st.tuples(st.floats(1e-3, 1e3), st.floats(1e-6, 1e3)), min_size=1, max_size=8),
       st.integers(-20, 20), st.booleans(), st.integers(2, 5000))
def test_candidates_scale_invariant(pairs, k, flip, n):
    c = (-1.0 if flip else 1.0) * 2.0 ** k
    mean, var = map(np.array, zip(*pairs))
    ctl = pd_ctl()
    a = per_dimension_candidates(stats(mean, var, n), ctl)
    b = per_dimension_candidates(stats(c * mean, c * c * var, n), ctl)
    np.testing.assert_array_equal(a, b)
    assert single_update_next_size(stats(mean, var, n), su_ctl()) == \
        single_update_next_size(stats(c * mean, c * c * var, n), su_ctl())


@given(st.floats(1e-3, 1e3), st.floats(0.0, 1e3), st.floats(0.0, 1e3), st.integers(2, 5000))
def test_candidates_monotone_in_variance(m, v1, v2, n):
    lo, hi = sorted((v1, v2))
    ctl = pd_ctl()
    a = per_dimension_candidates(stats([m], [lo], n), ctl)[0]
    b = per_dimension_candidates(stats([m], [hi], n), ctl)[0]
    assert a <= b


# -- single rule -----------------------------------------------------------


def test_single_update_worked_example():
    # 100 * 25 * z^2 / 625 = 10.822 -> 11
    assert math.ceil(100 * 25 * Z95 ** 2 / 625) == 11
    assert single_update_next_size(stats([3.0, 4.0], [1.0, 1.0], 100), su_ctl(n_min=2)) == 11
    assert single_update_next_size(stats([3.0, 4.0], [1.0, 1.0], 100), su_ctl(n_min=16)) == 16


# -- dispatch ---------------------------------------------------------------


def test_next_size_dispatch():
    fixed = SamplingController.fixed(32)
    for _ in range(3):
        assert next_size(stats([1.0], [100.0], 32), fixed) == 32
    pd = pd_ctl(n_current=100)
    assert next_size(stats([2.0], [4.0], 100), pd) == 271
    assert pd.n_current == 271
    su = su_ctl(n_current=100)
    assert next_size(stats([3.0, 4.0], [1.0, 1.0], 100), su) == max(11, su.n_min)


@pytest.mark.parametrize("alpha", [0.0, 0.5, 0.7, -0.1])
def test_alpha_range(alpha):
    with pytest.raises(ValueError, match=r"\(0, 0.5\)"):
        pd_ctl(alpha=alpha)


def test_controller_bounds_validation():
    with pytest.raises(ValueError):
        pd_ctl(n_min=1)
    with pytest.raises(ValueError):
        pd_ctl(n_min=10, n_max=5)
    with pytest.raises(ValueError):
        pd_ctl(n_current=2)


# -- empirical guarantee ----------------------------------------------------


def test_empirical_descent_per_dimension():
    median_agree, _ = descent_frequencies(Rule.PER_DIMENSION_MEDIAN)
    assert median_agree >= 0.90


def test_empirical_descent_single():
    _, aggregate_agree = descent_frequencies(Rule.SINGLE_UPDATE)
    assert aggregate_agree >= 0.90
