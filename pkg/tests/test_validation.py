import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tensorsketch import validation as val
from tensorsketch.errors import ConfigError, InputError, SizeError
from tensorsketch.sketches import FAMILIES, SketchConfig, build, identity_sketch

# row-count constant K for the dense-rows formula, fixed by a calibration run
DENSE_ROWS_K = 1.0


def unit_factors(dims, seed=0):
    gen = np.random.default_rng(seed)
    return [gen.standard_normal(d) for d in dims]


def test_identity_sketch_has_zero_moments():
    stats = val.estimate_moments(identity_sketch((4, 4)), unit_factors((4, 4)), trials=1000)
    assert all(v == pytest.approx(0.0, abs=1e-12) for v in stats.moment_estimates.values())
    assert all(c == 0 for c in stats.tail_counts.values())
    assert val.strong_jl_check(stats, val.MomentBudget(0.01, 0.01)).passed


def test_estimate_moments_errors():
    cfg = SketchConfig("dense_rows", (4,), 4)
    with pytest.raises(InputError):
        val.estimate_moments(cfg, [np.zeros(4)], trials=1000)
    with pytest.raises(InputError):
        val.estimate_moments(cfg, [np.ones(4)], trials=999)


def test_moment_estimates_monotone_in_p():
    stats = val.estimate_moments(SketchConfig("count_sketch_tensor", (8, 8), 16), unit_factors((8, 8)),
                                 p_grid=(2.0, 3.0, 4.0, 8.0), trials=2000)
    m = [stats.moment_estimates[p] for p in stats.p_grid]
    assert m == sorted(m) and m[0] >= 0
    assert all(c <= stats.trials for c in stats.tail_counts.values())


def test_threads_do_not_change_statistics():
    cfg = SketchConfig("fast_tensor_jl", (8, 8), 32, seed=4)
    a = val.estimate_moments(cfg, unit_factors((8, 8)), trials=1500, threads=1)
    b = val.estimate_moments(cfg, unit_factors((8, 8)), trials=1500, threads=3)
    assert a == b


def test_seed_override():
    cfg = SketchConfig("dense_rows", (8,), 8, seed=1)
    a = val.estimate_moments(cfg, unit_factors((8,)), trials=1000, seed=2)
    b = val.estimate_moments(cfg.with_seed(2), unit_factors((8,)), trials=1000)
    assert a == b


def test_merge_is_associative_and_matches_whole():
    gen = np.random.default_rng(1)
    values = gen.gamma(4, 0.25, size=3000)
    whole = val.TrialStatistics.from_sq_norms(values)
    parts = [val.TrialStatistics.from_sq_norms(values[i:i + 1000]) for i in (0, 1000, 2000)]
    left = parts[0].merge(parts[1]).merge(parts[2])
    right = parts[0].merge(parts[1].merge(parts[2]))
    for merged in (left, right):
        assert merged.trials == whole.trials
        assert merged.tail_counts == whole.tail_counts
        for p in whole.p_grid:
            assert merged.moment_estimates[p] == pytest.approx(whole.moment_estimates[p], rel=1e-12)
        assert merged.mean_sq_norm == pytest.approx(whole.mean_sq_norm, rel=1e-12)
    with pytest.raises(ConfigError):
        whole.merge(val.TrialStatistics.from_sq_norms(values, p_grid=(2.0,)))


def test_statistics_hand_values():
    stats = val.TrialStatistics.from_sq_norms([0.5, 1.5, 1.0, 1.2], p_grid=(2.0,), eps_grid=(0.1, 0.4))
    assert stats.moment_estimates[2.0] == pytest.approx(math.sqrt((0.25 + 0.25 + 0 + 0.04) / 4))
    assert stats.tail_counts == {0.1: 3, 0.4: 2}
    assert stats.mean_sq_norm == pytest.approx(1.05)
    assert stats.sq_norm_std_error == pytest.approx(np.std([0.5, 1.5, 1.0, 1.2], ddof=1) / 2)


class FixedBudget(val.MomentBudget):
    def bound(self, p):
        return 0.25


def test_strong_jl_bound_formula():
    budget = val.MomentBudget(0.5, 0.01)
    assert budget.bound(2.0) == pytest.approx(0.5 / math.e * math.sqrt(2 / math.log(100)), rel=1e-15)


def test_strong_jl_boundary_inclusive():
    budget = FixedBudget(0.5, 0.01, p_grid=(2.0,), slack=1.0)
    at_bound = val.TrialStatistics(1, {2.0: 0.0625}, {}, 1.25, 1.5625)
    assert at_bound.moment_estimates[2.0] == 0.25
    assert val.strong_jl_check(at_bound, budget).passed
    above = val.TrialStatistics(1, {2.0: 0.0625 * (1 + 1e-12)}, {}, 1.25, 1.5625)
    assert not val.strong_jl_check(above, budget).passed
    assert val.strong_jl_check(val.TrialStatistics(1, {2.0: 0.0}, {}, 1.0, 1.0), budget).passed


def test_strong_jl_report_lists_margins():
    stats = val.TrialStatistics(1, {2.0: 1.0, 4.0: 1.0}, {}, 1.0, 1.0)
    report = val.strong_jl_check(stats, val.MomentBudget(0.5, 0.01, p_grid=(2.0, 4.0)))
    assert not report.passed
    assert [r["p"] for r in report.rows] == [2.0, 4.0]
    assert all(r["margin"] < 0 for r in report.rows)
    with pytest.raises(InputError):
        val.strong_jl_check(val.TrialStatistics(1, {2.0: 0.0}, {}, 1.0, 1.0),
                            val.MomentBudget(0.5, 0.01, p_grid=(4.0,)))


def test_moment_budget_validation():
    assert val.MomentBudget(0.5, 0.01).p_grid == (2.0, 4.0)
    assert val.MomentBudget(0.5, 1e-4).p_grid == (2.0, 4.0, 8.0)
    with pytest.raises(ConfigError):
        val.MomentBudget(0.5, 0.5)  # log 2 < 2
    with pytest.raises(ConfigError):
        val.MomentBudget(0.5, 0.01, p_grid=(8.0,))
    with pytest.raises(ConfigError):
        val.MomentBudget(0.0, 0.01)
    with pytest.raises(ConfigError):
        val.MomentBudget(0.5, 0.01, slack=0.5)


def test_dense_rows_calibrated_row_count_passes():
    eps, delta = 0.5, 0.01
    m = val.dense_rows_row_count(eps, delta, 2, DENSE_ROWS_K)
    budget = val.MomentBudget(eps, delta)
    stats = val.estimate_moments(SketchConfig("dense_rows", (16, 16), m, seed=3), unit_factors((16, 16)),
                                 p_grid=budget.p_grid, trials=4000)
    assert val.strong_jl_check(stats, budget).passed


def test_dense_rows_gaussian_second_moment():
    m = 64
    stats = val.estimate_moments(SketchConfig("dense_rows", (32,), m, entry_kind="gaussian"),
                                 unit_factors((32,)), p_grid=(2.0,), trials=20_000)
    assert stats.moment_estimates[2.0] == pytest.approx(math.sqrt(2 / m), rel=0.1)


@pytest.mark.parametrize("family", FAMILIES)
def test_tail_rate_shrinks_with_rows(family):
    f = unit_factors((8, 8), seed=5)
    small = val.failure_rate(SketchConfig(family, (8, 8), 16, seed=1), f, 0.5, trials=2000)
    large = val.failure_rate(SketchConfig(family, (8, 8), 64, seed=1), f, 0.5, trials=2000)
    assert large.interval[0] <= small.interval[1]
    assert large.rate <= small.rate


def test_wilson_interval_reference_values():
    # reference values from the closed-form score interval
    lo, hi = val.wilson_interval(0, 10_000)
    assert lo == 0.0 and hi < 5e-4
    lo, hi = val.wilson_interval(50, 100)
    assert lo == pytest.approx(0.4038, abs=1e-4) and hi == pytest.approx(0.5962, abs=1e-4)
    assert val.wilson_interval(0, 0) == (0.0, 1.0)


def test_rate_estimate_ordering():
    a, b = val.RateEstimate(10, 1000), val.RateEstimate(100, 1000)
    assert a.strictly_below(b) and not b.strictly_below(a)
    assert not val.RateEstimate(10, 1000).strictly_below(val.RateEstimate(12, 1000))


def test_adversarial_vector():
    f = val.adversarial_vector(2, 2)
    np.testing.assert_allclose(np.kron(*f), [0.5, 0.5, 0.5, 0.5])
    assert val.adversarial_vector(1, 3)[0].tolist() == [1.0]
    for d, c in itertools.product((1, 3, 16, 64), range(1, 6)):
        factors = val.adversarial_vector(d, c)
        assert len(factors) == c
        if d**c <= 2**20:
            x = np.ones(1)
            for v in factors:
                x = np.kron(x, v)
            assert np.linalg.norm(x) == pytest.approx(1.0, rel=1e-12)
        assert math.prod(np.linalg.norm(v) for v in factors) == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(InputError):
        val.adversarial_vector(0, 1)


def test_single_row_fails_almost_always():
    rate = val.failure_rate(SketchConfig("dense_rows", (16, 16), 1), val.adversarial_vector(16, 2), 0.25, 2000)
    assert rate.rate > 0.7


def test_lower_bound_experiment_order_effect():
    report = val.lower_bound_experiment([64, 256], d=16, c=2, epsilon=0.25, trials=10_000, seed=1)
    assert report.passed
    checks = report.metrics["checks"]
    assert checks["higher_order_fails_more"]["64"]
    assert all(checks["nonincreasing_in_m"].values())
    assert {r["family"] for r in report.rows} == {"dense_rows_c2", "count_sketch_tensor_c2", "dense_rows_c3"}
    assert report.to_csv().splitlines()[0] == "experiment,family,m,metric,value,lower,upper"


def test_lower_bound_requires_d_at_least_c():
    with pytest.raises(InputError):
        val.lower_bound_experiment([4], d=2, c=3, epsilon=0.25, trials=10, seed=0)


def test_khintchine_examples():
    assert val.khintchine_tensor_exact([1.0, 1.0], [2]) == 8.0
    assert val.khintchine_bound([1.0, 1.0], 1) == 12.0
    a = np.zeros(9)
    a[4] = 1.0
    assert val.khintchine_tensor_exact(a, [3, 3]) == 1.0


def brute_force_fourth_moment(a, dims):
    """Direct sum over every sign assignment."""
    t = np.asarray(a).reshape(dims)
    total, count = 0.0, 0
    for signs in itertools.product(*(itertools.product((-1.0, 1.0), repeat=d) for d in dims)):
        v = t
        for s in signs:
            v = np.tensordot(np.array(s), v, axes=([0], [0]))
        total += float(v) ** 4
        count += 1
    return total / count


def test_khintchine_matches_brute_force():
    gen = np.random.default_rng(9)
    for dims in ([3, 3], [2, 2, 2], [4]):
        a = gen.standard_normal(math.prod(dims))
        assert val.khintchine_tensor_exact(a, dims) == pytest.approx(brute_force_fourth_moment(a, dims), rel=1e-12)


def test_khintchine_errors():
    with pytest.raises(InputError):
        val.khintchine_tensor_exact(np.ones(5), [2, 2])
    with pytest.raises(SizeError):
        val.khintchine_tensor_exact(np.ones(2**11 * 2**11), [2**11, 2**11])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=9, max_size=9))
def test_khintchine_never_exceeds_bound(a):
    assert val.khintchine_tensor_exact(a, [3, 3]) <= val.khintchine_bound(a, 2) * (1 + 1e-12)


def test_sketch_source_variants():
    s = build(SketchConfig("dense_rows", (4,), 2))
    assert val.sketch_source(s)(5) is s
    assert val.sketch_source(lambda t: s)(0) is s
    with pytest.raises(ConfigError):
        val.sketch_source(3)
