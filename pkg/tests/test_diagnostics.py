import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from fvlab.diagnostics import (SummaryStats, Verdict, kolmogorov_q, ks_two_sample, merge_stats,
                               perpetuity_test, tail_fit)
from fvlab.fleming_viot import alpha_pairs
from fvlab.paths import PathConfig
from fvlab.sampling import RngStream, sample_alpha_sq
from fvlab.specfun import DomainError, i_of_nu


# summary statistics


def rel_close(a, b, tol=1e-12):
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def test_merge_identity():
    s = SummaryStats.from_values([1.0, 2.0, 4.0])
    assert merge_stats(SummaryStats(), s) == s
    assert merge_stats(s, SummaryStats()) == s


def test_merge_halves_equals_whole():
    x = RngStream(1).normal(10_001) * 3 + 7
    whole = SummaryStats.from_values(x)
    merged = merge_stats(SummaryStats.from_values(x[:4000]), SummaryStats.from_values(x[4000:]))
    assert merged.count == whole.count
    assert rel_close(merged.mean, whole.mean) and rel_close(merged.m2, whole.m2)
    assert merged.min == whole.min and merged.max == whole.max
    assert rel_close(whole.variance, np.var(x, ddof=1))


def test_merge_shard_permutations():
    x = RngStream(2).normal(16 * 500) * 2 + 1
    shards = [SummaryStats.from_values(c) for c in np.split(x, 16)]
    ref = SummaryStats.from_values(x)
    rng = np.random.default_rng(0)
    for _ in range(50):
        acc = SummaryStats()
        for i in rng.permutation(16):
            acc = merge_stats(acc, shards[i])
        assert acc.count == ref.count
        assert rel_close(acc.mean, ref.mean) and rel_close(acc.m2, ref.m2)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40),
       st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40),
       st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40))
@settings(max_examples=200)
def test_merge_associative_and_commutative(a, b, c):
    sa, sb, sc = (SummaryStats.from_values(v) for v in (a, b, c))
    left = merge_stats(merge_stats(sa, sb), sc)
    right = merge_stats(sa, merge_stats(sb, sc))
    swapped = merge_stats(sc, merge_stats(sb, sa))
    assert left.count == right.count == len(a) + len(b) + len(c)
    scale = max(1.0, max(map(abs, a + b + c)))
    for other in (right, swapped):
        assert abs(left.mean - other.mean) <= 1e-12 * scale
        assert abs(left.m2 - other.m2) <= 1e-9 * scale * scale
        assert left.min == other.min and left.max == other.max


# perpetuity test


def test_perpetuity_constant_half():
    r = perpetuity_test([(0.5, 1.0)] * 100)
    assert r.elog_a == pytest.approx(-math.log(2)) and r.verdict is Verdict.CONVERGES
    assert r.partial_sum == pytest.approx(2.0, rel=1e-12)


def test_perpetuity_constant_two():
    assert perpetuity_test([(2.0, 1.0)] * 100).verdict is Verdict.DIVERGES


def test_perpetuity_inconclusive_at_zero_mean():
    a = np.exp(RngStream(3).normal(1000) * 0.01)
    a = a / np.exp(np.mean(np.log(a)))
    assert perpetuity_test(np.column_stack([a, np.ones_like(a)])).verdict is Verdict.INCONCLUSIVE


@pytest.mark.parametrize("pairs", [[(0.0, 1.0)], [(1.0, -1.0)], [], [(math.inf, 1.0)]])
def test_perpetuity_domain(pairs):
    with pytest.raises(DomainError):
        perpetuity_test(pairs)


def test_perpetuity_on_path_pairs():
    sigma, alpha = alpha_pairs(-1.0, 20_000, PathConfig(horizon=1e4), RngStream(4))
    r = perpetuity_test(np.column_stack([alpha**2, sigma]))
    assert r.verdict is Verdict.CONVERGES
    # the log-moment of alpha^2 is 2 I(nu)
    assert abs(r.elog_a - 2 * i_of_nu(-1.0)) < 3 * r.se


@pytest.mark.parametrize("nu,verdict", [(-4, Verdict.CONVERGES), (-2, Verdict.CONVERGES),
                                        (-1, Verdict.CONVERGES), (-0.5, Verdict.CONVERGES),
                                        (0.5, Verdict.DIVERGES), (1.0, Verdict.DIVERGES),
                                        (1.5, Verdict.DIVERGES)])
def test_perpetuity_dichotomy_exact_draws(nu, verdict):
    a = sample_alpha_sq(nu, RngStream(5, int(nu * 10) + 50), 100_000)
    assert perpetuity_test(np.column_stack([a, np.ones_like(a)])).verdict is verdict


# KS


def test_ks_identical_samples():
    x = RngStream(6).normal(500)
    r = ks_two_sample(x, x)
    assert r.d == 0.0 and r.p == 1.0


def test_ks_separated_samples():
    x = RngStream(7, 0).normal(10_000)
    y = RngStream(7, 1).normal(10_000) + 3
    assert ks_two_sample(x, y).p < 1e-6


@given(st.lists(st.floats(-100, 100), min_size=1, max_size=50),
       st.lists(st.floats(-100, 100), min_size=1, max_size=50))
def test_ks_statistic_bounds_and_scipy(x, y):
    r = ks_two_sample(x, y)
    assert 0.0 <= r.d <= 1.0 and 0.0 <= r.p <= 1.0
    assert r.d == pytest.approx(stats.ks_2samp(x, y, method="asymp").statistic, abs=1e-12)


def test_ks_pvalue_close_to_scipy_asymptotic():
    x = RngStream(8, 0).normal(3000)
    y = RngStream(8, 1).normal(4000) * 1.05
    ours = ks_two_sample(x, y)
    ref = stats.ks_2samp(x, y, method="asymp")
    assert ours.p == pytest.approx(ref.pvalue, abs=0.02)


def test_kolmogorov_q_known_values():
    assert kolmogorov_q(0.0) == 1.0
    assert kolmogorov_q(1.36) == pytest.approx(0.0495, abs=5e-4)
    assert kolmogorov_q(1.63) == pytest.approx(0.0098, abs=5e-4)
    assert kolmogorov_q(1.0) == pytest.approx(stats.kstwobign.sf(1.0), abs=1e-12)


def test_ks_empty():
    with pytest.raises(DomainError):
        ks_two_sample([], [1.0])


# tail fit


def test_tail_fit_exponential():
    t = RngStream(9).uniform(100_000)
    t = -np.log(t) / 2
    fit = tail_fit(t, 0.5, 0.99)
    assert abs(fit.rate / 2 - 1) < 0.05 and fit.r_squared > 0.99


def test_tail_fit_shift_changes_intercept_only():
    t = -np.log(RngStream(10).uniform(100_000)) / 2
    a, b = tail_fit(t), tail_fit(t + 1)
    assert abs(b.rate / 2 - 1) < 0.05
    assert b.rate == pytest.approx(a.rate, rel=1e-6)
    assert b.log_intercept == pytest.approx(a.log_intercept + a.rate, rel=1e-6)


def test_tail_fit_needs_sample():
    with pytest.raises(DomainError):
        tail_fit(np.arange(10.0))


def test_tail_fit_degenerate():
    with pytest.raises(DomainError):
        tail_fit(np.ones(500))


@pytest.mark.parametrize("lo,hi", [(0.0, 0.9), (0.6, 0.5), (0.5, 1.0)])
def test_tail_fit_quantile_range(lo, hi):
    with pytest.raises(DomainError):
        tail_fit(np.arange(1.0, 501.0), lo, hi)
