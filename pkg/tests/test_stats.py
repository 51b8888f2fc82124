import numpy as np
import pytest

from bpplus import stats


def test_identical_columns_full_correlation(rng):
    col = rng.integers(0, 2, size=500).astype(float)
    corr = stats.pearson_corr(np.column_stack([col, col]))
    assert corr[0, 1] == pytest.approx(1.0)


def test_independent_coins_uncorrelated(rng):
    bits = rng.integers(0, 2, size=(100_000, 4)).astype(float)
    corr = stats.pearson_corr(bits)
    off = corr[~np.eye(4, dtype=bool)]
    assert np.abs(off).max() < 0.02


def test_degenerate_column_reported_missing(rng):
    cols = np.column_stack([np.ones(50), rng.random(50)])
    corr = stats.pearson_corr(cols)
    assert np.isnan(corr[0, 1])
    assert corr[0, 0] == 1.0


def test_anticorrelation(rng):
    col = rng.integers(0, 2, size=2000).astype(float)
    corr = stats.pearson_corr(np.column_stack([col, 1 - col]))
    assert corr[0, 1] == pytest.approx(-1.0)


def test_bootstrap_constant_zero_width(rng):
    lo, hi = stats.bootstrap_ci(np.full(100, 0.7), rng)
    assert lo == hi == pytest.approx(0.7)


def test_bootstrap_contains_mean(rng):
    values = rng.normal(loc=2.0, size=4000)
    lo, hi = stats.bootstrap_ci(values, rng)
    assert lo < 2.0 < hi
    assert hi - lo < 0.2


def test_bootstrap_batch_matches_single(rng):
    values = rng.normal(size=(3000, 2))
    batch = stats.bootstrap_mean_ci_batch(values, np.random.default_rng(0), n_resamples=2000)
    lo, hi = stats.bootstrap_ci(values[:, 0], np.random.default_rng(1), n_resamples=2000)
    assert batch[0, 0] == pytest.approx(lo, abs=0.05)
    assert batch[1, 0] == pytest.approx(hi, abs=0.05)


def test_postselect_drops_small_bins(rng):
    k = np.array([0] * 50 + [1] * 9 + [2] * 41)
    vals = np.concatenate([np.ones(50), np.zeros(9), -np.ones(41)])
    out = stats.postselect_by_k(vals, k, rng)
    assert set(out) == {0, 2}  # the 9-sample bin is dropped
    assert out[0]["mean"] == pytest.approx(1.0)
    assert out[2]["n"] == 41


def test_k_distribution(rng):
    k = np.array([0] * 80 + [1] * 15 + [3] * 5)
    dist = stats.k_distribution(k, min_samples=10)
    assert dist == {0: 0.80, 1: 0.15}


def test_wilson_interval_basics():
    lo, hi = stats.wilson_interval(0, 1000)
    assert lo == 0.0 and 0 < hi < 0.01
    lo, hi = stats.wilson_interval(500, 1000)
    assert lo < 0.5 < hi
    with pytest.raises(ValueError):
        stats.wilson_interval(1, 0)
