"""Summary statistics for Monte-Carlo shot records."""

from __future__ import annotations

import math

import numpy as np


def pearson_corr(columns: np.ndarray) -> np.ndarray:
    """Pearson correlation matrix of record columns.

    Columns with vanishing variance have undefined correlations; those
    entries are reported as NaN (the diagonal stays 1).
    """
    cols = np.asarray(columns, dtype=float)
    if cols.ndim != 2 or cols.shape[0] < 2:
        raise ValueError("need a (shots, columns) matrix with at least 2 shots")
    std = cols.std(axis=0)
    centered = cols - cols.mean(axis=0)
    denom = np.outer(std, std) * cols.shape[0]
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = centered.T @ centered / denom
    corr[np.outer(std == 0, np.ones_like(std, dtype=bool))] = np.nan
    corr[np.outer(np.ones_like(std, dtype=bool), std == 0)] = np.nan
    np.fill_diagonal(corr, 1.0)
    return corr


def bootstrap_ci(
    values: np.ndarray,
    rng: np.random.Generator,
    n_resamples: int = 1000,
    level: float = 0.95,
    statistic=np.mean,
) -> tuple[float, float]:
    """Percentile bootstrap confidence interval of a statistic of ``values``."""
    values = np.asarray(values)
    if values.shape[0] < 2:
        raise ValueError("bootstrap needs at least 2 samples")
    n = values.shape[0]
    stats = np.empty(n_resamples)
    for i in range(n_resamples):
        stats[i] = statistic(values[rng.integers(0, n, size=n)], axis=0)
    alpha = (1.0 - level) / 2.0
    return float(np.quantile(stats, alpha)), float(np.quantile(stats, 1.0 - alpha))


def bootstrap_mean_ci_batch(
    values: np.ndarray,
    rng: np.random.Generator,
    n_resamples: int = 500,
    level: float = 0.95,
) -> np.ndarray:
    """Vectorized bootstrap of per-column means; returns (2, n_columns)."""
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    idx = rng.integers(0, n, size=(n_resamples, n))
    stats = values[idx].mean(axis=1)
    alpha = (1.0 - level) / 2.0
    return np.quantile(stats, [alpha, 1.0 - alpha], axis=0)


def postselect_by_k(
    final_values: np.ndarray,
    k_counts: np.ndarray,
    rng: np.random.Generator,
    min_samples: int = 10,
    level: float = 0.95,
) -> dict[int, dict]:
    """Mean of ``final_values`` post-selected on each count ``k``.

    Bins with fewer than ``min_samples`` shots are dropped.
    """
    out: dict[int, dict] = {}
    for k in np.unique(k_counts):
        sel = final_values[k_counts == k]
        if sel.shape[0] < min_samples:
            continue
        lo, hi = bootstrap_ci(sel, rng)
        out[int(k)] = {
            "mean": float(sel.mean()),
            "n": int(sel.shape[0]),
            "ci": (lo, hi),
        }
    return out


def k_distribution(k_counts: np.ndarray, min_samples: int = 10) -> dict[int, float]:
    """Fraction of shots with exactly k nonzero outcomes (small bins dropped)."""
    total = k_counts.shape[0]
    out = {}
    for k in np.unique(k_counts):
        n = int((k_counts == k).sum())
        if n >= min_samples:
            out[int(k)] = n / total
    return out


def wilson_interval(failures: int, shots: int, z: float = 1.96) -> tuple[float, float]:
    if shots <= 0:
        raise ValueError("need at least one shot")
    p = failures / shots
    mid = (p + z * z / (2 * shots)) / (1 + z * z / shots)
    half = z * math.sqrt(p * (1 - p) / shots + z * z / (4 * shots * shots)) / (1 + z * z / shots)
    return (max(0.0, mid - half), min(1.0, mid + half))
