"""Wilcoxon signed-rank test for paired samples."""

from __future__ import annotations

import math

import numpy as np
from scipy import stats

EXACT_MAX_N = 25


def _exact_counts(doubled_ranks: np.ndarray) -> np.ndarray:
    """Number of sign assignments giving each value of ``2 * W+``."""
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in doubled_ranks:
        r = int(r)
        counts[r:] = counts[r:] + counts[: total + 1 - r].copy()
    return counts


def wilcoxon_signed_rank(a, b) -> tuple[float, float]:
    """Two-sided Wilcoxon signed-rank test.

    Zero differences are dropped and tied magnitudes share mid-ranks. For up
    to 25 remaining pairs the p-value comes from the exact null distribution
    of ``W+`` (all ``2**n`` sign assignments, counted by dynamic programming,
    which stays exact with mid-ranks). Larger samples use the normal
    approximation with tie and continuity corrections.

    Returns
    -------
    statistic : float
        ``min(W+, W-)``.
    p_value : float
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"paired samples must be 1-D of equal length, got {a.shape} and {b.shape}")
    d = a - b
    d = d[d != 0]
    n = len(d)
    if n == 0:
        raise ValueError("no nonzero differences")
    ranks = stats.rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    stat = min(w_plus, w_minus)
    if n <= EXACT_MAX_N:
        doubled = np.rint(2 * ranks).astype(int)
        counts = _exact_counts(doubled)
        k = int(round(2 * stat))
        lower = counts[: k + 1].sum() / 2.0**n
        return stat, float(min(1.0, 2.0 * lower))
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_counts**3 - tie_counts) / 48.0
    z = (abs(w_plus - mean) - 0.5) / math.sqrt(var)
    return stat, float(min(1.0, 2.0 * stats.norm.sf(max(z, 0.0))))
