"""Nonparametric comparisons used in the reports.

Both rank tests enumerate the exact null distribution for small samples and fall
back to a tie-corrected normal approximation with continuity correction otherwise.
"""
from __future__ import annotations

import math
from bisect import bisect_left
from itertools import product
from typing import Sequence, Tuple

import numpy as np
from scipy.stats import norm, rankdata

from .errors import InvalidInputError, UndefinedTestError

MW_EXACT_MAX_TOTAL = 16
WILCOXON_EXACT_MAX = 12
ALPHA = 0.01
_EPS = 1e-9


def _sample(values: Sequence[float], name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0:
        raise InvalidInputError(f"{name} must not be empty")
    return arr


def _u_distribution(n: int, m: int) -> np.ndarray:
    """Counts of each U value 0..n*m over all C(n+m, n) rankings without ties."""
    # ways[i][j] is the count array for i x-values and j y-values
    ways = [[None] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        for j in range(m + 1):
            if i == 0 or j == 0:
                arr = np.zeros(i * j + 1, dtype=np.int64)
                arr[0] = 1
            else:
                arr = np.zeros(i * j + 1, dtype=np.int64)
                # largest observation is an x (adds j to U) or a y
                a = ways[i - 1][j]
                arr[j:j + a.size] += a
                b = ways[i][j - 1]
                arr[:b.size] += b
            ways[i][j] = arr
    return ways[n][m]


def mann_whitney_u(sample_a: Sequence[float], sample_b: Sequence[float]) -> Tuple[float, float]:
    """U statistic of ``sample_a`` and the two-sided p-value."""
    a = _sample(sample_a, "sample_a")
    b = _sample(sample_b, "sample_b")
    n, m = a.size, b.size
    ranks = rankdata(np.concatenate([a, b]))
    u = float(ranks[:n].sum() - n * (n + 1) / 2.0)
    ties = ranks.size != np.unique(ranks).size

    if n + m <= MW_EXACT_MAX_TOTAL and not ties:
        counts = _u_distribution(n, m)
        total = counts.sum()
        k = int(round(u))
        lower = counts[: k + 1].sum() / total
        upper = counts[k:].sum() / total
        return u, float(min(1.0, 2.0 * min(lower, upper)))

    mu = n * m / 2.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    big_n = n + m
    tie_term = float(np.sum(tie_counts**3 - tie_counts)) / (big_n * (big_n - 1))
    var = n * m / 12.0 * ((big_n + 1) - tie_term)
    if var <= 0:
        return u, 1.0
    z = max(0.0, abs(u - mu) - 0.5) / math.sqrt(var)
    return u, float(min(1.0, 2.0 * norm.sf(z)))


def vargha_delaney(sample_a: Sequence[float], sample_b: Sequence[float]) -> float:
    """Probability that a value from A beats one from B, ties counting half."""
    a = _sample(sample_a, "sample_a")
    b = _sample(sample_b, "sample_b")
    greater = np.count_nonzero(a[:, None] > b[None, :])
    equal = np.count_nonzero(a[:, None] == b[None, :])
    return (greater + 0.5 * equal) / (a.size * b.size)


def effect_magnitude(a12: float) -> str:
    levels = [0.147, 0.33, 0.474]
    labels = ["negligible", "small", "medium", "large"]
    return labels[bisect_left(levels, abs(2.0 * a12 - 1.0))]


def wilcoxon_signed_rank(paired_diffs: Sequence[float]) -> Tuple[float, float]:
    """W+ (rank sum of positive differences) and the two-sided p-value."""
    d = np.asarray(paired_diffs, dtype=float).ravel()
    d = d[d != 0.0]
    if d.size == 0:
        raise UndefinedTestError("Wilcoxon signed-rank test is undefined when all differences are zero")
    ranks = rankdata(np.abs(d))
    w = float(ranks[d > 0].sum())
    n = d.size

    if n <= WILCOXON_EXACT_MAX:
        signs = np.array(list(product((0.0, 1.0), repeat=n)))
        dist = signs @ ranks
        lower = np.count_nonzero(dist <= w + _EPS) / dist.size
        upper = np.count_nonzero(dist >= w - _EPS) / dist.size
        return w, float(min(1.0, 2.0 * min(lower, upper)))

    mu = n * (n + 1) / 4.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(tie_counts**3 - tie_counts)) / 48.0
    if var <= 0:
        return w, 1.0
    z = max(0.0, abs(w - mu) - 0.5) / math.sqrt(var)
    return w, float(min(1.0, 2.0 * norm.sf(z)))
