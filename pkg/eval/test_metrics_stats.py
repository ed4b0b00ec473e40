from __future__ import annotations

from itertools import combinations, product

import numpy as np
import pytest
from scipy.stats import rankdata

from src.services.errors import InvalidInputError, UndefinedTestError
from src.services.metrics import effectiveness_score, misprediction_severity
from src.services.stats import effect_magnitude, mann_whitney_u, vargha_delaney, wilcoxon_signed_rank
from src.services.types import Archive, EvaluatedTestCase, GroundTruth, ImageCharacteristics, Prediction


def case(fitness) -> EvaluatedTestCase:
    f = np.asarray(fitness, dtype=float)
    pts = np.tile([10.0, 10.0], (f.size, 1))
    return EvaluatedTestCase(ImageCharacteristics(0.0, 0.0, 0.0, 0), GroundTruth(pts, 5.0, 5.0), Prediction(pts), f)


# ----------------------------
# metrics
# ----------------------------
def test_effectiveness_score():
    t = case([0.1, 0.0, 0.3, 0.0])
    assert effectiveness_score(Archive(0.05, {0: t, 2: t}), 4) == 0.5
    assert effectiveness_score(Archive(0.05), 27) == 0.0
    entries = {i: case(np.full(27, 0.2)) for i in range(27)}
    assert effectiveness_score(Archive(0.05, entries), 27) == 1.0


def test_misprediction_severity_takes_the_max_over_archived_tests():
    a = case([0.06, 0.02, 0.0])
    b = case([0.01, 0.09, 0.0])
    ms = misprediction_severity(Archive(0.05, {0: a, 1: b}), 3)
    np.testing.assert_allclose(ms, [0.06, 0.09, 0.0])
    assert np.all(ms[[0, 1]] >= 0.05)

    extra = case([0.0, 0.0, 0.04])
    np.testing.assert_allclose(misprediction_severity(Archive(0.05, {0: a}), 3, [extra], include_all=True), [0.06, 0.02, 0.04])


# ----------------------------
# Mann-Whitney
# ----------------------------
def brute_mw_p(a, b) -> float:
    pooled = np.concatenate([a, b])
    n = len(a)
    ranks = rankdata(pooled)
    observed = ranks[:n].sum() - n * (n + 1) / 2
    us = []
    for idx in combinations(range(len(pooled)), n):
        us.append(ranks[list(idx)].sum() - n * (n + 1) / 2)
    us = np.array(us)
    lower = np.count_nonzero(us <= observed) / us.size
    upper = np.count_nonzero(us >= observed) / us.size
    return min(1.0, 2 * min(lower, upper))


def test_mann_whitney_exact_matches_enumeration():
    rng = np.random.default_rng(21)
    for _ in range(500):
        n = int(rng.integers(1, 9))
        m = int(rng.integers(1, 9))
        if n + m > 16:
            continue
        a = rng.permutation(n + m)[:n] + rng.random(n) * 0.1
        b = rng.random(m) * (n + m)
        pooled = np.concatenate([a, b])
        if np.unique(pooled).size != pooled.size:
            continue
        _, p = mann_whitney_u(a, b)
        assert abs(p - brute_mw_p(a, b)) <= 1e-12


def test_mann_whitney_examples():
    u, p = mann_whitney_u([1, 2, 3], [4, 5, 6])
    assert u == 0.0
    assert p == pytest.approx(0.1)
    u, p = mann_whitney_u([0.5] * 5, [0.5] * 5)
    assert u == 12.5 and p == 1.0
    with pytest.raises(InvalidInputError):
        mann_whitney_u([], [1.0])


def test_mann_whitney_large_samples_separate():
    rng = np.random.default_rng(4)
    _, p = mann_whitney_u(rng.normal(0, 1, 30), rng.normal(2, 1, 30))
    assert p < 0.001
    _, p = mann_whitney_u(rng.normal(0, 1, 30), rng.normal(0, 1, 30))
    assert 0.0 <= p <= 1.0


# ----------------------------
# Vargha-Delaney
# ----------------------------
def test_a12_identities():
    rng = np.random.default_rng(6)
    for _ in range(200):
        a = rng.integers(0, 5, rng.integers(1, 10)).astype(float)
        b = rng.integers(0, 5, rng.integers(1, 10)).astype(float)
        assert abs(vargha_delaney(a, b) + vargha_delaney(b, a) - 1.0) <= 1e-15
        assert vargha_delaney(a, a) == 0.5
    assert vargha_delaney([3, 4], [1, 2]) == 1.0


@pytest.mark.parametrize(
    "a12,label",
    [(0.5, "negligible"), (0.57, "negligible"), (0.6, "small"), (0.3, "medium"), (0.84, "large"), (0.0, "large")],
)
def test_effect_magnitude(a12, label):
    assert effect_magnitude(a12) == label


# ----------------------------
# Wilcoxon
# ----------------------------
def brute_wilcoxon_p(d) -> float:
    d = np.asarray(d, dtype=float)
    d = d[d != 0]
    ranks = rankdata(np.abs(d))
    w = ranks[d > 0].sum()
    dist = np.array([np.dot(s, ranks) for s in product((0, 1), repeat=d.size)])
    lower = np.count_nonzero(dist <= w + 1e-9) / dist.size
    upper = np.count_nonzero(dist >= w - 1e-9) / dist.size
    return min(1.0, 2 * min(lower, upper))


def test_wilcoxon_exact_matches_enumeration():
    rng = np.random.default_rng(22)
    for _ in range(500):
        n = int(rng.integers(1, 13))
        d = rng.integers(-4, 5, n) / 2
        if not d.any():
            continue
        _, p = wilcoxon_signed_rank(d)
        assert abs(p - brute_wilcoxon_p(d)) <= 1e-12


def test_wilcoxon_examples():
    w, p = wilcoxon_signed_rank([1, 2, 3, 4, 5])
    assert w == 15.0
    assert p == pytest.approx(2 / 32)
    with pytest.raises(UndefinedTestError):
        wilcoxon_signed_rank([0.0, 0.0, 0.0])


def test_wilcoxon_normal_branch():
    rng = np.random.default_rng(3)
    _, p = wilcoxon_signed_rank(rng.normal(1.0, 0.5, 27))
    assert p < 0.001
    _, p = wilcoxon_signed_rank(np.tile([1.0, -1.0], 14))
    assert p == 1.0
