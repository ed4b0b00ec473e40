from __future__ import annotations

from typing import List

import numpy as np

from src.services.ranking import crowding_distance, dominates, preference_sort
from src.services.types import EvaluatedTestCase, GroundTruth, ImageCharacteristics, Prediction


def population_of(f: np.ndarray) -> List[EvaluatedTestCase]:
    k = f.shape[1]
    pts = np.tile([50.0, 50.0], (k, 1))
    truth = GroundTruth(pts, 10.0, 10.0)
    return [
        EvaluatedTestCase(ImageCharacteristics(float(i), 0.0, 0.0, 0), truth, Prediction(pts), row)
        for i, row in enumerate(f)
    ]


def brute_dominates(a, b, scope) -> bool:
    better = False
    for i in scope:
        if a[i] < b[i]:
            return False
        if a[i] > b[i]:
            better = True
    return better


def brute_fronts(f: np.ndarray, scope) -> List[set]:
    first = []
    for u in sorted(scope):
        best = None
        for i in range(len(f)):
            key = (f[i, u], sum(f[i, j] for j in scope), -i)
            if best is None or key > best[0]:
                best = (key, i)
        if best[1] not in first:
            first.append(best[1])
    fronts = [set(first)]
    remaining = [i for i in range(len(f)) if i not in first]
    while remaining:
        front = {i for i in remaining if not any(brute_dominates(f[j], f[i], scope) for j in remaining)}
        fronts.append(front)
        remaining = [i for i in remaining if i not in front]
    return fronts


def test_dominates_examples():
    assert not dominates([0.3, 0.1], [0.3, 0.1], {0, 1})
    assert dominates([0.3, 0.1], [0.2, 0.1], {0, 1})
    assert not dominates([0.3, 0.0], [0.2, 0.1], {0, 1})
    # only the scope counts
    assert dominates([0.3, 0.0], [0.2, 0.1], {0})


def test_dominates_matches_definition():
    rng = np.random.default_rng(3)
    for _ in range(200):
        a = rng.integers(0, 3, 5) / 4
        b = rng.integers(0, 3, 5) / 4
        scope = set(rng.choice(5, size=rng.integers(1, 6), replace=False).tolist())
        assert dominates(a, b, scope) == brute_dominates(a, b, scope)


def test_preference_sort_matches_brute_force():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        n = int(rng.integers(1, 9))
        k = int(rng.integers(1, 4))
        # coarse grid so ties are common
        f = rng.integers(0, 4, size=(n, k)) / 4
        scope = sorted(set(rng.choice(k, size=rng.integers(1, k + 1), replace=False).tolist()))
        got = [set(front) for front in preference_sort(population_of(f), scope)]
        assert got == brute_fronts(f, scope)


def test_preference_sort_single_objective_is_total_order():
    f = np.array([[0.3], [0.9], [0.1], [0.5], [0.7]])
    fronts = preference_sort(population_of(f), {0})
    assert fronts == [[1], [4], [3], [0], [2]]


def test_preference_sort_identical_tests():
    f = np.tile([0.2, 0.4, 0.1], (6, 1))
    fronts = preference_sort(population_of(f), {0, 1, 2})
    assert fronts[0] == [0]
    assert sorted(fronts[1]) == [1, 2, 3, 4, 5]
    assert len(fronts) == 2


def test_preference_front_survives_rescaling():
    rng = np.random.default_rng(5)
    f = rng.random((10, 4)) * 0.5
    scope = [0, 2, 3]
    a = preference_sort(population_of(f), scope)[0]
    b = preference_sort(population_of(f * 1.9), scope)[0]
    assert a == b
    for u in scope:
        assert any(f[i, u] == f[:, u].max() for i in a)


def brute_crowding(f: np.ndarray, scope) -> np.ndarray:
    n = len(f)
    d = np.zeros(n)
    if n <= 2:
        return np.full(n, np.inf)
    for m in scope:
        order = sorted(range(n), key=lambda i: (f[i, m], i))
        lo, hi = f[order[0], m], f[order[-1], m]
        d[order[0]] = d[order[-1]] = np.inf
        if hi == lo:
            continue
        for j in range(1, n - 1):
            d[order[j]] += (f[order[j + 1], m] - f[order[j - 1], m]) / (hi - lo)
    return d


def test_crowding_examples():
    assert np.all(np.isinf(crowding_distance(np.array([[0.1, 0.2], [0.3, 0.4]]), {0, 1})))
    d = crowding_distance(np.array([[0.0], [0.5], [1.0]]), {0})
    assert np.isinf(d[0]) and np.isinf(d[2])
    assert d[1] == 1.0
    flat = crowding_distance(np.full((4, 2), 0.2), {0, 1})
    assert np.isinf(flat[[0, 3]]).all()
    assert flat[1] == 0.0 and flat[2] == 0.0


def test_crowding_matches_definition():
    rng = np.random.default_rng(8)
    for _ in range(300):
        n = int(rng.integers(1, 7))
        f = rng.random((n, 3))
        scope = [0, 2]
        np.testing.assert_allclose(crowding_distance(f, scope), brute_crowding(f, scope))
