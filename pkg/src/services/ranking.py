"""Preference-criterion ranking over uncovered objectives (maximisation)."""
from __future__ import annotations

from typing import Collection, List, Sequence

import numpy as np

from .types import EvaluatedTestCase, objectives


def dominates(a: Sequence[float], b: Sequence[float], scope: Collection[int]) -> bool:
    idx = list(objectives(scope))
    fa = np.asarray(a, dtype=float)[idx]
    fb = np.asarray(b, dtype=float)[idx]
    return bool(np.all(fa >= fb) and np.any(fa > fb))


def fitness_matrix(population: Sequence[EvaluatedTestCase]) -> np.ndarray:
    return np.stack([t.fitness for t in population]) if population else np.zeros((0, 0))


def non_dominated_fronts(f: np.ndarray) -> List[List[int]]:
    """Fast non-dominated sorting on the rows of ``f`` (already restricted to the scope)."""
    n = f.shape[0]
    if n == 0:
        return []
    ge = np.all(f[:, None, :] >= f[None, :, :], axis=2)
    gt = np.any(f[:, None, :] > f[None, :, :], axis=2)
    dom = ge & gt                       # dom[p, q]: p dominates q
    counts = dom.sum(axis=0)            # how many rows dominate q
    fronts: List[List[int]] = []
    current = [int(q) for q in np.flatnonzero(counts == 0)]
    while current:
        fronts.append(current)
        nxt = []
        for p in current:
            for q in np.flatnonzero(dom[p]):
                counts[q] -= 1
                if counts[q] == 0:
                    nxt.append(int(q))
        current = sorted(nxt)
    return fronts


def preference_front(f: np.ndarray, scope: Sequence[int]) -> List[int]:
    """For each objective in scope, the row with the highest value on it.

    Ties go to the larger sum over the scope, then to the earlier row.
    """
    sums = f[:, scope].sum(axis=1)
    order = np.arange(f.shape[0])
    front: List[int] = []
    for u in scope:
        # lexsort keys: last key is primary
        best = int(np.lexsort((order, -sums, -f[:, u]))[0])
        if best not in front:
            front.append(best)
    return front


def preference_sort(population: Sequence[EvaluatedTestCase], uncovered: Collection[int]) -> List[List[int]]:
    """Front 0 holds the best test for every uncovered objective; the rest are
    ranked by non-dominated sorting restricted to the uncovered objectives.
    Fronts are lists of indices into ``population``.
    """
    scope = list(objectives(uncovered))
    f = fitness_matrix(population)
    first = preference_front(f, scope)
    rest = np.array([i for i in range(len(population)) if i not in set(first)], dtype=int)
    fronts = [first]
    if len(rest):
        for front in non_dominated_fronts(f[np.ix_(rest, scope)]):
            fronts.append([int(rest[i]) for i in front])
    return fronts


def crowding_distance(f: np.ndarray, scope: Collection[int]) -> np.ndarray:
    """NSGA-II crowding distance of the rows of ``f`` over the objectives in ``scope``.

    Fronts of one or two rows are all boundary (infinite). The extremes of every objective
    are boundary, flat ones included; flat objectives add nothing to interior rows.
    """
    n = f.shape[0]
    dist = np.zeros(n)
    if n <= 2:
        dist[:] = np.inf
        return dist
    for m in objectives(scope):
        col = f[:, m]
        order = np.argsort(col, kind="stable")
        lo, hi = col[order[0]], col[order[-1]]
        dist[order[0]] = dist[order[-1]] = np.inf
        if hi == lo:
            continue
        gaps = (col[order[2:]] - col[order[:-2]]) / (hi - lo)
        dist[order[1:-1]] += gaps
    return dist
