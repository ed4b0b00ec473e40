from __future__ import annotations

import math
from typing import List

import numpy as np
import pytest

from src.models import Algorithm
from src.services.data import apply_overrides, ic_from_record
from src.services.errors import InvalidInputError, SearchAborted
from src.services.search import (
    evaluate_all,
    generate_offspring,
    next_generation,
    run,
    run_random_search,
    run_search,
    update_archive,
)
from src.services.types import Archive, EvaluatedTestCase, GroundTruth, ImageCharacteristics, Prediction


def population_of(f: np.ndarray) -> List[EvaluatedTestCase]:
    k = f.shape[1]
    pts = np.tile([50.0, 50.0], (k, 1))
    truth = GroundTruth(pts, 10.0, 10.0)
    return [
        EvaluatedTestCase(ImageCharacteristics(float(i % 30), 0.0, 0.0, i % 10), truth, Prediction(pts), row)
        for i, row in enumerate(f)
    ]


def with_fitness(values: dict, k: int = 27, roll: float = 0.0) -> EvaluatedTestCase:
    f = np.zeros(k)
    for i, v in values.items():
        f[i] = v
    pts = np.tile([50.0, 50.0], (k, 1))
    return EvaluatedTestCase(ImageCharacteristics(roll, 0.0, 0.0, 0), GroundTruth(pts, 10.0, 10.0), Prediction(pts), f)


# ----------------------------
# archive
# ----------------------------
def test_update_archive_adds_qualifying_objectives():
    archive = update_archive(Archive(epsilon=0.05), [with_fitness({4: 0.06, 5: 0.01})])
    assert list(archive.entries) == [4]


def test_update_archive_keeps_the_maximum_and_first_seen_ties():
    first = with_fitness({4: 0.10}, roll=1.0)
    archive = update_archive(Archive(epsilon=0.05), [first])
    archive = update_archive(archive, [with_fitness({4: 0.07}, roll=2.0)])
    assert archive.entries[4] is first
    archive = update_archive(archive, [with_fitness({4: 0.10}, roll=3.0)])
    assert archive.entries[4] is first
    better = with_fitness({4: 0.2}, roll=4.0)
    assert update_archive(archive, [better]).entries[4] is better


# ----------------------------
# generations
# ----------------------------
@pytest.mark.parametrize(
    "algorithm,uncovered,expected",
    [
        (Algorithm.MOSA, 27, 27),
        (Algorithm.MOSA_PLUS, 3, 27),
        (Algorithm.FITEST, 3, 4),
        (Algorithm.FITEST, 20, 20),
        (Algorithm.FITEST_PLUS, 7, 8),
        (Algorithm.FITEST, 1, 4),
    ],
)
def test_next_generation_size(default_config, algorithm, uncovered, expected):
    rng = np.random.default_rng(0)
    combined = population_of(rng.random((54, 27)) * 0.04)
    cfg = apply_overrides(default_config, algorithm=algorithm.value).search
    chosen = next_generation(combined, set(range(uncovered)), algorithm, cfg, 27)
    assert len(chosen) == expected
    assert len({id(t) for t in chosen}) == expected


def test_next_generation_keeps_the_best_per_uncovered_objective(default_config):
    rng = np.random.default_rng(1)
    f = rng.random((54, 27)) * 0.04
    combined = population_of(f)
    uncovered = {0, 5, 9}
    chosen = next_generation(combined, uncovered, Algorithm.FITEST, default_config.search, 27)
    for u in uncovered:
        assert max(t.fitness[u] for t in chosen) == f[:, u].max()


def test_offspring_without_variation_copies_tournament_winners(default_config):
    cfg = apply_overrides(default_config, operators={"crossover_probability": 0.0, "mutation_probability": 0.0}).search
    population = population_of(np.random.default_rng(2).random((27, 27)) * 0.04)
    children = generate_offspring(population, set(range(27)), cfg, np.random.default_rng(3))
    assert len(children) == 27
    parents = {t.ic for t in population}
    assert all(c in parents for c in children)


def test_offspring_count_and_bounds(default_config):
    cfg = default_config.search
    space = cfg.space()
    population = population_of(np.random.default_rng(4).random((9, 27)) * 0.04)
    children = generate_offspring(population, {1, 2}, cfg, np.random.default_rng(5))
    assert len(children) == 9
    assert all(space.contains(c) for c in children)


def test_single_member_population_is_mutated_only(default_config):
    cfg = default_config.search
    population = population_of(np.zeros((1, 27)))
    children = generate_offspring(population, {0}, cfg, np.random.default_rng(6))
    assert len(children) == 1


# ----------------------------
# runs
# ----------------------------
def test_budget_equal_to_population_is_one_round(default_config, sut):
    cfg = apply_overrides(default_config, evaluation_budget=27, seed=11).search
    archive, trace = run_search(cfg, sut)
    assert len(trace.generations) == 1
    assert trace.evaluations_used == 27
    tests = evaluate_all(sut, [ic_from_record(r.ic) for r in trace.evaluations])
    expected = update_archive(Archive(epsilon=cfg.epsilon), tests)
    assert list(archive.entries) == list(expected.entries)
    for i in archive.entries:
        assert archive.entries[i].ic == expected.entries[i].ic


def test_run_invariants(small_config, sut):
    for algorithm in ("mosa", "mosa+", "fitest", "fitest+"):
        cfg = apply_overrides(small_config, algorithm=algorithm).search
        archive, trace = run_search(cfg, sut)
        gens = trace.generations
        assert trace.evaluations_used <= cfg.evaluation_budget
        assert len(trace.evaluations) == trace.evaluations_used
        assert trace.covered_history == sorted(trace.covered_history)
        assert all(g.covered + g.uncovered == 27 for g in gens)
        assert [g.evaluations for g in gens] == sorted(g.evaluations for g in gens)
        assert all(cfg.space().contains(ic_from_record(r.ic)) for r in trace.evaluations)
        if Algorithm(algorithm).shrinking:
            for g in gens[1:]:
                if g.uncovered:
                    assert g.population_size == max(4, 2 * math.ceil(g.uncovered / 2))
        else:
            assert all(g.population_size == 27 for g in gens)


def test_archive_equals_fold_over_trace(small_config, sut):
    archive, trace = run_search(small_config.search, sut)
    eps = small_config.search.epsilon
    best = {}
    for rec in trace.evaluations:
        for i, v in enumerate(rec.fitness):
            if v >= eps and (i not in best or v > best[i][0]):
                best[i] = (v, rec.ic)
    assert sorted(best) == list(archive.entries)
    for i, (v, ic) in best.items():
        assert archive.best_fitness(i) == v
        assert archive.entries[i].ic == ic_from_record(ic)


def test_runs_are_deterministic(small_config, sut):
    a_archive, a_trace = run_search(small_config.search, sut)
    b_archive, b_trace = run_search(small_config.search, sut)
    assert a_trace.records == b_trace.records
    assert list(a_archive.entries) == list(b_archive.entries)


def test_parallel_evaluation_does_not_change_results(small_config, sut):
    serial = run_search(small_config.search, sut)[1].records
    threaded = run_search(apply_overrides(small_config, jobs=4).search, sut)[1].records
    assert serial == threaded


def test_adaptive_variant_differs_only_through_crossover(small_config, sut):
    no_cross = {"crossover_probability": 0.0}
    mosa = run_search(apply_overrides(small_config, algorithm="mosa", operators=no_cross).search, sut)[1]
    plus = run_search(apply_overrides(small_config, algorithm="mosa+", operators=no_cross).search, sut)[1]
    assert mosa.records == plus.records

    mosa = run_search(apply_overrides(small_config, algorithm="mosa").search, sut)[1]
    plus = run_search(apply_overrides(small_config, algorithm="mosa+").search, sut)[1]
    first_gen = [r for r in mosa.records if r.kind == "evaluation" and r.generation == 0]
    assert first_gen == [r for r in plus.records if r.kind == "evaluation" and r.generation == 0]


def test_random_search_iterations(default_config, sut):
    cfg = apply_overrides(default_config, algorithm="rs", evaluation_budget=27 * 5, seed=2).search
    archive, trace = run_random_search(cfg, sut)
    assert len(trace.generations) == 5
    assert all(g.population_size == 27 for g in trace.generations)
    assert trace.covered_history == sorted(trace.covered_history)
    assert run(cfg, sut)[1].records == trace.records
    with pytest.raises(InvalidInputError):
        run_search(cfg, sut)


class FailingSut:
    def __init__(self, inner, fail_after: int):
        self.inner = inner
        self.k = inner.k
        self.calls = 0
        self.fail_after = fail_after

    def evaluate(self, ic):
        self.calls += 1
        if self.calls > self.fail_after:
            raise RuntimeError("simulator crashed")
        return self.inner.evaluate(ic)

    def close(self):
        pass


def test_sut_failure_aborts_with_partial_results(small_config, sut):
    with pytest.raises(SearchAborted) as exc:
        run_search(small_config.search, FailingSut(sut, fail_after=60))
    partial = exc.value.trace
    assert len(partial.generations) == 2
    assert partial.evaluations_used == 54
    assert isinstance(exc.value.archive, Archive)
