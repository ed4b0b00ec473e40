"""Many-objective test generation loop (MOSA, FITEST and their adaptive-SBX variants) plus random search.

One objective per key-point: find an input whose NE on that key-point reaches epsilon.
The archive keeps the best such test per objective; the population is ranked by the
preference criterion over the objectives still uncovered.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Collection, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.models import Algorithm, EvaluationRecord, GenerationRecord, SearchConfig

from .data import evaluation_record
from .errors import InvalidInputError, SearchAborted
from .fitness import covered_objectives
from .metrics import effectiveness_score
from .operators import adaptive_eta, initial_population, polynomial_mutation, sbx_crossover
from .ranking import crowding_distance, fitness_matrix, preference_sort
from .sut import Sut
from .types import Archive, EvaluatedTestCase, ImageCharacteristics, objectives

logger = logging.getLogger(__name__)

FITEST_MIN_POPULATION = 4


@dataclass
class SearchTrace:
    """Trace lines in write order: each generation's evaluations, then its summary line."""

    records: List[Union[EvaluationRecord, GenerationRecord]] = field(default_factory=list)

    @property
    def generations(self) -> List[GenerationRecord]:
        return [r for r in self.records if r.kind == "generation"]

    @property
    def evaluations(self) -> List[EvaluationRecord]:
        return [r for r in self.records if r.kind == "evaluation"]

    @property
    def covered_history(self) -> List[int]:
        return [g.covered for g in self.generations]

    @property
    def evaluations_used(self) -> int:
        gens = self.generations
        return gens[-1].evaluations if gens else 0

    def add_evaluations(self, generation: int, tests: Iterable[EvaluatedTestCase]) -> None:
        self.records.extend(evaluation_record(generation, t) for t in tests)

    def add_generation(self, generation: int, evaluations: int, archive: Archive, k: int,
                       population_size: int) -> GenerationRecord:
        rec = GenerationRecord(
            generation=generation,
            evaluations=evaluations,
            covered=len(archive),
            uncovered=k - len(archive),
            population_size=population_size,
            es=effectiveness_score(archive, k),
        )
        self.records.append(rec)
        return rec


# ----------------------------
# Archive
# ----------------------------
def update_archive(archive: Archive, tests: Iterable[EvaluatedTestCase],
                   epsilon: Optional[float] = None) -> Archive:
    """Keep, per objective, the qualifying test with the highest NE; earlier tests win ties."""
    eps = archive.epsilon if epsilon is None else epsilon
    entries = dict(archive.entries)
    for test in tests:
        for i in covered_objectives(test.fitness, eps):
            current = entries.get(i)
            if current is None or test.fitness[i] > current.fitness[i]:
                entries[i] = test
    return Archive(epsilon=eps, entries=entries)


def uncovered_objectives(archive: Archive, k: int) -> frozenset:
    return frozenset(range(k)) - archive.covered


# ----------------------------
# Evaluation
# ----------------------------
def evaluate_all(sut: Sut, genomes: Sequence[ImageCharacteristics], jobs: int = 1) -> List[EvaluatedTestCase]:
    """Evaluates genomes, results in submission order whatever the thread count."""
    if jobs <= 1 or len(genomes) <= 1:
        return [sut.evaluate(g) for g in genomes]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(sut.evaluate, genomes))


# ----------------------------
# Selection and variation
# ----------------------------
def rank_population(population: Sequence[EvaluatedTestCase],
                    uncovered: Collection[int]) -> Tuple[np.ndarray, np.ndarray]:
    """Front index and crowding distance (within its front) of every member."""
    n = len(population)
    scope = objectives(uncovered)
    f = fitness_matrix(population)
    rank = np.zeros(n, dtype=int)
    crowd = np.zeros(n)
    for r, front in enumerate(preference_sort(population, scope)):
        rank[front] = r
        crowd[front] = crowding_distance(f[front], scope)
    return rank, crowd


def tournament(rank: np.ndarray, crowd: np.ndarray, rng: np.random.Generator) -> int:
    i, j = (int(x) for x in rng.integers(0, rank.size, size=2))
    if rank[i] != rank[j]:
        return i if rank[i] < rank[j] else j
    return j if crowd[j] > crowd[i] else i


def generate_offspring(
    population: Sequence[EvaluatedTestCase],
    uncovered: Collection[int],
    cfg: SearchConfig,
    rng: np.random.Generator,
) -> List[ImageCharacteristics]:
    ops = cfg.operators
    space = cfg.space()
    n = len(population)
    if n == 1:
        return [polynomial_mutation(population[0].ic, ops.eta_m, ops.mutation_probability, space, rng)]

    rank, crowd = rank_population(population, uncovered)
    children: List[ImageCharacteristics] = []
    while len(children) < n:
        p1 = population[tournament(rank, crowd, rng)]
        p2 = population[tournament(rank, crowd, rng)]
        if rng.random() < ops.crossover_probability:
            eta = (
                adaptive_eta(p1.fitness, p2.fitness, uncovered, ops)
                if cfg.algorithm.adaptive
                else ops.eta_c
            )
            c1, c2 = sbx_crossover(p1.ic, p2.ic, eta, space, rng)
        else:
            c1, c2 = p1.ic, p2.ic
        children.append(polynomial_mutation(c1, ops.eta_m, ops.mutation_probability, space, rng))
        if len(children) < n:
            children.append(polynomial_mutation(c2, ops.eta_m, ops.mutation_probability, space, rng))
    return children


def population_target(algorithm: Algorithm, n_uncovered: int, base_size: int) -> int:
    if algorithm.shrinking:
        return max(FITEST_MIN_POPULATION, 2 * math.ceil(n_uncovered / 2))
    return base_size


def next_generation(
    combined: Sequence[EvaluatedTestCase],
    uncovered: Collection[int],
    algorithm: Algorithm,
    cfg: SearchConfig,
    k: int,
) -> List[EvaluatedTestCase]:
    """Fill by preference fronts; the front that overflows is cut by crowding distance."""
    size = min(population_target(algorithm, len(uncovered), cfg.population_for(k)), len(combined))
    scope = objectives(uncovered)
    f = fitness_matrix(combined)
    chosen: List[int] = []
    for front in preference_sort(combined, scope):
        room = size - len(chosen)
        if room <= 0:
            break
        if len(front) <= room:
            chosen.extend(front)
            continue
        dist = crowding_distance(f[front], scope)
        order = sorted(range(len(front)), key=lambda j: (-dist[j], front[j]))
        chosen.extend(front[j] for j in order[:room])
    return [combined[i] for i in chosen]


# ----------------------------
# Runs
# ----------------------------
def _evaluate_or_abort(sut: Sut, genomes: Sequence[ImageCharacteristics], jobs: int,
                       archive: Archive, trace: SearchTrace, generation: int) -> List[EvaluatedTestCase]:
    try:
        return evaluate_all(sut, genomes, jobs)
    except Exception as e:
        logger.error("SUT failed in generation %d: %s", generation, e)
        raise SearchAborted(f"SUT evaluation failed in generation {generation}: {e}", archive, trace) from e


def run_search(cfg: SearchConfig, sut: Sut) -> Tuple[Archive, SearchTrace]:
    if cfg.algorithm is Algorithm.RS:
        raise InvalidInputError("random search has no population; use run_random_search or run")

    k = sut.k
    rng = np.random.default_rng(cfg.seed)
    space = cfg.space()
    archive = Archive(epsilon=cfg.epsilon)
    trace = SearchTrace()
    budget = cfg.evaluation_budget
    logger.info("%s run: seed=%d budget=%d k=%d", cfg.algorithm.value, cfg.seed, budget, k)

    genomes = initial_population(min(cfg.population_for(k), budget), space, rng)
    population = _evaluate_or_abort(sut, genomes, cfg.jobs, archive, trace, 0)
    used = len(population)
    trace.add_evaluations(0, population)
    archive = update_archive(archive, population)
    uncovered = uncovered_objectives(archive, k)
    trace.add_generation(0, used, archive, k, len(population))

    generation = 0
    while used < budget and uncovered:
        generation += 1
        children = generate_offspring(population, uncovered, cfg, rng)[: budget - used]
        offspring = _evaluate_or_abort(sut, children, cfg.jobs, archive, trace, generation)
        used += len(offspring)
        trace.add_evaluations(generation, offspring)
        archive = update_archive(archive, offspring)
        uncovered = uncovered_objectives(archive, k)
        if uncovered:
            population = next_generation(list(population) + offspring, uncovered, cfg.algorithm, cfg, k)
        rec = trace.add_generation(generation, used, archive, k, len(population))
        logger.debug("generation %d: evaluations=%d covered=%d pop=%d",
                     generation, used, rec.covered, rec.population_size)

    logger.info("%s done: %d evaluations, %d generations, ES=%.3f",
                cfg.algorithm.value, used, generation + 1, effectiveness_score(archive, k))
    return archive, trace


def run_random_search(cfg: SearchConfig, sut: Sut) -> Tuple[Archive, SearchTrace]:
    """Each iteration samples a fresh suite of |O| uniform tests and keeps the best per objective."""
    k = sut.k
    rng = np.random.default_rng(cfg.seed)
    space = cfg.space()
    archive = Archive(epsilon=cfg.epsilon)
    trace = SearchTrace()
    budget = cfg.evaluation_budget
    batch = cfg.population_for(k)
    logger.info("rs run: seed=%d budget=%d k=%d", cfg.seed, budget, k)

    used, iteration = 0, 0
    while used < budget:
        genomes = initial_population(min(batch, budget - used), space, rng)
        tests = _evaluate_or_abort(sut, genomes, cfg.jobs, archive, trace, iteration)
        used += len(tests)
        trace.add_evaluations(iteration, tests)
        archive = update_archive(archive, tests)
        trace.add_generation(iteration, used, archive, k, len(tests))
        iteration += 1
        if len(archive) == k:
            break

    logger.info("rs done: %d evaluations, %d iterations, ES=%.3f",
                used, iteration, effectiveness_score(archive, k))
    return archive, trace


def run(cfg: SearchConfig, sut: Sut) -> Tuple[Archive, SearchTrace]:
    if cfg.algorithm is Algorithm.RS:
        return run_random_search(cfg, sut)
    return run_search(cfg, sut)
