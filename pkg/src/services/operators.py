"""Variation operators over ImageCharacteristics genomes.

Angles are real-coded genes (SBX crossover, polynomial mutation, clamped to bounds);
the model id is categorical and is only ever exchanged or resampled.
"""
from __future__ import annotations

from typing import Collection, List, Sequence, Tuple

import numpy as np

from src.models import OperatorParams

from .errors import ConfigError
from .types import GenomeSpace, ImageCharacteristics


def initial_population(size: int, space: GenomeSpace, rng: np.random.Generator) -> List[ImageCharacteristics]:
    if size < 1:
        raise ConfigError(f"population size must be >= 1, got {size}")
    if not space.model_ids:
        raise ConfigError("model set must not be empty")
    angles = rng.uniform(space.lo, space.hi, size=(size, 3))
    models = rng.integers(0, len(space.model_ids), size=size)
    return [
        ImageCharacteristics(float(a[0]), float(a[1]), float(a[2]), space.model_ids[int(m)])
        for a, m in zip(angles, models)
    ]


def sbx_spread(u: np.ndarray, eta: float) -> np.ndarray:
    """SBX spread factor beta for uniform draws ``u``."""
    return np.where(
        u <= 0.5,
        np.power(2.0 * u, 1.0 / (eta + 1.0)),
        np.power(1.0 / (2.0 * (1.0 - u)), 1.0 / (eta + 1.0)),
    )


def sbx_crossover(
    p1: ImageCharacteristics,
    p2: ImageCharacteristics,
    eta: float,
    space: GenomeSpace,
    rng: np.random.Generator,
) -> Tuple[ImageCharacteristics, ImageCharacteristics]:
    if eta <= 0:
        raise ConfigError(f"SBX distribution index must be > 0, got {eta}")
    # fixed draw count per call, whatever eta is
    u = rng.random(3)
    swap = rng.random() < 0.5

    a1, a2 = p1.angles, p2.angles
    beta = sbx_spread(u, eta)
    c1 = 0.5 * ((1.0 + beta) * a1 + (1.0 - beta) * a2)
    c2 = 0.5 * ((1.0 - beta) * a1 + (1.0 + beta) * a2)
    same = a1 == a2
    c1 = np.where(same, a1, c1)
    c2 = np.where(same, a2, c2)
    c1 = np.clip(c1, space.lo, space.hi)
    c2 = np.clip(c2, space.lo, space.hi)

    m1, m2 = (p2.model_id, p1.model_id) if swap else (p1.model_id, p2.model_id)
    return (
        ImageCharacteristics(float(c1[0]), float(c1[1]), float(c1[2]), m1),
        ImageCharacteristics(float(c2[0]), float(c2[1]), float(c2[2]), m2),
    )


def adaptive_eta(
    parent_fitness_1: Sequence[float],
    parent_fitness_2: Sequence[float],
    uncovered: Collection[int],
    params: OperatorParams,
) -> float:
    """Tighter SBX the closer both parents already are to an uncovered objective."""
    if not uncovered:
        raise ConfigError("adaptive eta needs at least one uncovered objective")
    scope = sorted(uncovered)
    best1 = float(np.max(np.asarray(parent_fitness_1, dtype=float)[scope]))
    best2 = float(np.max(np.asarray(parent_fitness_2, dtype=float)[scope]))
    f_bar = min(1.0, max(0.0, 0.5 * (best1 + best2)))
    return params.eta_low + (params.eta_high - params.eta_low) * f_bar


def polynomial_mutation(
    genome: ImageCharacteristics,
    eta_m: float,
    p_m: float,
    space: GenomeSpace,
    rng: np.random.Generator,
) -> ImageCharacteristics:
    if not 0.0 <= p_m <= 1.0:
        raise ConfigError(f"mutation probability must be in [0, 1], got {p_m}")
    mask = rng.random(4) < p_m
    u = rng.random(3)
    new_model = space.model_ids[int(rng.integers(0, len(space.model_ids)))]

    x = genome.angles
    delta = np.where(
        u < 0.5,
        np.power(2.0 * u, 1.0 / (eta_m + 1.0)) - 1.0,
        1.0 - np.power(2.0 * (1.0 - u), 1.0 / (eta_m + 1.0)),
    )
    mutated = np.clip(x + delta * (space.hi - space.lo), space.lo, space.hi)
    x = np.where(mask[:3], mutated, x)
    model = new_model if mask[3] else genome.model_id
    return ImageCharacteristics(float(x[0]), float(x[1]), float(x[2]), model)
