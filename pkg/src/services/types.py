"""Shared value types of the test-suite generator.

Coordinate arrays are numpy ``(k, 2)`` float arrays flagged read-only after
construction; invisible ground-truth key-points are rows of NaN.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, Tuple

import numpy as np

from .errors import InvalidInputError

DEFAULT_BOUND = 30.0
DEFAULT_MODEL_COUNT = 10
DEFAULT_K = 27
DEFAULT_EPSILON = 0.05

ANGLE_NAMES = ("roll", "pitch", "yaw")


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ImageCharacteristics:
    roll: float
    pitch: float
    yaw: float
    model_id: int

    @property
    def angles(self) -> np.ndarray:
        return np.array([self.roll, self.pitch, self.yaw], dtype=float)


@dataclass(frozen=True)
class GenomeSpace:
    """Box bounds of the three angle genes plus the finite model set."""

    lower: Tuple[float, float, float] = (-DEFAULT_BOUND,) * 3
    upper: Tuple[float, float, float] = (DEFAULT_BOUND,) * 3
    model_ids: Tuple[int, ...] = tuple(range(DEFAULT_MODEL_COUNT))

    def __post_init__(self):
        if len(self.lower) != 3 or len(self.upper) != 3:
            raise InvalidInputError("bounds need exactly three angle genes")
        if any(lo > hi for lo, hi in zip(self.lower, self.upper)):
            raise InvalidInputError(f"lower bound above upper bound: {self.lower} > {self.upper}")

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.lower, dtype=float)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.upper, dtype=float)

    def contains(self, ic: ImageCharacteristics) -> bool:
        a = ic.angles
        return bool(np.all(a >= self.lo) and np.all(a <= self.hi)) and ic.model_id in self.model_ids


@dataclass(frozen=True)
class Point2D:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise InvalidInputError(f"non-finite point ({self.x}, {self.y})")


@dataclass(frozen=True, eq=False)
class GroundTruth:
    actual: np.ndarray          # (k, 2); NaN rows are invisible key-points
    face_width: float
    face_height: float

    def __post_init__(self):
        arr = np.array(self.actual, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise InvalidInputError(f"actual positions must be (k, 2), got {arr.shape}")
        if not (self.face_width > 0 and self.face_height > 0):
            raise InvalidInputError(
                f"face size must be positive, got {self.face_width} x {self.face_height}"
            )
        missing = np.isnan(arr)
        if (missing.any(axis=1) & ~missing.all(axis=1)).any():
            raise InvalidInputError("a key-point is either fully visible or fully NaN")
        visible = ~missing.all(axis=1)
        if not visible.any():
            raise InvalidInputError("ground truth has no visible key-point")
        if not np.isfinite(arr[visible]).all():
            raise InvalidInputError("visible key-points must have finite coordinates")
        object.__setattr__(self, "actual", _frozen(arr))
        object.__setattr__(self, "face_width", float(self.face_width))
        object.__setattr__(self, "face_height", float(self.face_height))

    @property
    def k(self) -> int:
        return self.actual.shape[0]

    @property
    def visible(self) -> np.ndarray:
        return ~np.isnan(self.actual[:, 0])

    @property
    def visible_indices(self) -> Tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.visible))

    @property
    def face_size(self) -> float:
        return max(self.face_width, self.face_height)


@dataclass(frozen=True, eq=False)
class Prediction:
    predicted: np.ndarray       # (k, 2), always finite

    def __post_init__(self):
        arr = np.asarray(self.predicted, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise InvalidInputError(f"predicted positions must be (k, 2), got {arr.shape}")
        if not np.isfinite(arr).all():
            raise InvalidInputError("predicted key-points must be finite")
        object.__setattr__(self, "predicted", _frozen(arr))

    @property
    def k(self) -> int:
        return self.predicted.shape[0]


@dataclass(frozen=True, eq=False)
class EvaluatedTestCase:
    ic: ImageCharacteristics
    truth: GroundTruth
    prediction: Prediction
    fitness: np.ndarray

    def __post_init__(self):
        fit = np.asarray(self.fitness, dtype=float)
        if fit.shape != (self.truth.k,) or self.prediction.k != self.truth.k:
            raise InvalidInputError(
                f"length mismatch: truth {self.truth.k}, prediction {self.prediction.k}, "
                f"fitness {fit.shape}"
            )
        if not (np.all(fit >= 0.0) and np.all(fit <= 1.0)):
            raise InvalidInputError("fitness values must lie in [0, 1]")
        object.__setattr__(self, "fitness", _frozen(fit))

    @property
    def k(self) -> int:
        return self.truth.k


@dataclass(frozen=True)
class Archive:
    """Best qualifying test per objective. Entries only ever get added or improved."""

    epsilon: float = DEFAULT_EPSILON
    entries: Mapping[int, EvaluatedTestCase] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "entries", MappingProxyType(dict(sorted(self.entries.items()))))

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, objective: int) -> bool:
        return objective in self.entries

    @property
    def covered(self) -> frozenset:
        return frozenset(self.entries)

    def best_fitness(self, objective: int) -> float:
        entry = self.entries.get(objective)
        return float(entry.fitness[objective]) if entry is not None else 0.0

    def tests(self) -> Tuple[EvaluatedTestCase, ...]:
        """Distinct archived tests in objective order (a test may cover several objectives)."""
        seen, out = set(), []
        for entry in self.entries.values():
            if id(entry) not in seen:
                seen.add(id(entry))
                out.append(entry)
        return tuple(out)


@dataclass(frozen=True)
class ObjectiveState:
    epsilon: float
    covered: frozenset
    uncovered: frozenset

    @classmethod
    def initial(cls, k: int, epsilon: float = DEFAULT_EPSILON) -> "ObjectiveState":
        return cls(epsilon, frozenset(), frozenset(range(k)))

    @classmethod
    def from_archive(cls, archive: Archive, k: int) -> "ObjectiveState":
        covered = archive.covered
        return cls(archive.epsilon, covered, frozenset(range(k)) - covered)


def objectives(indices: Iterable[int]) -> Tuple[int, ...]:
    """Sorted tuple of objective indices; the canonical iteration order everywhere."""
    return tuple(sorted(int(i) for i in indices))
