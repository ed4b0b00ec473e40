from __future__ import annotations

import math
from typing import Sequence, Set

import numpy as np

from .errors import InvalidInputError
from .types import GroundTruth, Point2D, Prediction


def _check_face(face_width: float, face_height: float) -> float:
    if not (math.isfinite(face_width) and math.isfinite(face_height)):
        raise InvalidInputError(f"non-finite face size {face_width} x {face_height}")
    if face_width <= 0 or face_height <= 0:
        raise InvalidInputError(f"face size must be positive, got {face_width} x {face_height}")
    return max(face_width, face_height)


def normalized_error(actual: Point2D, predicted: Point2D, face_width: float,
                     face_height: float) -> float:
    """Euclidean distance over the larger face side, clamped to 1."""
    size = _check_face(face_width, face_height)
    for p in (actual, predicted):
        if not (math.isfinite(p.x) and math.isfinite(p.y)):
            raise InvalidInputError(f"non-finite point ({p.x}, {p.y})")
    dist = math.hypot(actual.x - predicted.x, actual.y - predicted.y)
    return min(1.0, dist / size)


def normalized_errors(actual: np.ndarray, predicted: np.ndarray, face_size: float) -> np.ndarray:
    """Row-wise NE for (k, 2) arrays. NaN rows in ``actual`` give NaN."""
    dist = np.hypot(actual[:, 0] - predicted[:, 0], actual[:, 1] - predicted[:, 1])
    return np.minimum(1.0, dist / face_size)


def _check_lengths(truth: GroundTruth, prediction: Prediction) -> None:
    if truth.k != prediction.k:
        raise InvalidInputError(
            f"length mismatch: {truth.k} actual vs {prediction.k} predicted key-points"
        )


def fitness_vector(truth: GroundTruth, prediction: Prediction) -> np.ndarray:
    """One objective per key-point: NE when visible, 0 when not."""
    _check_lengths(truth, prediction)
    size = _check_face(truth.face_width, truth.face_height)
    ne = normalized_errors(truth.actual, prediction.predicted, size)
    return np.where(truth.visible, ne, 0.0)


def nme(truth: GroundTruth, prediction: Prediction) -> float:
    _check_lengths(truth, prediction)
    visible = truth.visible
    if not visible.any():
        raise InvalidInputError("NME needs at least one visible key-point")
    size = _check_face(truth.face_width, truth.face_height)
    ne = normalized_errors(truth.actual[visible], prediction.predicted[visible], size)
    return float(ne.sum() / visible.sum())


def covered_objectives(fitness: Sequence[float], epsilon: float) -> Set[int]:
    # inclusive boundary: NE >= epsilon is a severe misprediction
    return {int(i) for i in np.flatnonzero(np.asarray(fitness, dtype=float) >= epsilon)}
