"""Synthetic system under test: a tiny face simulator plus a key-point predictor with planted defects.

Rotation convention: intrinsic yaw (vertical axis) -> pitch (horizontal axis) -> roll
(camera axis), degrees. The camera looks down -z; projection is orthographic; image y
grows downwards.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Dict, List, Optional, Protocol, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from src.models import DefectRegion, ModelParams, RunConfig, SyntheticSutConfig

from .data import KeypointLayout, load_layout
from .errors import InvalidInputError
from .fitness import fitness_vector
from .types import EvaluatedTestCase, GenomeSpace, GroundTruth, ImageCharacteristics, Prediction

GOLDEN_ANGLE = 2.399963229728653


class Sut(Protocol):
    k: int

    def evaluate(self, ic: ImageCharacteristics) -> EvaluatedTestCase: ...

    def close(self) -> None: ...


def rotation_matrix(roll: float, pitch: float, yaw: float) -> np.ndarray:
    return Rotation.from_euler("YXZ", [yaw, pitch, roll], degrees=True).as_matrix()


def inverse_rotation_matrix(roll: float, pitch: float, yaw: float) -> np.ndarray:
    return Rotation.from_euler("ZXY", [-roll, -pitch, -yaw], degrees=True).as_matrix()


@dataclass(frozen=True, eq=False)
class PlantedDefect:
    key_point: int
    models: Optional[frozenset]
    lo: np.ndarray          # (3,) roll/pitch/yaw, -inf when unconstrained
    hi: np.ndarray          # exclusive, except on the search space edge
    hi_closed: np.ndarray   # (3,) bool
    magnitude: float
    halo: float
    halo_peak: float

    @classmethod
    def from_region(cls, region: DefectRegion, space: GenomeSpace) -> "PlantedDefect":
        lo, hi = np.full(3, -np.inf), np.full(3, np.inf)
        for axis, rng in enumerate((region.roll, region.pitch, region.yaw)):
            if rng is not None:
                lo[axis], hi[axis] = rng
        return cls(
            key_point=region.key_point,
            models=frozenset(region.models) if region.models else None,
            lo=lo,
            hi=hi,
            hi_closed=hi >= space.hi,
            magnitude=region.magnitude,
            halo=region.halo,
            halo_peak=region.halo_peak,
        )

    def distance(self, angles: np.ndarray) -> float:
        """Euclidean distance in degrees from the angles to the box (0 inside)."""
        excess = np.maximum(self.lo - angles, 0.0) + np.maximum(angles - self.hi, 0.0)
        return float(np.sqrt(np.sum(excess * excess)))

    def contains(self, angles: np.ndarray) -> bool:
        """Lower bounds inclusive, upper bounds strict (x < hi) like tree rules."""
        below = (angles < self.hi) | (self.hi_closed & (angles <= self.hi))
        return bool(np.all(angles >= self.lo) and np.all(below))

    def error(self, ic: ImageCharacteristics) -> float:
        if self.models is not None and ic.model_id not in self.models:
            return 0.0
        d = self.distance(ic.angles)
        if d == 0.0 and self.contains(ic.angles):
            return self.magnitude
        if d < self.halo:
            return self.halo_peak * (1.0 - d / self.halo)
        return 0.0


class SyntheticSut:
    """Pure and reentrant apart from the evaluation counter, which is lock-protected."""

    def __init__(self, layout: KeypointLayout, cfg: SyntheticSutConfig, space: GenomeSpace):
        if layout.k != cfg.k:
            raise InvalidInputError(f"layout has {layout.k} key-points, config expects {cfg.k}")
        self.k = cfg.k
        self.layout = layout
        self.cfg = cfg
        self.space = space
        self.models: Dict[int, ModelParams] = {m.model_id: m for m in cfg.models}
        self.defects: Tuple[PlantedDefect, ...] = tuple(PlantedDefect.from_region(d, space) for d in cfg.defects)
        angles = GOLDEN_ANGLE * np.arange(self.k)
        self._directions = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        self._index = np.arange(self.k, dtype=float)
        self._lock = threading.Lock()
        self.evaluations = 0

    @classmethod
    def from_config(cls, cfg: RunConfig) -> "SyntheticSut":
        return cls(load_layout(cfg.sut.layout_path), cfg.sut, cfg.search.space())

    # ---------- simulator ----------
    def _check(self, ic: ImageCharacteristics) -> ModelParams:
        if not self.space.contains(ic):
            raise InvalidInputError(f"{ic} outside the configured bounds")
        params = self.models.get(ic.model_id)
        if params is None:
            raise InvalidInputError(f"model {ic.model_id} has no entry in the model table")
        return params

    def model_center(self, model_id: int) -> np.ndarray:
        m = self.models[model_id]
        cx, cy = self.cfg.image_center
        return np.array([cx + m.offset_x, cy + m.offset_y])

    def render_truth(self, ic: ImageCharacteristics) -> GroundTruth:
        params = self._check(ic)
        rot = rotation_matrix(ic.roll, ic.pitch, ic.yaw)
        points = self.layout.points @ rot.T
        normals = self.layout.normals @ rot.T
        visible = normals[:, 2] > self.cfg.visibility_threshold

        scale = self.cfg.camera_scale * params.scale
        pixels = np.empty((self.k, 2))
        pixels[:, 0] = points[:, 0] * scale
        pixels[:, 1] = -points[:, 1] * scale
        pixels += self.model_center(ic.model_id)
        pixels[~visible] = np.nan

        seen = pixels[visible]
        width = float(seen[:, 0].max() - seen[:, 0].min()) if len(seen) else 0.0
        height = float(seen[:, 1].max() - seen[:, 1].min()) if len(seen) else 0.0
        if width <= 0 or height <= 0:
            raise InvalidInputError(f"degenerate face box {width} x {height} for {ic}")
        return GroundTruth(pixels, width, height)

    # ---------- predictor ----------
    def baseline_noise(self, ic: ImageCharacteristics) -> np.ndarray:
        """Smooth displacement per key-point as a fraction of the face size, norm <= noise_level."""
        i, m = self._index, float(ic.model_id)
        phase_x = 0.071 * ic.roll + 0.053 * ic.pitch + 0.037 * ic.yaw + 1.3 * i + 0.7 * m
        phase_y = 0.043 * ic.roll - 0.061 * ic.pitch + 0.067 * ic.yaw + 2.1 * i + 1.1 * m
        noise = np.stack([np.sin(phase_x), np.cos(phase_y)], axis=1)
        return noise * (self.cfg.noise_level / np.sqrt(2.0))

    def planted_error(self, ic: ImageCharacteristics) -> np.ndarray:
        """Planted displacement magnitude per key-point (fraction of the face size)."""
        err = np.zeros(self.k)
        for d in self.defects:
            err[d.key_point] = max(err[d.key_point], d.error(ic))
        return err

    def predict(self, ic: ImageCharacteristics, truth: GroundTruth) -> Prediction:
        size = truth.face_size
        shift = self.baseline_noise(ic) + self.planted_error(ic)[:, None] * self._directions
        predicted = np.where(truth.visible[:, None], truth.actual + shift * size, 0.0)
        # invisible key-points collapse onto the model center
        predicted[~truth.visible] = self.model_center(ic.model_id)
        return Prediction(predicted)

    def evaluate(self, ic: ImageCharacteristics) -> EvaluatedTestCase:
        truth = self.render_truth(ic)
        prediction = self.predict(ic, truth)
        with self._lock:
            self.evaluations += 1
        return EvaluatedTestCase(ic, truth, prediction, fitness_vector(truth, prediction))

    def feasible_objectives(self) -> List[int]:
        return sorted({d.key_point for d in self.defects if d.magnitude > 0})

    def close(self) -> None:
        pass
