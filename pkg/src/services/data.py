from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Optional, Tuple

import numpy as np
import pandas as pd
import yaml
from pydantic import TypeAdapter, ValidationError

from src.models import (
    ArchiveRecord,
    EvaluationRecord,
    GenerationRecord,
    IcRecord,
    RunConfig,
    RunSummary,
    TraceLine,
)

from .errors import ConfigError
from .types import Archive, EvaluatedTestCase, GroundTruth, ImageCharacteristics, Prediction

REPO_ROOT = Path(__file__).resolve().parents[2]
DEFAULT_CONFIG_PATH = REPO_ROOT / "config" / "default.yaml"

LAYOUT_COLS = ("key_point", "name", "x", "y", "z", "nx", "ny", "nz")

_TRACE_LINE = TypeAdapter(TraceLine)


def normalize_col_name(col: str) -> str:
    # make keys consistent for lookups
    return (col or "").strip().lower().replace(" ", "_")


def resolve_path(path: str | os.PathLike) -> Path:
    p = Path(path)
    return p if p.is_absolute() else REPO_ROOT / p


# ----------------------------
# Key-point layout
# ----------------------------
@dataclass(frozen=True, eq=False)
class KeypointLayout:
    path: str
    names: Tuple[str, ...]
    points: np.ndarray      # (k, 3) canonical unit-face coordinates
    normals: np.ndarray     # (k, 3) unit outward normals

    @property
    def k(self) -> int:
        return len(self.names)


def load_layout(path: str | os.PathLike) -> KeypointLayout:
    full = resolve_path(path)
    if not full.exists():
        raise ConfigError(f"Could not find key-point layout at {full}.")

    df = pd.read_csv(full)
    df.columns = [normalize_col_name(c) for c in df.columns]

    missing = [c for c in LAYOUT_COLS if c not in df.columns]
    if missing:
        raise ConfigError(f"Layout CSV missing columns {missing}. Found: {list(df.columns)}")

    df = df.sort_values("key_point").reset_index(drop=True)
    points = df[["x", "y", "z"]].to_numpy(dtype=float)
    normals = df[["nx", "ny", "nz"]].to_numpy(dtype=float)
    lengths = np.linalg.norm(normals, axis=1)
    if np.any(lengths == 0) or not np.isfinite(points).all():
        raise ConfigError(f"Layout {full} has a zero normal or a non-finite coordinate")
    normals = normals / lengths[:, None]

    points.setflags(write=False)
    normals.setflags(write=False)
    return KeypointLayout(
        path=str(full),
        names=tuple(df["name"].astype(str).str.strip()),
        points=points,
        normals=normals,
    )


# ----------------------------
# Configuration
# ----------------------------
def load_config(path: Optional[str | os.PathLike] = None) -> RunConfig:
    if path is None:
        path = os.getenv("KPT_CONFIG_PATH", str(DEFAULT_CONFIG_PATH))
    full = resolve_path(path)
    if not full.exists():
        raise ConfigError(f"Could not find config at {full}.")
    try:
        raw = yaml.safe_load(full.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"{full} is not valid YAML: {e}") from e
    return validate_config(raw, source=str(full))


def validate_config(raw: Dict[str, Any], source: str = "<config>") -> RunConfig:
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"invalid config {source}:\n{e}") from e


def apply_overrides(cfg: RunConfig, **overrides: Any) -> RunConfig:
    """Re-validated copy with search fields (and ``external_command``) replaced; ``None`` means keep.

    An empty ``external_command`` clears the configured one.
    """
    raw = cfg.model_dump(mode="json")
    for key, value in overrides.items():
        if value is None:
            continue
        if key == "external_command":
            raw[key] = value or None
        elif key in raw["search"]:
            raw["search"][key] = value
        else:
            raise ConfigError(f"unknown override {key!r}")
    return validate_config(raw, source="<overrides>")


def dump_config(cfg: RunConfig, path: str | os.PathLike) -> None:
    text = yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=False)
    Path(path).write_text(text, encoding="utf-8")


# ----------------------------
# Records
# ----------------------------
def ic_to_record(ic: ImageCharacteristics) -> IcRecord:
    return IcRecord(roll=ic.roll, pitch=ic.pitch, yaw=ic.yaw, model_id=ic.model_id)


def ic_from_record(rec: IcRecord) -> ImageCharacteristics:
    return ImageCharacteristics(rec.roll, rec.pitch, rec.yaw, rec.model_id)


def _xy_list(arr: np.ndarray) -> List[Optional[Tuple[float, float]]]:
    return [None if np.isnan(x) else (float(x), float(y)) for x, y in arr]


def archive_records(archive: Archive) -> List[ArchiveRecord]:
    return [
        ArchiveRecord(
            objective=obj,
            ic=ic_to_record(t.ic),
            actual=_xy_list(t.truth.actual),
            predicted=[(float(x), float(y)) for x, y in t.prediction.predicted],
            face_width=t.truth.face_width,
            face_height=t.truth.face_height,
            fitness=[float(f) for f in t.fitness],
        )
        for obj, t in archive.entries.items()
    ]


def case_from_record(rec: ArchiveRecord) -> EvaluatedTestCase:
    actual = np.array([[np.nan, np.nan] if p is None else p for p in rec.actual], dtype=float)
    return EvaluatedTestCase(
        ic=ic_from_record(rec.ic),
        truth=GroundTruth(actual.reshape(-1, 2), rec.face_width, rec.face_height),
        prediction=Prediction(np.array(rec.predicted, dtype=float).reshape(-1, 2)),
        fitness=np.array(rec.fitness, dtype=float),
    )


def evaluation_record(generation: int, test: EvaluatedTestCase) -> EvaluationRecord:
    return EvaluationRecord(
        generation=generation,
        ic=ic_to_record(test.ic),
        fitness=[float(f) for f in test.fitness],
        visible=[int(v) for v in test.truth.visible],
    )


# ----------------------------
# Files
# ----------------------------
def write_jsonl(path: str | os.PathLike, records: Iterable[Any]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for rec in records:
            f.write(rec.model_dump_json() + "\n")
            n += 1
    return n


def _lines(path: str | os.PathLike) -> Iterator[str]:
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                yield line


def read_archive_records(path: str | os.PathLike) -> List[ArchiveRecord]:
    return [ArchiveRecord.model_validate_json(line) for line in _lines(path)]


def read_archive(path: str | os.PathLike, epsilon: float) -> Archive:
    entries = {rec.objective: case_from_record(rec) for rec in read_archive_records(path)}
    return Archive(epsilon=epsilon, entries=entries)


def iter_trace(path: str | os.PathLike) -> Iterator[EvaluationRecord | GenerationRecord]:
    """Streams a trace file line by line."""
    for line in _lines(path):
        yield _TRACE_LINE.validate_json(line)


def write_summary(path: str | os.PathLike, summary: RunSummary) -> None:
    Path(path).write_text(summary.model_dump_json(indent=2) + "\n", encoding="utf-8")


def read_summary(path: str | os.PathLike) -> RunSummary:
    return RunSummary.model_validate_json(Path(path).read_text(encoding="utf-8"))


def write_json(path: str | os.PathLike, payload: Any) -> None:
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
