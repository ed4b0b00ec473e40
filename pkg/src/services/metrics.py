from __future__ import annotations

from typing import Iterable, Optional

import numpy as np

from .types import Archive, EvaluatedTestCase


def effectiveness_score(archive: Archive, k: int) -> float:
    """Share of key-points the suite mispredicts severely."""
    return len(archive) / k if k else 0.0


def misprediction_severity(
    archive: Archive,
    k: int,
    all_evaluations: Optional[Iterable[EvaluatedTestCase]] = None,
    include_all: bool = False,
) -> np.ndarray:
    """Per key-point maximum NE over the archived tests.

    With ``include_all`` the maximum also runs over every evaluated test.
    """
    ms = np.zeros(k)
    for test in archive.tests():
        np.maximum(ms, test.fitness, out=ms)
    if include_all and all_evaluations is not None:
        for test in all_evaluations:
            np.maximum(ms, test.fitness, out=ms)
    return ms
