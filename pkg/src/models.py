from __future__ import annotations

from enum import Enum
from typing import Annotated, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .services.types import DEFAULT_BOUND, DEFAULT_EPSILON, DEFAULT_K, GenomeSpace

Range = Tuple[float, float]
XY = Tuple[float, float]

_DEFAULT_RANGE: Range = (-DEFAULT_BOUND, DEFAULT_BOUND)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# ----------------------------
# Configuration
# ----------------------------
class Algorithm(str, Enum):
    RS = "rs"
    MOSA = "mosa"
    MOSA_PLUS = "mosa+"
    FITEST = "fitest"
    FITEST_PLUS = "fitest+"

    @property
    def adaptive(self) -> bool:
        return self in (Algorithm.MOSA_PLUS, Algorithm.FITEST_PLUS)

    @property
    def shrinking(self) -> bool:
        return self in (Algorithm.FITEST, Algorithm.FITEST_PLUS)


class OperatorParams(_Strict):
    crossover_probability: float = Field(0.9, ge=0.0, le=1.0)
    eta_c: float = Field(20.0, gt=0.0, description="base SBX distribution index")
    mutation_probability: float = Field(0.25, ge=0.0, le=1.0)
    eta_m: float = Field(20.0, gt=0.0, description="polynomial mutation index")
    eta_low: float = Field(5.0, gt=0.0, description="adaptive SBX index at zero parent fitness")
    eta_high: float = Field(50.0, gt=0.0, description="adaptive SBX index at full parent fitness")

    @model_validator(mode="after")
    def _eta_order(self):
        if self.eta_low > self.eta_high:
            raise ValueError(f"eta_low {self.eta_low} above eta_high {self.eta_high}")
        return self


class SearchConfig(_Strict):
    algorithm: Algorithm = Algorithm.MOSA
    epsilon: float = Field(DEFAULT_EPSILON, gt=0.0, lt=1.0)
    evaluation_budget: int = Field(20_000, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)
    population_size: Optional[int] = Field(None, ge=1, description="defaults to the number of objectives")
    roll: Range = _DEFAULT_RANGE
    pitch: Range = _DEFAULT_RANGE
    yaw: Range = _DEFAULT_RANGE
    model_ids: List[int] = Field(default_factory=lambda: list(range(10)))
    operators: OperatorParams = Field(default_factory=OperatorParams)
    jobs: int = Field(1, ge=1, description="threads used to evaluate one generation")

    @field_validator("roll", "pitch", "yaw")
    @classmethod
    def _ordered(cls, v: Range) -> Range:
        if v[0] > v[1]:
            raise ValueError(f"range {v} has lower bound above upper bound")
        return v

    @field_validator("model_ids")
    @classmethod
    def _models(cls, v: List[int]) -> List[int]:
        if not v:
            raise ValueError("model set must not be empty")
        if len(set(v)) != len(v):
            raise ValueError(f"duplicate model ids in {v}")
        return v

    def space(self) -> GenomeSpace:
        return GenomeSpace(
            lower=(self.roll[0], self.pitch[0], self.yaw[0]),
            upper=(self.roll[1], self.pitch[1], self.yaw[1]),
            model_ids=tuple(self.model_ids),
        )

    def population_for(self, k: int) -> int:
        return self.population_size or k


class ModelParams(_Strict):
    model_id: int
    scale: float = Field(1.0, gt=0.0)
    offset_x: float = 0.0
    offset_y: float = 0.0


class DefectRegion(_Strict):
    """Box over the angles (unset axes are unconstrained), optionally restricted to some models.

    Inside the box the predictor is displaced by ``magnitude`` (fraction of the face size).
    Within ``halo`` degrees of the box the displacement falls off linearly from ``halo_peak``.
    """

    key_point: int = Field(..., ge=0)
    models: Optional[List[int]] = None
    roll: Optional[Range] = None
    pitch: Optional[Range] = None
    yaw: Optional[Range] = None
    magnitude: float = Field(..., ge=0.0)
    halo: float = Field(0.0, ge=0.0)
    halo_peak: float = Field(0.03, ge=0.0)

    @field_validator("roll", "pitch", "yaw")
    @classmethod
    def _ordered(cls, v: Optional[Range]) -> Optional[Range]:
        if v is not None and v[0] > v[1]:
            raise ValueError(f"range {v} has lower bound above upper bound")
        return v


class SyntheticSutConfig(_Strict):
    layout_path: str = "data/keypoints.csv"
    k: int = Field(DEFAULT_K, ge=1)
    camera_scale: float = Field(200.0, gt=0.0, description="pixels per canonical face unit")
    image_center: XY = (320.0, 240.0)
    visibility_threshold: float = Field(0.2, gt=-1.0, lt=1.0)
    noise_level: float = Field(0.01, ge=0.0, le=0.02)
    models: List[ModelParams] = Field(
        default_factory=lambda: [ModelParams(model_id=m) for m in range(10)]
    )
    defects: List[DefectRegion] = Field(default_factory=list)

    @model_validator(mode="after")
    def _defects_in_range(self):
        ids = {m.model_id for m in self.models}
        for d in self.defects:
            if d.key_point >= self.k:
                raise ValueError(f"defect key_point {d.key_point} outside 0..{self.k - 1}")
            if d.models and not set(d.models) <= ids:
                raise ValueError(f"defect models {d.models} not in model table {sorted(ids)}")
        return self


class TreeParams(_Strict):
    min_leaf: int = Field(40, ge=1)
    prune_fraction: float = Field(1.0 / 3.0, ge=0.0, lt=1.0)
    folds: int = Field(10, ge=2)
    seed: int = Field(0, ge=0)


class RunConfig(_Strict):
    search: SearchConfig = Field(default_factory=SearchConfig)
    sut: SyntheticSutConfig = Field(default_factory=SyntheticSutConfig)
    explain: TreeParams = Field(default_factory=TreeParams)
    external_command: Optional[str] = Field(None, description="shell-style command of an external SUT")
    external_timeout: float = Field(30.0, gt=0.0)

    @model_validator(mode="after")
    def _budget_covers_population(self):
        pop = self.search.population_for(self.sut.k)
        if self.search.evaluation_budget < pop:
            raise ValueError(
                f"evaluation_budget {self.search.evaluation_budget} below population size {pop}"
            )
        models = {m.model_id for m in self.sut.models}
        missing = set(self.search.model_ids) - models
        if self.external_command is None and missing:
            raise ValueError(f"search model ids {sorted(missing)} have no entry in sut.models")
        return self


# ----------------------------
# File records
# ----------------------------
class IcRecord(_Strict):
    roll: float
    pitch: float
    yaw: float
    model_id: int


class ArchiveRecord(_Strict):
    objective: int
    ic: IcRecord
    actual: List[Optional[XY]]
    predicted: List[XY]
    face_width: float
    face_height: float
    fitness: List[float]


class EvaluationRecord(_Strict):
    kind: Literal["evaluation"] = "evaluation"
    generation: int
    ic: IcRecord
    fitness: List[float]
    visible: List[int]


class GenerationRecord(_Strict):
    kind: Literal["generation"] = "generation"
    generation: int
    evaluations: int
    covered: int
    uncovered: int
    population_size: int
    es: float


TraceLine = Annotated[Union[EvaluationRecord, GenerationRecord], Field(discriminator="kind")]


class RunSummary(_Strict):
    algorithm: Algorithm
    seed: int
    k: int
    epsilon: float
    evaluations: int
    generations: int
    es: float
    ms: List[float]
    covered: List[int]
    status: Literal["ok", "aborted"] = "ok"
    error: Optional[str] = None


# ----------------------------
# External process protocol
# ----------------------------
class Hello(_Strict):
    hello: Literal[1] = 1
    k: int


class HelloReply(_Strict):
    ok: Literal[True]


class EvaluateResponse(_Strict):
    model_config = ConfigDict(allow_inf_nan=False)

    actual: List[Optional[XY]]
    predicted: List[XY]
    face_width: float = Field(..., gt=0.0)
    face_height: float = Field(..., gt=0.0)


# ----------------------------
# HTTP bodies
# ----------------------------
class FitnessRequest(BaseModel):
    model_config = ConfigDict(allow_inf_nan=False)

    actual: List[Optional[XY]] = Field(..., description="k positions, null for invisible key-points")
    predicted: List[XY] = Field(..., description="k predicted positions")
    face_width: float
    face_height: float
    epsilon: float = Field(DEFAULT_EPSILON, gt=0.0, lt=1.0)
