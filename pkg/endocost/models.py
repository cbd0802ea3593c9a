import math
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import orjson
from pydantic import (BaseModel, ConfigDict, Field, ValidationError, ValidationInfo, field_validator,
                      model_validator)

from .errors import ConfigError

U64_MAX = 2**64 - 1


class TopologyKind(str, Enum):
    FULL = "full"
    RING = "ring"
    STAR = "star"
    RANDOM_SPARSE = "random-sparse"
    WUXING = "wuxing"
    GENERALIZED_WUXING = "generalized-wuxing"


class EnvironmentKind(str, Enum):
    STATIONARY = "stationary"
    ALTERNATING = "alternating"
    BOUNDED_DRIFT = "bounded-drift"
    INTERACTION_DOMINANT = "interaction-dominant"


class AllocatorKind(str, Enum):
    UNIFORM = "uniform"
    GATED = "gated"
    COMPETITIVE = "competitive"


class RewardMode(str, Enum):
    OUT_EDGE = "paper-reward"
    EXACT = "exact-gradient"


class FeatureScheme(str, Enum):
    NOISY_VALUE = "noisy-value"
    UNINFORMATIVE = "uninformative"


MIN_MODULES = {
    TopologyKind.FULL: 2,
    TopologyKind.RING: 3,
    TopologyKind.STAR: 3,
    TopologyKind.RANDOM_SPARSE: 2,
    TopologyKind.WUXING: 5,
    TopologyKind.GENERALIZED_WUXING: 5,
}
CYCLE_KINDS = (TopologyKind.WUXING, TopologyKind.GENERALIZED_WUXING)


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)


class GraphSpec(StrictModel):
    kind: TopologyKind = TopologyKind.WUXING
    n: int = Field(default=5, ge=2, le=64)
    lam: float = Field(default=0.05, ge=0.0, alias="lambda")
    w_coop: float = Field(default=1.0, ge=-1.0, le=1.0)
    w_comp: float = Field(default=-1.0, ge=-1.0, le=1.0)
    w_sheng: float = Field(default=1.0, ge=-1.0, le=1.0)
    w_ke: float = Field(default=-1.0, ge=-1.0, le=1.0)
    w: float = Field(default=1.0, ge=-1.0, le=1.0)
    m_target: Optional[int] = Field(default=None, ge=1)
    seed: int = Field(default=0, ge=0, le=U64_MAX)

    @field_validator("n")
    @classmethod
    def n_meets_kind_minimum(cls, v, info: ValidationInfo):
        kind = info.data.get("kind")
        if kind is not None and v < MIN_MODULES[kind]:
            raise ValueError(f"{kind.value} topology needs n >= {MIN_MODULES[kind]}, got {v}")
        return v

    @field_validator("w_sheng")
    @classmethod
    def sheng_is_cooperative(cls, v, info: ValidationInfo):
        if info.data.get("kind") in CYCLE_KINDS and not v > 0:
            raise ValueError(f"w_sheng must be positive, got {v}")
        return v

    @field_validator("w_ke")
    @classmethod
    def ke_is_competitive(cls, v, info: ValidationInfo):
        if info.data.get("kind") in CYCLE_KINDS and not v < 0:
            raise ValueError(f"w_ke must be negative, got {v}")
        return v

    @model_validator(mode="after")
    def check_kind_parameters(self):
        """Per-kind size and edge-budget rules the generators enforce"""
        if self.kind == TopologyKind.WUXING and self.n != 5:
            raise ValueError("wuxing topology has exactly 5 modules")
        if self.kind == TopologyKind.RANDOM_SPARSE:
            if self.m_target is None:
                raise ValueError("random-sparse topology requires m_target")
            if self.m_target > self.n * (self.n - 1):
                raise ValueError("m_target exceeds n(n-1)")
        return self

    @property
    def label(self) -> str:
        return self.kind.value


class EnvironmentSpec(StrictModel):
    kind: EnvironmentKind = EnvironmentKind.STATIONARY
    phase_length: Optional[int] = Field(default=None, ge=1)
    values: Optional[List[float]] = None
    min_value: float = Field(default=0.0, ge=0.0, le=1.0)
    variation_budget: float = Field(default=1.0, ge=0.0)
    delta: float = Field(default=0.25, ge=0.0, le=0.5)

    @field_validator("values")
    @classmethod
    def values_in_unit_interval(cls, v):
        """Bounded values: every entry in [0, 1]"""
        if v is not None and any(not (0.0 <= x <= 1.0) for x in v):
            raise ValueError("stationary values must lie in [0, 1]")
        return v

    @property
    def label(self) -> str:
        return self.kind.value


class AllocatorSpec(StrictModel):
    kind: AllocatorKind = AllocatorKind.COMPETITIVE
    eta: Optional[float] = Field(default=None, gt=0.0)
    anytime: bool = False
    alpha: float = Field(default=1.0, gt=0.0)
    step_decay: float = Field(default=1.0 / 3.0, ge=0.0)
    feature_scheme: Optional[FeatureScheme] = None
    feature_noise: float = Field(default=0.1, ge=0.0)

    @property
    def label(self) -> str:
        return self.kind.value


class OutputSpec(StrictModel):
    out_dir: str = "results"
    trace: bool = False


class ExperimentConfig(StrictModel):
    name: str = "experiment"
    graph: GraphSpec = Field(default_factory=GraphSpec)
    topologies: List[GraphSpec] = Field(default_factory=list)
    environment: EnvironmentSpec = Field(default_factory=EnvironmentSpec)
    allocator: AllocatorSpec = Field(default_factory=AllocatorSpec)
    allocators: List[AllocatorSpec] = Field(default_factory=list)
    horizons: List[int] = Field(default_factory=lambda: [1024], min_length=1)
    seeds: List[int] = Field(default_factory=lambda: [0], min_length=1)
    reward_mode: RewardMode = RewardMode.OUT_EDGE
    truthfulness_window: Optional[int] = Field(default=None, ge=1)
    outputs: OutputSpec = Field(default_factory=OutputSpec)
    allow_unsafe_lambda: bool = False

    @field_validator("horizons")
    @classmethod
    def horizons_ascending(cls, v):
        """Horizons must be positive and strictly ascending"""
        if any(h < 1 for h in v):
            raise ValueError("horizons must be >= 1")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("horizons must be strictly ascending")
        return v

    @field_validator("seeds")
    @classmethod
    def seeds_are_u64(cls, v):
        if any(s < 0 or s > U64_MAX for s in v):
            raise ValueError("seeds must be unsigned 64-bit integers")
        return v

    @model_validator(mode="after")
    def topologies_share_size(self):
        """A topology sweep compares graphs with the same n and lambda"""
        for spec in self.topologies:
            if spec.n != self.graph.n or spec.lam != self.graph.lam:
                raise ValueError(
                    f"topology {spec.label} must share n={self.graph.n} and lambda={self.graph.lam}"
                )
        if self.environment.values is not None and len(self.environment.values) != self.graph.n:
            raise ValueError("environment.values must have one entry per module")
        return self

    def sweep_topologies(self) -> List[GraphSpec]:
        return list(self.topologies) or [self.graph]

    def sweep_allocators(self) -> List[AllocatorSpec]:
        if self.allocators:
            return list(self.allocators)
        return [self.allocator.model_copy(update={"kind": kind}) for kind in AllocatorKind]

    def with_overrides(self,
                       seed: Optional[int] = None,
                       horizon: Optional[int] = None,
                       allocator: Optional[str] = None,
                       topology: Optional[str] = None) -> "ExperimentConfig":
        """Apply CLI overrides and re-validate the whole config"""
        data = self.model_dump(by_alias=True, mode="json")
        if seed is not None:
            data["seeds"] = [seed]
        if horizon is not None:
            data["horizons"] = [horizon]
        if allocator is not None:
            data["allocator"]["kind"] = allocator
            data["allocators"] = []
        if topology is not None:
            data["graph"]["kind"] = topology
            data["topologies"] = []
        return validate_config(data)


RESULT_HEADER: Tuple[str, ...] = (
    "topology", "n", "m_directed", "d_max", "kappa", "lambda", "allocator",
    "environment", "T", "seed", "static_regret", "dynamic_regret",
    "truthfulness_gap", "cost_units", "cost_product", "wall_seconds",
)


class ResultRow(StrictModel):
    topology: str
    n: int
    m_directed: int
    d_max: int
    kappa: int
    lam: float = Field(alias="lambda")
    allocator: str
    environment: str
    T: int
    seed: int
    static_regret: float
    dynamic_regret: float
    truthfulness_gap: Optional[float] = None
    cost_units: int
    cost_product: float
    wall_seconds: float
    # topology constraint failures; shown in tables, not part of the file formats
    constraint_violations: Tuple[str, ...] = ()

    @model_validator(mode="after")
    def numeric_fields_finite(self):
        for name in ("static_regret", "dynamic_regret", "truthfulness_gap", "cost_product", "wall_seconds"):
            value = getattr(self, name)
            if value is not None and not math.isfinite(value):
                raise ValueError(f"{name} is not finite")
        return self

    @property
    def sort_key(self) -> Tuple[Any, ...]:
        return (self.topology, self.allocator, self.environment, self.T, self.seed)

    def as_record(self) -> Dict[str, Any]:
        """Fields in header order, as written to JSONL"""
        data = self.model_dump(by_alias=True)
        return {key: data[key] for key in RESULT_HEADER}

    def csv_values(self) -> List[str]:
        """Header-ordered cells; floats use the shortest round-trip repr"""
        return [_cell(v) for v in self.as_record().values()]


def _cell(value: Any) -> str:
    if value is None:
        return ""
    return repr(value) if isinstance(value, float) else str(value)


def _field_path(error: Dict[str, Any]) -> str:
    return ".".join(str(part) for part in error.get("loc", ())) or "<root>"


def validate_config(data: Any) -> ExperimentConfig:
    """Validate a decoded config; the first error names its field path"""
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        field = _field_path(first)
        raise ConfigError(f"invalid config field '{field}': {first['msg']}", field=field) from e


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """Read and validate a JSON experiment config"""
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror or e}") from e
    try:
        data = orjson.loads(raw)
    except orjson.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from e
    return validate_config(data)
