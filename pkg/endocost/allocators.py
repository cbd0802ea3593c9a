"""Online allocation policies.

Each policy keeps an explicit state record and exposes a pure step
function; the `Allocator` classes wrap those functions behind one
interface and register themselves by kind so the harness can build any
of them from an `AllocatorSpec`.
"""
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, ClassVar, Dict, Optional, Type

import numpy as np

from .errors import ConfigError, DimensionMismatchError, NonFiniteRewardError
from .graph import InteractionGraph
from .models import AllocatorKind, AllocatorSpec, FeatureScheme, RewardMode
from .observability import get_logger
from .payoff import Allocation, RewardVector, ValueVector, reward

logger = get_logger(__name__)

# multiplicative weights never reach exact zero
WEIGHT_FLOOR = 1e-300
FEATURE_STREAM = 2


@dataclass(frozen=True, eq=False)
class Feedback:
    """What the allocator observes after round t"""
    values: ValueVector
    rewards: RewardVector
    payoff: float
    features: Optional[np.ndarray] = None


@dataclass(eq=False)
class AllocatorState:
    kind: AllocatorKind
    allocation: Allocation
    round_index: int = 1
    learning_rate: Optional[float] = None
    anytime: bool = False
    gating: Optional[np.ndarray] = None
    alpha: float = 1.0
    step_decay: float = 1.0 / 3.0
    rng_seed: int = 0


def default_learning_rate(n: int, horizon: int) -> float:
    """eta = sqrt(ln N / T)"""
    return math.sqrt(math.log(n) / horizon)


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max())
    return e / e.sum()


def make_features(v: ValueVector, scheme: FeatureScheme, rng: np.random.Generator,
                  sigma: float = 0.1) -> np.ndarray:
    """Context x_t for the gated allocator, dimension d = N."""
    if scheme == FeatureScheme.NOISY_VALUE:
        return np.clip(v.values + rng.normal(0.0, sigma, size=v.values.shape), 0.0, 1.0)
    return rng.uniform(0.0, 1.0, size=v.values.shape)


def uniform_step(state: AllocatorState) -> Allocation:
    state.round_index += 1
    return state.allocation


def competitive_step(state: AllocatorState, feedback: Feedback) -> Allocation:
    """Multiplicative weights on the interaction-enriched rewards."""
    r = feedback.rewards.rewards
    if r.shape != state.allocation.weights.shape:
        raise DimensionMismatchError(f"reward shape {r.shape} does not match allocation")
    if not np.isfinite(r).all():
        raise NonFiniteRewardError(f"non-finite reward at round {state.round_index}: {r.tolist()}",
                                   round_index=state.round_index)
    n = state.allocation.n
    eta = (math.sqrt(math.log(n) / state.round_index) if state.anytime
           else state.learning_rate)
    # subtracting max(r) leaves the normalized update unchanged and keeps exp() <= 1
    w = state.allocation.weights * np.exp(eta * (r - r.max()))
    w = np.maximum(w, WEIGHT_FLOOR)
    state.allocation = Allocation.from_weights(w / w.sum())
    state.round_index += 1
    return state.allocation


def gate_direction(a: np.ndarray, u: np.ndarray, x: np.ndarray) -> np.ndarray:
    """(diag(a) - a a^T) u x^T, the softmax chain rule for a . u"""
    return np.outer(a * (u - a @ u), x)


def gating_gradient(gating: np.ndarray, x: np.ndarray, v: ValueVector, g: InteractionGraph,
                    mode: RewardMode = RewardMode.OUT_EDGE) -> np.ndarray:
    """d/dG of a . u at a = softmax(G x), holding u fixed"""
    a = softmax(gating @ x)
    u = reward(a, v, g, mode).rewards
    return gate_direction(a, u, x)


def gated_step(state: AllocatorState, feedback: Feedback,
               next_features: Optional[np.ndarray] = None) -> Allocation:
    x = feedback.features
    if x is None:
        raise DimensionMismatchError("gated allocator needs a feature vector every round")
    if x.shape != (state.gating.shape[1],):
        raise DimensionMismatchError(f"feature shape {x.shape} does not match gating {state.gating.shape}")
    a = state.allocation.weights
    u = feedback.rewards.rewards
    step = state.alpha * state.round_index ** (-state.step_decay)
    state.gating = state.gating + step * gate_direction(a, u, x)
    state.round_index += 1
    context = x if next_features is None else next_features
    state.allocation = Allocation.from_weights(softmax(state.gating @ context))
    return state.allocation


class Allocator(ABC):
    """Common interface over the step functions"""

    kind: ClassVar[AllocatorKind]
    needs_features: ClassVar[bool] = False

    def __init__(self, state: AllocatorState):
        self.state = state

    @classmethod
    @abstractmethod
    def create(cls, spec: AllocatorSpec, n: int, horizon: int, seed: int) -> "Allocator":
        ...

    @property
    def allocation(self) -> Allocation:
        return self.state.allocation

    def start(self, features: Optional[np.ndarray] = None) -> Allocation:
        """Allocation for round 1"""
        return self.state.allocation

    @abstractmethod
    def step(self, feedback: Feedback, g: InteractionGraph,
             next_features: Optional[np.ndarray] = None) -> Allocation:
        ...


ALLOCATORS: Dict[AllocatorKind, Type[Allocator]] = {}


def register(kind: AllocatorKind) -> Callable[[Type[Allocator]], Type[Allocator]]:
    def decorator(cls: Type[Allocator]) -> Type[Allocator]:
        cls.kind = kind
        ALLOCATORS[kind] = cls
        return cls
    return decorator


@register(AllocatorKind.UNIFORM)
class UniformAllocator(Allocator):

    @classmethod
    def create(cls, spec, n, horizon, seed):
        return cls(AllocatorState(kind=AllocatorKind.UNIFORM, allocation=Allocation.uniform(n),
                                  rng_seed=seed))

    def step(self, feedback, g, next_features=None):
        return uniform_step(self.state)


@register(AllocatorKind.GATED)
class GatedAllocator(Allocator):
    """softmax(G x_t) with gradient steps of size alpha * t^(-step_decay)"""

    needs_features = True

    @classmethod
    def create(cls, spec, n, horizon, seed):
        return cls(AllocatorState(kind=AllocatorKind.GATED, allocation=Allocation.uniform(n),
                                  gating=np.zeros((n, n)), alpha=spec.alpha,
                                  step_decay=spec.step_decay, rng_seed=seed))

    def start(self, features=None):
        if features is not None:
            self.state.allocation = Allocation.from_weights(softmax(self.state.gating @ features))
        return self.state.allocation

    def step(self, feedback, g, next_features=None):
        return gated_step(self.state, feedback, next_features)


@register(AllocatorKind.COMPETITIVE)
class CompetitiveAllocator(Allocator):

    @classmethod
    def create(cls, spec, n, horizon, seed):
        eta = spec.eta if spec.eta is not None else default_learning_rate(n, horizon)
        return cls(AllocatorState(kind=AllocatorKind.COMPETITIVE, allocation=Allocation.uniform(n),
                                  learning_rate=eta, anytime=spec.anytime, rng_seed=seed))

    def step(self, feedback, g, next_features=None):
        return competitive_step(self.state, feedback)


def create_allocator(spec: AllocatorSpec, n: int, horizon: int, seed: int) -> Allocator:
    try:
        cls = ALLOCATORS[spec.kind]
    except KeyError:
        raise ConfigError(f"unknown allocator kind {spec.kind!r}", field="allocator.kind") from None
    allocator = cls.create(spec, n, horizon, seed)
    logger.debug("allocator_created", kind=spec.kind.value, n=n, horizon=horizon,
                 learning_rate=allocator.state.learning_rate)
    return allocator
