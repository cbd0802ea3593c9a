"""Value-vector sequences v_1..v_T.

Every environment draws its whole sequence up front from a seed stream of
its own, so a run is reproducible from (seed, T) alone and the allocator
never shares a generator with the environment.
"""
from dataclasses import dataclass
from typing import Iterable, Union

import numpy as np

from .errors import DimensionMismatchError, HorizonRangeError
from .models import EnvironmentKind, EnvironmentSpec
from .observability import get_logger
from .payoff import ValueVector

logger = get_logger(__name__)

ENVIRONMENT_STREAM = 1


def seeded_rng(seed: int, stream: int) -> np.random.Generator:
    """Independent generator for one (run seed, consumer) pair"""
    return np.random.default_rng(np.random.SeedSequence([seed, stream]))


@dataclass
class VariationTracker:
    """Running V_T = sum_t ||v_{t+1} - v_t||_inf"""
    total: float = 0.0
    steps: int = 0


def track_variation(tracker: VariationTracker,
                    previous: Union[ValueVector, np.ndarray],
                    current: Union[ValueVector, np.ndarray]) -> VariationTracker:
    prev = previous.values if isinstance(previous, ValueVector) else np.asarray(previous)
    cur = current.values if isinstance(current, ValueVector) else np.asarray(current)
    if prev.shape != cur.shape:
        raise DimensionMismatchError(f"value vectors differ in shape: {prev.shape} vs {cur.shape}")
    return VariationTracker(total=tracker.total + float(np.max(np.abs(cur - prev))),
                            steps=tracker.steps + 1)


def total_variation(values: Iterable) -> float:
    seq = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=np.float64)
    if len(seq) < 2:
        return 0.0
    return float(np.abs(np.diff(seq, axis=0)).max(axis=1).sum())


class Environment:
    """Deterministic value sequence for one run."""

    def __init__(self, spec: EnvironmentSpec, n: int, horizon: int, seed: int):
        if horizon < 1:
            raise HorizonRangeError(f"horizon must be >= 1, got {horizon}")
        self.spec = spec
        self.n = n
        self.horizon = horizon
        self.seed = seed
        rng = seeded_rng(seed, ENVIRONMENT_STREAM)
        generate = {
            EnvironmentKind.STATIONARY: self._stationary,
            EnvironmentKind.ALTERNATING: self._alternating,
            EnvironmentKind.BOUNDED_DRIFT: self._bounded_drift,
            EnvironmentKind.INTERACTION_DOMINANT: self._interaction_dominant,
        }[spec.kind]
        values = generate(rng)
        values.setflags(write=False)
        self._values = values
        logger.debug("environment_ready", kind=spec.kind.value, n=n, horizon=horizon,
                     seed=seed, variation=self.variation)

    @property
    def values(self) -> np.ndarray:
        """The full T x N sequence (read-only)"""
        return self._values

    @property
    def variation(self) -> float:
        return total_variation(self._values)

    def next_value(self, t: int) -> ValueVector:
        """v_t for 1-based round t"""
        if not 1 <= t <= self.horizon:
            raise HorizonRangeError(f"round {t} outside 1..{self.horizon}")
        return ValueVector(self._values[t - 1])

    def _stationary(self, rng: np.random.Generator) -> np.ndarray:
        if self.spec.values is not None:
            v = np.array(self.spec.values, dtype=np.float64)
            if v.shape != (self.n,):
                raise DimensionMismatchError(f"expected {self.n} stationary values, got {v.shape[0]}")
        else:
            v = rng.uniform(self.spec.min_value, 1.0, size=self.n)
        return np.tile(v, (self.horizon, 1))

    def _alternating(self, rng: np.random.Generator) -> np.ndarray:
        t = np.arange(1, self.horizon + 1)
        if self.spec.phase_length is None:
            second = t > self.horizon / 2
        else:
            second = ((t - 1) // self.spec.phase_length) % 2 == 1
        values = np.zeros((self.horizon, self.n))
        values[~second, 0] = 1.0
        values[second, 1] = 1.0
        return values

    def _bounded_drift(self, rng: np.random.Generator) -> np.ndarray:
        lo = self.spec.min_value
        drift = self.spec.variation_budget / (self.horizon - 1) if self.horizon > 1 else 0.0
        values = np.empty((self.horizon, self.n))
        values[0] = rng.uniform(lo, 1.0, size=self.n)
        steps = rng.uniform(-1.0, 1.0, size=(self.horizon - 1, self.n))
        for t in range(1, self.horizon):
            values[t] = np.clip(values[t - 1] + drift * steps[t - 1], lo, 1.0)
        return values

    def _interaction_dominant(self, rng: np.random.Generator) -> np.ndarray:
        signs = rng.integers(0, 2, size=(self.horizon, self.n)) * 2 - 1
        return 0.5 + self.spec.delta * signs


def next_value(env: Environment, t: int) -> ValueVector:
    return env.next_value(t)
