"""Coupled payoff, endogenous costs and interaction-enriched rewards.

    P(a, v; W) = sum_i a_i v_i + lambda * sum_{(i,j) in E} W_ij a_i a_j

All functions are pure; edges are summed in the graph's sorted order so
results are bit-reproducible.
"""
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DimensionMismatchError, SimplexViolationError, ValueRangeError
from .graph import InteractionGraph
from .models import RewardMode

SIMPLEX_TOLERANCE = 1e-12
RENORMALIZE_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class Allocation:
    weights: np.ndarray

    @classmethod
    def from_weights(cls, weights) -> "Allocation":
        """Check simplex membership, renormalizing small drift in the sum."""
        w = np.array(weights, dtype=np.float64)
        if w.ndim != 1 or w.size < 1:
            raise DimensionMismatchError(f"allocation must be a non-empty vector, got shape {w.shape}")
        if not np.isfinite(w).all():
            raise SimplexViolationError("allocation has non-finite entries")
        if (w < -SIMPLEX_TOLERANCE).any():
            raise SimplexViolationError(f"allocation has negative entry {w.min()!r}")
        w = np.maximum(w, 0.0)
        drift = abs(w.sum() - 1.0)
        if drift > RENORMALIZE_TOLERANCE:
            raise SimplexViolationError(f"allocation sums to {w.sum()!r}", drift=drift)
        if drift > SIMPLEX_TOLERANCE:
            w = w / w.sum()
        w.setflags(write=False)
        return cls(w)

    @classmethod
    def uniform(cls, n: int) -> "Allocation":
        return cls.from_weights(np.full(n, 1.0 / n))

    @property
    def n(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True, eq=False)
class ValueVector:
    values: np.ndarray

    @classmethod
    def from_values(cls, values) -> "ValueVector":
        v = np.array(values, dtype=np.float64)
        if v.ndim != 1:
            raise DimensionMismatchError(f"value vector must be 1-d, got shape {v.shape}")
        if not ((v >= 0.0) & (v <= 1.0)).all():
            raise ValueRangeError(f"values must lie in [0, 1], got {v.tolist()}")
        v.setflags(write=False)
        return cls(v)


@dataclass(frozen=True, eq=False)
class RewardVector:
    rewards: np.ndarray
    mode: RewardMode = RewardMode.OUT_EDGE


VectorLike = Union[Allocation, ValueVector, np.ndarray, list, tuple]


def as_array(x: VectorLike) -> np.ndarray:
    if isinstance(x, Allocation):
        return x.weights
    if isinstance(x, ValueVector):
        return x.values
    return np.asarray(x, dtype=np.float64)


def _operands(a: VectorLike, v: VectorLike, g: InteractionGraph):
    a_arr, v_arr = as_array(a), as_array(v)
    if a_arr.shape != (g.n,) or v_arr.shape != (g.n,):
        raise DimensionMismatchError(
            f"expected vectors of length {g.n}, got allocation {a_arr.shape} and values {v_arr.shape}"
        )
    return a_arr, v_arr


def interaction_term(a: np.ndarray, g: InteractionGraph) -> float:
    """sum over sorted edges of W_ij a_i a_j (without lambda)"""
    return float(np.sum(g.weights * a[g.rows] * a[g.cols]))


def payoff(a: VectorLike, v: VectorLike, g: InteractionGraph) -> float:
    a_arr, v_arr = _operands(a, v, g)
    return float(np.dot(a_arr, v_arr)) + g.lam * interaction_term(a_arr, g)


def reward(a: VectorLike, v: VectorLike, g: InteractionGraph,
           mode: RewardMode = RewardMode.OUT_EDGE) -> RewardVector:
    """Interaction-enriched reward.

    The default mode counts out-edges only (r_i = v_i + lambda sum_j W_ij a_j);
    exact-gradient is the true partial derivative of the payoff, which also
    picks up in-edges. The two agree when W is symmetric.
    """
    a_arr, v_arr = _operands(a, v, g)
    coupling = g.entries @ a_arr
    if mode == RewardMode.EXACT:
        coupling = coupling + g.entries.T @ a_arr
    return RewardVector(v_arr + g.lam * coupling, mode)


def endogenous_cost(a: VectorLike, v: VectorLike, g: InteractionGraph) -> np.ndarray:
    """c_i = -v_i - lambda sum_j W_ij a_j"""
    return -reward(a, v, g, RewardMode.OUT_EDGE).rewards
