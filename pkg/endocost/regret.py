"""Regret against fixed and per-round optimal allocations, truthfulness
gaps and the closed-form regret bounds.

The comparators are simplex-constrained quadratic programs. The payoff
need not be concave on the simplex, so every solve runs projected
gradient ascent from the uniform point and from each vertex and keeps
the best stationary point.
"""
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Protocol, Tuple

import numpy as np

from config.config import settings

from .errors import (DimensionMismatchError, IncompleteTraceError, NonPositiveMarginalError,
                     SolverConvergenceError)
from .graph import InteractionGraph
from .metrics import metrics
from .models import RewardMode
from .observability import get_logger
from .payoff import Allocation, ValueVector, as_array, payoff, reward

logger = get_logger(__name__)

KKT_ACTIVE_THRESHOLD = 1e-8


class TraceLike(Protocol):
    horizon: int
    allocations: np.ndarray
    values: np.ndarray
    payoffs: np.ndarray

    @property
    def complete(self) -> bool: ...


def project_simplex(y: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {a >= 0, sum(a) = 1} (sort-based)."""
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, len(y) + 1)
    rho = np.flatnonzero(u - css / k > 0)[-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(y - theta, 0.0)


@dataclass(frozen=True)
class QPSolution:
    allocation: np.ndarray
    objective: float
    iterations: int
    gradient_norm: float


@dataclass(frozen=True, eq=False)
class SimplexQP:
    """maximize linear . a + a^T quadratic a over the simplex"""
    linear: np.ndarray
    quadratic: np.ndarray
    lipschitz: float
    tolerance: float = 1e-10
    max_iterations: int = 100_000

    @classmethod
    def for_graph(cls, linear, g: InteractionGraph, tolerance: Optional[float] = None,
                  max_iterations: Optional[int] = None) -> "SimplexQP":
        c = as_array(linear)
        if c.shape != (g.n,):
            raise DimensionMismatchError(f"expected {g.n} linear coefficients, got {c.shape}")
        quadratic = g.lam * g.entries
        hessian_norm = float(np.linalg.norm(quadratic + quadratic.T, ord=2))
        return cls(
            linear=c,
            quadratic=quadratic,
            lipschitz=max(1.0 + g.lam * g.n, hessian_norm),
            tolerance=settings.solver.tolerance if tolerance is None else tolerance,
            max_iterations=settings.solver.max_iterations if max_iterations is None else max_iterations,
        )

    def objective(self, a: np.ndarray) -> float:
        return float(self.linear @ a + a @ self.quadratic @ a)

    def gradient(self, a: np.ndarray) -> np.ndarray:
        return self.linear + (self.quadratic + self.quadratic.T) @ a

    def solve_from(self, start: np.ndarray) -> QPSolution:
        a = np.array(start, dtype=np.float64)
        step = 1.0 / self.lipschitz
        grad_norm = math.inf
        for iteration in range(1, self.max_iterations + 1):
            nxt = project_simplex(a + step * self.gradient(a))
            # norm of the gradient mapping
            grad_norm = float(np.linalg.norm(nxt - a)) * self.lipschitz
            a = nxt
            if grad_norm <= self.tolerance:
                return QPSolution(a, self.objective(a), iteration, grad_norm)
        raise SolverConvergenceError(
            f"projected gradient ascent did not converge in {self.max_iterations} iterations",
            last_iterate=a, gradient_norm=grad_norm,
        )

    def solve(self) -> QPSolution:
        n = len(self.linear)
        starts = [np.full(n, 1.0 / n)] + list(np.eye(n))
        best: Optional[QPSolution] = None
        total_iterations = 0
        for start in starts:
            solution = self.solve_from(start)
            total_iterations += solution.iterations
            if best is None or solution.objective > best.objective:
                best = solution
        metrics.record_qp_solve(total_iterations)
        logger.debug("qp_solved", iterations=total_iterations, objective=best.objective,
                     gradient_norm=best.gradient_norm)
        return best


def kkt_residual(a, v, g: InteractionGraph) -> float:
    """Spread of the exact gradient over modules with a_i > 1e-8; zero at a stationary point."""
    a_arr = as_array(a)
    grad = reward(a_arr, v, g, RewardMode.EXACT).rewards
    active = grad[a_arr > KKT_ACTIVE_THRESHOLD]
    return float(active.max() - active.min()) if len(active) else 0.0


def _value_matrix(values) -> np.ndarray:
    if isinstance(values, np.ndarray):
        return values
    return np.array([as_array(v) for v in values], dtype=np.float64)


def best_fixed(values, g: InteractionGraph) -> Allocation:
    """argmax_a sum_t P(a, v_t); the sum only depends on the mean value vector"""
    seq = _value_matrix(values)
    if len(seq) == 0:
        raise IncompleteTraceError("no value vectors to optimize against")
    solution = SimplexQP.for_graph(seq.mean(axis=0), g).solve()
    return Allocation.from_weights(solution.allocation)


def per_round_opt(v, g: InteractionGraph) -> Tuple[Allocation, float]:
    solution = SimplexQP.for_graph(v, g).solve()
    a = Allocation.from_weights(solution.allocation)
    return a, payoff(a, v, g)


@dataclass
class RegretLedger:
    """Running totals for one run, with per-round optima cached by value vector"""
    graph: InteractionGraph
    allocator_total: float = 0.0
    best_fixed_total: float = 0.0
    per_round_opt_total: float = 0.0
    best_fixed_allocation: Optional[Allocation] = None
    _optima: Dict[bytes, float] = field(default_factory=dict, repr=False)

    def round_optimum(self, v: np.ndarray) -> float:
        key = v.tobytes()
        if key not in self._optima:
            self._optima[key] = per_round_opt(ValueVector(v), self.graph)[1]
        return self._optima[key]

    @property
    def static(self) -> float:
        return self.best_fixed_total - self.allocator_total

    @property
    def dynamic(self) -> float:
        return self.per_round_opt_total - self.allocator_total


def _require_complete(trace: TraceLike) -> None:
    if not trace.complete:
        raise IncompleteTraceError(f"trace is missing rounds (horizon {trace.horizon})")


def static_regret(trace: TraceLike, g: InteractionGraph,
                  ledger: Optional[RegretLedger] = None) -> float:
    _require_complete(trace)
    ledger = ledger or RegretLedger(g)
    a_star = best_fixed(trace.values, g)
    ledger.best_fixed_allocation = a_star
    ledger.allocator_total = float(np.sum(trace.payoffs))
    # sum_t P(a*, v_t) = T * P(a*, mean v)
    ledger.best_fixed_total = trace.horizon * payoff(a_star, trace.values.mean(axis=0), g)
    return ledger.static


def dynamic_regret(trace: TraceLike, g: InteractionGraph,
                   ledger: Optional[RegretLedger] = None) -> float:
    _require_complete(trace)
    ledger = ledger or RegretLedger(g)
    ledger.allocator_total = float(np.sum(trace.payoffs))
    ledger.per_round_opt_total = float(sum(ledger.round_optimum(v) for v in trace.values))
    if ledger.best_fixed_allocation is not None and ledger.dynamic < ledger.static - 1e-9:
        logger.warning("dynamic_below_static", static=ledger.static, dynamic=ledger.dynamic)
    return ledger.dynamic


def _truthfulness_deviations(trace: TraceLike, g: InteractionGraph,
                             window: Optional[int]) -> np.ndarray:
    _require_complete(trace)
    span = trace.horizon if window is None else min(window, trace.horizon)
    a = trace.allocations[:span]
    # marginal contributions mu_i = v_i + lambda sum_j W_ij a_j
    mu = trace.values[:span] + g.lam * a @ g.entries.T
    totals = mu.sum(axis=1)
    bad = np.flatnonzero(totals <= 0.0)
    if len(bad):
        t = int(bad[0]) + 1
        raise NonPositiveMarginalError(f"marginal contributions sum to {totals[bad[0]]!r} at round {t}",
                                       round_index=t)
    return np.abs(a - mu / totals[:, None])


def truthfulness_gap(trace: TraceLike, g: InteractionGraph, window: Optional[int] = None) -> float:
    """Average over rounds of sum_i |a_i - mu_i / sum_j mu_j|"""
    return float(_truthfulness_deviations(trace, g, window).sum(axis=1).mean())


def truthfulness_by_module(trace: TraceLike, g: InteractionGraph,
                           window: Optional[int] = None) -> np.ndarray:
    return _truthfulness_deviations(trace, g, window).mean(axis=0)


def competitive_bound(T: int, n: int, lam: float, m: int) -> float:
    return 2.0 * math.sqrt(T * math.log(n)) + lam * m / math.sqrt(T)


def topology_bound(T: int, n: int, lam: float, d_max: int, kappa: int) -> float:
    if kappa <= 0:
        return math.inf
    root = math.sqrt(T)
    return 2.0 * math.sqrt(T * math.log(n)) + lam * d_max * root + lam ** 2 * (n / kappa) * root


def gated_bound(T: int, n: int, lam: float, m: int) -> float:
    growth = T ** (2.0 / 3.0)
    return n * growth + lam ** 2 * m * growth


def feedback_lower_bound(T: int, n: int, m: int) -> float:
    return math.sqrt(T * math.log(n) / max(m, 1))


def dynamic_bound(T: int, variation: float) -> float:
    return math.sqrt(T * (1.0 + variation))


def hedge_bound(T: int, n: int, eta: float) -> float:
    """ln N / eta + eta T / 8, the multiplicative-weights bound for rewards in [0, 1]"""
    return math.log(n) / eta + eta * T / 8.0
