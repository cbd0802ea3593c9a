"""Run orchestration: one protocol run, sweeps over horizons and
topologies, a process pool for independent runs, slope fits and the
result writers.
"""
import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import orjson

from config.config import settings

from .allocators import FEATURE_STREAM, Feedback, create_allocator, make_features
from .environments import Environment, seeded_rng
from .errors import (AssumptionViolationError, ConfigError, IncompleteTraceError,
                     NonPositiveMarginalError, SlopeFitError)
from .graph import InteractionGraph, TopologyStats, build_graph, validate_assumptions
from .metrics import metrics
from .models import (RESULT_HEADER, AllocatorKind, AllocatorSpec, EnvironmentKind, ExperimentConfig,
                     FeatureScheme, GraphSpec, ResultRow)
from .observability import configure_logging, get_logger, log_run_completed
from .payoff import payoff, reward
from .regret import (RegretLedger, competitive_bound, dynamic_regret, static_regret, topology_bound,
                     truthfulness_gap)

logger = get_logger(__name__)

TRUTHFULNESS_VALUE_FLOOR = 0.2
MIN_FIT_POINTS = 4


@dataclass(frozen=True)
class RoundRecord:
    t: int
    allocation: np.ndarray
    values: np.ndarray
    rewards: np.ndarray
    payoff: float


@dataclass(eq=False)
class RunTrace:
    """Per-round arrays of one run; row t-1 holds round t"""
    horizon: int
    n: int
    allocations: np.ndarray = field(init=False)
    values: np.ndarray = field(init=False)
    rewards: np.ndarray = field(init=False)
    payoffs: np.ndarray = field(init=False)
    rounds_recorded: int = 0

    def __post_init__(self):
        self.allocations = np.zeros((self.horizon, self.n))
        self.values = np.zeros((self.horizon, self.n))
        self.rewards = np.zeros((self.horizon, self.n))
        self.payoffs = np.zeros(self.horizon)

    def record(self, t: int, allocation: np.ndarray, values: np.ndarray,
               rewards: np.ndarray, round_payoff: float) -> None:
        if t != self.rounds_recorded + 1:
            raise IncompleteTraceError(f"expected round {self.rounds_recorded + 1}, got {t}")
        row = t - 1
        self.allocations[row] = allocation
        self.values[row] = values
        self.rewards[row] = rewards
        self.payoffs[row] = round_payoff
        self.rounds_recorded = t

    @property
    def complete(self) -> bool:
        return self.rounds_recorded == self.horizon

    def records(self) -> Iterator[RoundRecord]:
        for row in range(self.rounds_recorded):
            yield RoundRecord(row + 1, self.allocations[row], self.values[row],
                              self.rewards[row], float(self.payoffs[row]))


def per_step_cost_units(g: InteractionGraph) -> int:
    """One unit per module evaluation plus one per directed edge"""
    return g.n + g.m


def cost_product(T: int, cost_units: int, regret: float) -> float:
    return T * cost_units * regret


def predicted_cost_product(s: TopologyStats, T: int, n: int, lam: float) -> float:
    return T * (n + s.m_directed) * topology_bound(T, n, lam, s.d_max, s.kappa)


def check_assumptions(g: InteractionGraph, allow_unsafe: bool) -> None:
    report = validate_assumptions(g)
    if report.passed:
        return
    if not allow_unsafe:
        raise AssumptionViolationError("; ".join(report.violations), report=report)
    logger.warning("assumptions_violated", topology=g.topology, violations=report.violations)


def feature_scheme_for(spec: AllocatorSpec, config: ExperimentConfig) -> FeatureScheme:
    if spec.feature_scheme is not None:
        return spec.feature_scheme
    if config.environment.kind == EnvironmentKind.INTERACTION_DOMINANT:
        return FeatureScheme.UNINFORMATIVE
    return FeatureScheme.NOISY_VALUE


def run_once(config: ExperimentConfig, T: int, seed: int,
             graph_spec: Optional[GraphSpec] = None,
             allocator_spec: Optional[AllocatorSpec] = None,
             record_wall_clock: bool = False,
             require_truthful_floor: bool = False) -> Tuple[RunTrace, ResultRow]:
    """Run the protocol for T rounds and evaluate the trace."""
    graph_spec = graph_spec or config.graph
    allocator_spec = allocator_spec or config.allocator
    g = build_graph(graph_spec)
    check_assumptions(g, config.allow_unsafe_lambda)

    env = Environment(config.environment, g.n, T, seed)
    if require_truthful_floor and env.values.min() < TRUTHFULNESS_VALUE_FLOOR:
        raise ConfigError(f"truthfulness runs need every value >= {TRUTHFULNESS_VALUE_FLOOR}, "
                          f"environment reaches {env.values.min()!r}", field="environment")

    allocator = create_allocator(allocator_spec, g.n, T, seed)
    features = None
    if allocator.needs_features:
        scheme = feature_scheme_for(allocator_spec, config)
        rng = seeded_rng(seed, FEATURE_STREAM)
        features = np.array([make_features(env.next_value(t), scheme, rng, allocator_spec.feature_noise)
                             for t in range(1, T + 1)])

    started = time.perf_counter()
    trace = RunTrace(T, g.n)
    a = allocator.start(None if features is None else features[0])
    for t in range(1, T + 1):
        v = env.next_value(t)
        p = payoff(a, v, g)
        r = reward(a, v, g, config.reward_mode)
        trace.record(t, a.weights, v.values, r.rewards, p)
        if t < T:
            x = None if features is None else features[t - 1]
            nxt = None if features is None else features[t]
            a = allocator.step(Feedback(v, r, p, x), g, nxt)
    elapsed = time.perf_counter() - started

    ledger = RegretLedger(g)
    static = static_regret(trace, g, ledger)
    dynamic = dynamic_regret(trace, g, ledger)
    try:
        gap = truthfulness_gap(trace, g, config.truthfulness_window)
    except NonPositiveMarginalError as e:
        if require_truthful_floor:
            raise
        logger.warning("truthfulness_undefined", round_index=e.round_index, seed=seed, horizon=T)
        gap = None

    s = g.topology_stats
    units = per_step_cost_units(g)
    row = ResultRow(
        topology=graph_spec.label, n=g.n, m_directed=s.m_directed, d_max=s.d_max, kappa=s.kappa,
        lam=g.lam, allocator=allocator_spec.label, environment=config.environment.label,
        T=T, seed=seed, static_regret=static, dynamic_regret=dynamic, truthfulness_gap=gap,
        cost_units=units, cost_product=cost_product(T, units, static),
        wall_seconds=elapsed if record_wall_clock else 0.0,
        constraint_violations=tuple(validate_assumptions(g).constraint_violations),
    )
    log_run_completed(logger, row, elapsed)
    return trace, row


@dataclass(frozen=True)
class RunTask:
    config: ExperimentConfig
    horizon: int
    seed: int
    graph_spec: GraphSpec
    allocator_spec: AllocatorSpec
    trace_path: Optional[str] = None
    record_wall_clock: bool = False
    require_truthful_floor: bool = False

    @property
    def run_id(self) -> str:
        return (f"{self.graph_spec.label}-{self.allocator_spec.label}-"
                f"{self.config.environment.label}-T{self.horizon}-s{self.seed}")


@dataclass(frozen=True)
class RunOutcome:
    row: ResultRow
    elapsed: float


def execute_task(task: RunTask) -> RunOutcome:
    started = time.perf_counter()
    trace, row = run_once(task.config, task.horizon, task.seed, task.graph_spec, task.allocator_spec,
                          record_wall_clock=task.record_wall_clock,
                          require_truthful_floor=task.require_truthful_floor)
    if task.trace_path:
        write_trace(trace, task.trace_path)
    return RunOutcome(row, time.perf_counter() - started)


def build_tasks(config: ExperimentConfig,
                graph_specs: Optional[Sequence[GraphSpec]] = None,
                allocator_specs: Optional[Sequence[AllocatorSpec]] = None,
                trace_dir: Optional[Union[str, Path]] = None,
                record_wall_clock: bool = False,
                require_truthful_floor: bool = False) -> List[RunTask]:
    """Cross product of topologies x allocators x horizons x seeds"""
    tasks = []
    for graph_spec in graph_specs or [config.graph]:
        for allocator_spec in allocator_specs or [config.allocator]:
            for horizon in config.horizons:
                for seed in config.seeds:
                    task = RunTask(config, horizon, seed, graph_spec, allocator_spec,
                                   record_wall_clock=record_wall_clock,
                                   require_truthful_floor=require_truthful_floor)
                    if trace_dir is not None:
                        task = replace(task, trace_path=str(Path(trace_dir) / f"{task.run_id}.jsonl"))
                    tasks.append(task)
    return tasks


def run_tasks(tasks: Sequence[RunTask], workers: Optional[int] = None) -> List[ResultRow]:
    """Execute independent runs, at most `workers` at a time; rows come back sorted."""
    workers = workers or settings.harness.workers
    pool_size = max(1, min(workers, len(tasks)))
    logger.info("runs_started", tasks=len(tasks), workers=pool_size)
    outcomes: List[RunOutcome] = []
    if pool_size == 1:
        for task in tasks:
            with metrics.time_run(task.allocator_spec.label):
                outcome = execute_task(task)
            metrics.record_rounds(outcome.row.allocator, outcome.row.T)
            outcomes.append(outcome)
    else:
        with ProcessPoolExecutor(max_workers=pool_size, initializer=configure_logging,
                                 initargs=(settings.log_level, settings.environment, None)) as pool:
            futures = [(task, pool.submit(execute_task, task)) for task in tasks]
            for task, future in futures:
                try:
                    outcome = future.result()
                except Exception:
                    metrics.record_failure(task.allocator_spec.label)
                    raise
                metrics.record_run(outcome.row.allocator, outcome.row.T, outcome.elapsed)
                outcomes.append(outcome)
    return sorted((o.row for o in outcomes), key=lambda r: r.sort_key)


@dataclass(frozen=True)
class SlopeFit:
    exponent: float
    coefficient: float
    r_squared: float


def slope_fit(points: Sequence[Tuple[float, float]]) -> SlopeFit:
    """Least-squares fit of log R = log c + p log T"""
    if len(points) < MIN_FIT_POINTS:
        raise SlopeFitError(f"need at least {MIN_FIT_POINTS} points, got {len(points)}")
    horizons = np.array([p[0] for p in points], dtype=np.float64)
    regrets = np.array([p[1] for p in points], dtype=np.float64)
    if (horizons <= 0).any() or (regrets <= 0).any():
        raise SlopeFitError("slope fit needs positive horizons and regrets")
    x, y = np.log(horizons), np.log(regrets)
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    total = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 - float(np.sum(residual ** 2)) / total if total > 0 else 1.0
    return SlopeFit(float(slope), math.exp(intercept), r_squared)


def mean_regret_by_horizon(rows: Sequence[ResultRow], dynamic: bool = False) -> Dict[int, float]:
    grouped: Dict[int, List[float]] = {}
    for row in rows:
        grouped.setdefault(row.T, []).append(row.dynamic_regret if dynamic else row.static_regret)
    return {T: float(np.mean(values)) for T, values in sorted(grouped.items())}


@dataclass
class SweepResult:
    allocator: str
    rows: List[ResultRow]
    mean_regret: Dict[int, float]
    fit: Optional[SlopeFit]
    fit_error: Optional[str] = None


def horizon_sweep(config: ExperimentConfig, allocator_spec: AllocatorSpec,
                  workers: Optional[int] = None, **task_options) -> SweepResult:
    logger.info("sweep_started", allocator=allocator_spec.label, horizons=config.horizons,
                seeds=len(config.seeds))
    rows = run_tasks(build_tasks(config, allocator_specs=[allocator_spec], **task_options), workers)
    means = mean_regret_by_horizon(rows)
    try:
        fit, error = slope_fit(list(means.items())), None
    except SlopeFitError as e:
        fit, error = None, e.message
    return SweepResult(allocator_spec.label, rows, means, fit, error)


def bound_exceedances(sweep: SweepResult) -> Dict[int, Tuple[float, float]]:
    """Horizons whose mean regret is above 2 sqrt(T ln n) + lambda m / sqrt(T), as (regret, bound)"""
    exceeded = {}
    for T, regret in sweep.mean_regret.items():
        row = next(r for r in sweep.rows if r.T == T)
        bound = competitive_bound(T, row.n, row.lam, row.m_directed)
        if regret > bound + 1e-6:
            exceeded[T] = (regret, bound)
    return exceeded


def topology_sweep(config: ExperimentConfig, workers: Optional[int] = None,
                   **task_options) -> List[ResultRow]:
    """Competitive allocator on every configured topology"""
    competitive = config.allocator.model_copy(update={"kind": AllocatorKind.COMPETITIVE})
    tasks = build_tasks(config, graph_specs=config.sweep_topologies(), allocator_specs=[competitive],
                        **task_options)
    return run_tasks(tasks, workers)


@dataclass
class TruthfulnessReport:
    rows: List[ResultRow]
    mean_gap: Dict[int, float]
    ratio: Dict[int, float]
    decreasing: Optional[bool]
    bounded: bool

    @property
    def ratio_spread(self) -> float:
        values = [r for r in self.ratio.values() if r > 0]
        return max(values) / min(values) if values else math.inf


def truthfulness_series(config: ExperimentConfig, workers: Optional[int] = None,
                        **task_options) -> TruthfulnessReport:
    """Gap per horizon, normalised by ln T / sqrt(T)"""
    competitive = config.allocator.model_copy(update={"kind": AllocatorKind.COMPETITIVE})
    rows = run_tasks(build_tasks(config, allocator_specs=[competitive], require_truthful_floor=True,
                                 **task_options), workers)
    grouped: Dict[int, List[float]] = {}
    for row in rows:
        grouped.setdefault(row.T, []).append(row.truthfulness_gap)
    mean_gap = {T: float(np.mean(gaps)) for T, gaps in sorted(grouped.items())}
    ratio = {T: gap * math.sqrt(T) / math.log(T) for T, gap in mean_gap.items() if T > 1}
    largest = max(mean_gap)
    decreasing = mean_gap[largest] < mean_gap[largest // 4] if largest // 4 in mean_gap else None
    report = TruthfulnessReport(rows, mean_gap, ratio, decreasing, False)
    report.bounded = report.ratio_spread < 3.0
    return report


def write_results(rows: Sequence[ResultRow], out_dir: Union[str, Path], append: bool = False) -> None:
    """results.csv and results.jsonl under out_dir"""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "results.csv"
    fresh = not append or not csv_path.exists() or csv_path.stat().st_size == 0
    mode = "w" if not append else "a"
    with open(csv_path, mode, newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        if fresh:
            writer.writerow(RESULT_HEADER)
        for row in rows:
            writer.writerow(row.csv_values())
    with open(out / "results.jsonl", "ab" if append else "wb") as f:
        for row in rows:
            f.write(orjson.dumps(row.as_record()) + b"\n")
    logger.info("results_written", path=str(csv_path), rows=len(rows))


def write_trace(trace: RunTrace, path: Union[str, Path]) -> None:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, "wb") as f:
        for record in trace.records():
            f.write(orjson.dumps({
                "t": record.t,
                "a": record.allocation.tolist(),
                "v": record.values.tolist(),
                "reward": record.rewards.tolist(),
                "payoff": record.payoff,
            }) + b"\n")


def write_slopes(sweeps: Sequence[SweepResult], out_dir: Union[str, Path]) -> Path:
    path = Path(out_dir) / "slopes.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(("allocator", "exponent", "coefficient", "r_squared"))
        for sweep in sweeps:
            if sweep.fit is None:
                writer.writerow((sweep.allocator, "", "", ""))
            else:
                writer.writerow((sweep.allocator, repr(sweep.fit.exponent),
                                 repr(sweep.fit.coefficient), repr(sweep.fit.r_squared)))
    return path
