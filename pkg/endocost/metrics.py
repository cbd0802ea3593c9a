import time
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Union

from prometheus_client import CollectorRegistry, Counter, Histogram, Info, write_to_textfile

from . import __version__
from .observability import get_logger

logger = get_logger(__name__)

REGISTRY = CollectorRegistry()

RUNS = Counter(
    'endocost_runs_total',
    'Completed simulation runs',
    ['allocator', 'status'],
    registry=REGISTRY
)

RUN_DURATION = Histogram(
    'endocost_run_duration_seconds',
    'Wall-clock time of one simulation run',
    ['allocator'],
    buckets=[0.01, 0.05, 0.1, 0.25, 0.5, 1.0, 2.5, 5.0, 10.0, 30.0, 60.0],
    registry=REGISTRY
)

ROUNDS = Counter(
    'endocost_rounds_total',
    'Protocol rounds simulated',
    ['allocator'],
    registry=REGISTRY
)

QP_ITERATIONS = Histogram(
    'endocost_qp_iterations',
    'Projected gradient iterations per simplex QP solve',
    buckets=[1, 10, 100, 1000, 10000, 100000],
    registry=REGISTRY
)

SERVICE_INFO = Info(
    'endocost',
    'Simulator information',
    registry=REGISTRY
)


class MetricsCollector:
    """Centralized metrics collection"""

    def __init__(self):
        SERVICE_INFO.info({'version': __version__})

    @contextmanager
    def time_run(self, allocator: str) -> Iterator[None]:
        """Context manager for timing a run"""
        start_time = time.perf_counter()
        try:
            yield
            RUNS.labels(allocator=allocator, status='success').inc()
        except Exception:
            RUNS.labels(allocator=allocator, status='error').inc()
            raise
        finally:
            RUN_DURATION.labels(allocator=allocator).observe(time.perf_counter() - start_time)

    def record_run(self, allocator: str, horizon: int, elapsed: float) -> None:
        """Record a run finished elsewhere (worker process)"""
        RUNS.labels(allocator=allocator, status='success').inc()
        RUN_DURATION.labels(allocator=allocator).observe(elapsed)
        ROUNDS.labels(allocator=allocator).inc(horizon)

    def record_failure(self, allocator: str) -> None:
        RUNS.labels(allocator=allocator, status='error').inc()

    def record_rounds(self, allocator: str, horizon: int) -> None:
        ROUNDS.labels(allocator=allocator).inc(horizon)

    def record_qp_solve(self, iterations: int) -> None:
        QP_ITERATIONS.observe(iterations)

    def write_textfile(self, path: Union[str, Path]) -> None:
        """Dump the registry in Prometheus text format"""
        write_to_textfile(str(path), REGISTRY)
        logger.debug("metrics_written", path=str(path))


# Global metrics collector
metrics = MetricsCollector()
