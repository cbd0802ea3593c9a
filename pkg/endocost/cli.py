"""Command-line front end.

    endocost run | sweep | topology | truthfulness | validate --config FILE

stdout carries command output; logs and the single "error:" line go to
stderr. Exit codes: 0 success, 1 runtime failure, 2 bad config or
assumption violation, 3 failed validation.
"""
import functools
import math
import sys
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import click
from rich.console import Console
from rich.table import Table

from config.config import settings

from . import __version__
from .allocators import default_learning_rate
from .errors import AssumptionViolationError, ConfigError, EndocostError
from .graph import build_graph, validate_assumptions
from .harness import (bound_exceedances, build_tasks, horizon_sweep, predicted_cost_product, run_tasks,
                      topology_sweep, truthfulness_series, write_results, write_slopes)
from .metrics import metrics
from .models import EnvironmentKind, ExperimentConfig, RewardMode, load_config
from .observability import configure_logging, get_logger

logger = get_logger(__name__)

EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_VALIDATION = 3


def _fail(message: str, code: int) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def guarded(command: Callable) -> Callable:
    """Map exceptions onto exit codes with a single 'error:' line"""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except (ConfigError, AssumptionViolationError) as e:
            logger.info("command_rejected", error=e.message, **e.context)
            _fail(e.message, EXIT_CONFIG)
        except EndocostError as e:
            logger.info("command_failed", error=e.message, **e.context)
            _fail(e.message, EXIT_RUNTIME)
        except OSError as e:
            _fail(f"{e.filename or ''}: {e.strerror or e}".lstrip(": "), EXIT_RUNTIME)
        except Exception as e:
            logger.debug("command_crashed", exc_info=True)
            _fail(f"{type(e).__name__}: {e}", EXIT_RUNTIME)

    return wrapper


def experiment_options(command: Callable) -> Callable:
    options = [
        click.option("--config", "config_path", required=True, help="Experiment config (JSON)."),
        click.option("--out", "out_dir", default=None, help="Output directory (overrides the config)."),
        click.option("--seed", type=int, default=None, help="Run a single seed."),
        click.option("--horizon", type=int, default=None, help="Run a single horizon T."),
        click.option("--allocator", default=None, help="uniform | gated | competitive"),
        click.option("--topology", default=None,
                     help="full | ring | star | random-sparse | wuxing | generalized-wuxing"),
        click.option("--workers", type=int, default=None, envvar="ENDOCOST_WORKERS",
                     help="Concurrent runs (default: available CPUs)."),
        click.option("--trace", is_flag=True, help="Write per-round JSONL traces."),
        click.option("--allow-unsafe-lambda", is_flag=True,
                     help="Run even if lambda exceeds 1/(2N)."),
        click.option("--wall-clock", is_flag=True, help="Record elapsed seconds in results."),
    ]
    for option in reversed(options):
        command = option(command)
    return command


class Invocation:
    """Loaded config plus the resolved command-line options"""

    def __init__(self, config_path: str, out_dir: Optional[str], seed: Optional[int],
                 horizon: Optional[int], allocator: Optional[str], topology: Optional[str],
                 workers: Optional[int], trace: bool, allow_unsafe_lambda: bool, wall_clock: bool):
        if workers is not None and workers < 1:
            raise ConfigError("--workers must be >= 1", field="workers")
        if horizon is not None and horizon < 1:
            raise ConfigError("--horizon must be >= 1", field="horizons")
        config = load_config(config_path).with_overrides(seed=seed, horizon=horizon,
                                                        allocator=allocator, topology=topology)
        if allow_unsafe_lambda and not config.allow_unsafe_lambda:
            config = config.model_copy(update={"allow_unsafe_lambda": True})
        self.config: ExperimentConfig = config
        self.out_dir = Path(out_dir or config.outputs.out_dir)
        self.workers = workers or settings.harness.workers
        self.trace = trace or config.outputs.trace
        self.record_wall_clock = wall_clock or settings.harness.record_wall_clock

    @property
    def task_options(self) -> dict:
        return {
            "trace_dir": self.out_dir / "traces" if self.trace else None,
            "record_wall_clock": self.record_wall_clock,
        }

    def finish(self) -> None:
        if settings.metrics.enabled:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            metrics.write_textfile(self.out_dir / settings.metrics.textfile)


def _console() -> Console:
    return Console(file=sys.stdout, width=160, highlight=False)


def _fmt(value: Optional[float]) -> str:
    if value is None:
        return "n/a"
    return f"{value:.6g}"


TRUTHFULNESS_CAUSE = ("a fixed learning rate concentrates the allocation on the best module, so the gap "
                      "levels off at that vertex's distance from the marginal shares")
OUT_EDGE_CAUSE = ("out-edge rewards are not the payoff gradient, so the allocator cannot follow a comparator "
                  "that gains from cooperative links; reward_mode exact-gradient restores the bound")


def _verdict(holds: bool, cause: str) -> str:
    return "holds" if holds else f"fails ({cause})"


def _hierarchy_cause(config: ExperimentConfig) -> str:
    if config.reward_mode == RewardMode.OUT_EDGE:
        return OUT_EDGE_CAUSE
    return "a contextual policy can beat the best fixed allocation, which leaves no positive regret to fit"


def _bound_cause(config: ExperimentConfig) -> str:
    if config.reward_mode == RewardMode.OUT_EDGE:
        return OUT_EDGE_CAUSE
    return "the assumption checks in 'endocost validate' are likely not met"


@click.group()
@click.option("--log-level", default=None, help="DEBUG | INFO | WARNING | ERROR")
@click.version_option(__version__, prog_name="endocost")
def cli(log_level: Optional[str]) -> None:
    """Online resource allocation with endogenous, interaction-dependent costs."""
    configure_logging(log_level or settings.log_level, settings.environment, settings.log_file)


@cli.command()
@experiment_options
@guarded
def run(**options) -> None:
    """Run one (topology, allocator, T, seed) and append its row."""
    inv = Invocation(**options)
    config = inv.config
    tasks = build_tasks(config, graph_specs=[config.graph], allocator_specs=[config.allocator],
                        **inv.task_options)
    rows = run_tasks(tasks[:1], workers=1)
    write_results(rows, inv.out_dir, append=True)
    inv.finish()
    for row in rows:
        click.echo(
            f"topology={row.topology} allocator={row.allocator} environment={row.environment} "
            f"T={row.T} seed={row.seed} static_regret={_fmt(row.static_regret)} "
            f"dynamic_regret={_fmt(row.dynamic_regret)} truthfulness_gap={_fmt(row.truthfulness_gap)} "
            f"cost_product={_fmt(row.cost_product)}"
        )


@cli.command()
@experiment_options
@guarded
def sweep(**options) -> None:
    """Regret-vs-T for every allocator, with log-log slope fits."""
    inv = Invocation(**options)
    sweeps = [horizon_sweep(inv.config, spec, inv.workers, **inv.task_options)
              for spec in inv.config.sweep_allocators()]
    rows = sorted((row for s in sweeps for row in s.rows), key=lambda r: r.sort_key)
    write_results(rows, inv.out_dir)
    write_slopes(sweeps, inv.out_dir)
    inv.finish()

    exponents = {}
    for s in sweeps:
        if s.fit is None:
            click.echo(f"allocator={s.allocator} fit unavailable: {s.fit_error}")
            continue
        exponents[s.allocator] = s.fit.exponent
        click.echo(f"allocator={s.allocator} p={s.fit.exponent:.4f} c={s.fit.coefficient:.4g} "
                   f"r2={s.fit.r_squared:.4f}")
    order = [name for name in ("uniform", "gated", "competitive") if name in exponents]
    if len(order) > 1:
        holds = all(exponents[a] > exponents[b] for a, b in zip(order, order[1:]))
        click.echo(f"hierarchy {' > '.join(order)}: {_verdict(holds, _hierarchy_cause(inv.config))}")
    for s in sweeps:
        if s.allocator != "competitive":
            continue
        exceeded = bound_exceedances(s)
        if not exceeded:
            click.echo("competitive regret <= 2 sqrt(T ln n) + lambda m / sqrt(T): holds at every T")
            continue
        detail = ", ".join(f"T={T} regret={_fmt(r)} bound={_fmt(b)}" for T, (r, b) in exceeded.items())
        click.echo(f"competitive regret <= 2 sqrt(T ln n) + lambda m / sqrt(T): "
                   f"{_verdict(False, _bound_cause(inv.config))} at {detail}")


@cli.command()
@experiment_options
@guarded
def topology(**options) -> None:
    """Competitive allocator across topologies; cost-regret products."""
    inv = Invocation(**options)
    rows = topology_sweep(inv.config, inv.workers, **inv.task_options)
    write_results(rows, inv.out_dir)
    inv.finish()

    largest = max(inv.config.horizons)
    table = Table(title=f"cost-regret product at T={largest}")
    for column in ("topology", "n", "m", "d_max", "kappa", "static regret", "product",
                   "predicted", "constraints"):
        table.add_column(column)
    products = {}
    for spec in inv.config.sweep_topologies():
        at_largest = [r for r in rows if r.topology == spec.label and r.T == largest]
        if not at_largest:
            continue
        first = at_largest[0]
        mean_regret = sum(r.static_regret for r in at_largest) / len(at_largest)
        mean_product = sum(r.cost_product for r in at_largest) / len(at_largest)
        products[spec.label] = mean_product
        s = build_graph(spec).topology_stats
        predicted = predicted_cost_product(s, largest, first.n, first.lam)
        marker = ("VIOLATION: " + ", ".join(first.constraint_violations)
                  if first.constraint_violations else "ok")
        table.add_row(spec.label, str(first.n), str(first.m_directed), str(first.d_max),
                      str(first.kappa), _fmt(mean_regret), _fmt(mean_product),
                      "inf" if math.isinf(predicted) else _fmt(predicted), marker)
    _console().print(table)
    if "wuxing" in products and "full" in products:
        holds = products["wuxing"] <= products["full"]
        click.echo(f"wuxing product <= full product: "
                   f"{_verdict(holds, f'means over {len(inv.config.seeds)} seeds; add seeds or raise T')}")


@cli.command()
@experiment_options
@guarded
def truthfulness(**options) -> None:
    """Truthfulness gap of the competitive allocator versus T."""
    inv = Invocation(**options)
    if inv.config.environment.kind != EnvironmentKind.STATIONARY:
        logger.warning("non_stationary_truthfulness", environment=inv.config.environment.label)
        click.echo(f"warning: truthfulness guarantees assume a stationary environment, "
                   f"got {inv.config.environment.label}", err=True)
    report = truthfulness_series(inv.config, inv.workers, **inv.task_options)
    write_results(report.rows, inv.out_dir)
    inv.finish()

    for T, gap in report.mean_gap.items():
        ratio = report.ratio.get(T)
        click.echo(f"T={T} gap={_fmt(gap)} ratio={_fmt(ratio)}")
    if report.decreasing is not None:
        click.echo(f"gap(T_max) < gap(T_max/4): {_verdict(report.decreasing, TRUTHFULNESS_CAUSE)}")
    click.echo(f"ratio spread {_fmt(report.ratio_spread)} < 3: "
               f"{_verdict(report.bounded, TRUTHFULNESS_CAUSE)}")


def _validation_lines(config: ExperimentConfig) -> List[str]:
    """Human-readable problems; informational notes are printed but do not fail"""
    failures: List[str] = []
    for spec in config.sweep_topologies():
        try:
            g = build_graph(spec)
        except EndocostError as e:
            failures.append(f"{spec.label}: {e.message}")
            continue
        report = validate_assumptions(g)
        click.echo(f"{spec.label}: lambda*n={report.lambda_n:.6g} (<= 0.5: {report.spectral_proxy_ok}) "
                   f"||lambda W||_2={report.spectral_norm:.6g} curvature={report.curvature:.6g}")
        for note in report.notes:
            click.echo(f"  note: {note}")
        for violation in report.constraint_violations:
            click.echo(f"  note: topology constraint not met: {violation}")
        failures.extend(f"{spec.label}: {v}" for v in report.violations)

    env = config.environment
    if env.kind == EnvironmentKind.INTERACTION_DOMINANT and 0.5 - env.delta < 0.2:
        click.echo(f"  note: values reach {0.5 - env.delta:.3g}; truthfulness runs need >= 0.2")
    n = config.graph.n
    for spec in config.sweep_allocators():
        if spec.eta is not None:
            for T in config.horizons:
                tuned = default_learning_rate(n, T)
                if not math.isclose(spec.eta, tuned, rel_tol=1e-9):
                    click.echo(f"  note: {spec.label} eta={spec.eta:.6g} differs from "
                               f"sqrt(ln N / T)={tuned:.6g} at T={T}")
        if spec.anytime:
            click.echo(f"  note: {spec.label} uses the anytime rate sqrt(ln N / t)")
        if spec.alpha != 1.0 or not math.isclose(spec.step_decay, 1.0 / 3.0):
            click.echo(f"  note: {spec.label} step size {spec.alpha:.6g} * t^-{spec.step_decay:.6g} "
                       "departs from t^-1/3")
    return failures


@cli.command()
@click.option("--config", "config_path", required=True, help="Experiment config (JSON).")
@guarded
def validate(config_path: str) -> None:
    """Check assumptions without running anything."""
    config = load_config(config_path)
    failures = _validation_lines(config)
    if failures:
        for failure in failures:
            click.echo(f"violation: {failure}")
        _fail(f"{len(failures)} assumption violation(s)", EXIT_VALIDATION)
    click.echo("all assumptions satisfied")


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point; usage errors also get the 'error:' prefix"""
    try:
        cli.main(args=list(argv) if argv is not None else None, prog_name="endocost",
                 standalone_mode=False)
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.Abort:
        click.echo("error: aborted", err=True)
        return EXIT_RUNTIME
    except click.ClickException as e:
        click.echo(f"error: {e.format_message()}", err=True)
        return EXIT_CONFIG
    return 0
