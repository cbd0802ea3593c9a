#!/usr/bin/env python3
"""
Write the sample experiment configs under configs/ and smoke-test one of them
"""

import os
import sys
from pathlib import Path
from typing import Dict

import orjson

# Add the repo root to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from config.config import settings
from endocost.harness import run_once
from endocost.models import (AllocatorSpec, EnvironmentSpec, ExperimentConfig, GraphSpec,
                             TopologyKind, EnvironmentKind, AllocatorKind)

FULL_GRID = settings.default_horizons
SEEDS = list(range(settings.harness.default_seed_count))
WUXING = GraphSpec(kind=TopologyKind.WUXING, n=5, lam=0.05)


def create_sample_configs() -> Dict[str, ExperimentConfig]:
    """Configs for the separation, topology and truthfulness experiments"""
    configs = {}

    # 1. Regret separation of the three allocators
    configs["separation"] = ExperimentConfig(
        name="separation",
        graph=WUXING,
        environment=EnvironmentSpec(kind=EnvironmentKind.ALTERNATING),
        horizons=FULL_GRID,
        seeds=SEEDS,
    )
    configs["separation_interaction"] = ExperimentConfig(
        name="separation_interaction",
        graph=WUXING,
        environment=EnvironmentSpec(kind=EnvironmentKind.INTERACTION_DOMINANT, delta=0.25),
        horizons=FULL_GRID,
        seeds=SEEDS,
    )

    # 2. Cost-regret product across topologies at n = 5
    configs["topology"] = ExperimentConfig(
        name="topology",
        graph=WUXING,
        topologies=[
            WUXING,
            GraphSpec(kind=TopologyKind.FULL, n=5, lam=0.05),
            GraphSpec(kind=TopologyKind.RING, n=5, lam=0.05),
            GraphSpec(kind=TopologyKind.STAR, n=5, lam=0.05),
            GraphSpec(kind=TopologyKind.RANDOM_SPARSE, n=5, lam=0.05, m_target=10, seed=7),
        ],
        environment=EnvironmentSpec(kind=EnvironmentKind.STATIONARY, min_value=0.2),
        horizons=[2**12, 2**13, 2**14],
        seeds=SEEDS,
    )

    # 3. Truthfulness convergence
    configs["truthfulness"] = ExperimentConfig(
        name="truthfulness",
        graph=WUXING,
        environment=EnvironmentSpec(kind=EnvironmentKind.STATIONARY, min_value=0.2),
        allocator=AllocatorSpec(kind=AllocatorKind.COMPETITIVE),
        horizons=FULL_GRID,
        seeds=SEEDS,
    )

    # 4. Seconds-long smoke run
    configs["smoke"] = ExperimentConfig(
        name="smoke",
        graph=WUXING,
        environment=EnvironmentSpec(kind=EnvironmentKind.STATIONARY, min_value=0.2),
        horizons=[256, 512, 1024, 2048],
        seeds=[0, 1],
    )
    return configs


def write_configs(configs: Dict[str, ExperimentConfig], target: Path) -> None:
    target.mkdir(parents=True, exist_ok=True)
    for name, config in configs.items():
        data = config.model_dump(by_alias=True, mode="json", exclude_none=True)
        (target / f"{name}.json").write_bytes(orjson.dumps(data, option=orjson.OPT_INDENT_2) + b"\n")
        print(f"wrote {target / name}.json")


def main():
    configs = create_sample_configs()
    write_configs(configs, Path(__file__).resolve().parent.parent / "configs")

    _, row = run_once(configs["smoke"], T=256, seed=0)
    print(f"smoke run: static_regret={row.static_regret:.4f} dynamic_regret={row.dynamic_regret:.4f}")


if __name__ == "__main__":
    try:
        main()
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        sys.exit(1)
