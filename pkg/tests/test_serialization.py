import os
import sys

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

import orjson
import pytest

from endocost.errors import ConfigError
from endocost.models import (AllocatorKind, ExperimentConfig, ResultRow, TopologyKind, load_config,
                             validate_config)


def _row(**overrides):
    data = dict(topology="wuxing", n=5, m_directed=10, d_max=4, kappa=4, lam=0.05,
                allocator="competitive", environment="stationary", T=1024, seed=0,
                static_regret=1.25, dynamic_regret=3.5, truthfulness_gap=0.1,
                cost_units=15, cost_product=19200.0, wall_seconds=0.0)
    data.update(overrides)
    return ResultRow(**data)


def test_config_round_trip(tmp_path):
    config = validate_config({
        "graph": {"kind": "generalized-wuxing", "n": 8, "lambda": 0.05},
        "allocators": [{"kind": "uniform"}, {"kind": "competitive", "eta": 0.1}],
        "horizons": [1024, 2048],
        "seeds": [0, 1, 2],
    })
    path = tmp_path / "config.json"
    path.write_bytes(orjson.dumps(config.model_dump(by_alias=True, mode="json")))
    restored = load_config(path)
    assert restored == config
    assert restored.graph.kind == TopologyKind.GENERALIZED_WUXING
    assert restored.graph.lam == 0.05


def test_defaults_fill_in():
    config = ExperimentConfig()
    assert config.horizons == [1024]
    assert [a.kind for a in config.sweep_allocators()] == list(AllocatorKind)
    assert config.sweep_topologies() == [config.graph]


@pytest.mark.parametrize("data, field", [
    ({"horizons": [2048, 1024]}, "horizons"),
    ({"horizons": []}, "horizons"),
    ({"seeds": [-1]}, "seeds"),
    ({"allocator": {"kind": "competitive", "eta": 0}}, "allocator.eta"),
    ({"environment": {"kind": "interaction-dominant", "delta": 0.75}}, "environment.delta"),
    ({"graph": {"kind": "wuxing", "n": 6}}, "graph"),
    ({"graph": {"kind": "random-sparse", "n": 4}}, "graph"),
    ({"graph": {"kind": "wuxing", "n": 5, "w_sheng": -0.5}}, "graph.w_sheng"),
    ({"graph": {"kind": "generalized-wuxing", "n": 7, "w_ke": 0.25}}, "graph.w_ke"),
    ({"graph": {"kind": "ring", "n": 2}}, "graph.n"),
    ({"graph": {"kind": "generalized-wuxing", "n": 4}}, "graph.n"),
    ({"unexpected": True}, "unexpected"),
])
def test_invalid_configs_name_their_field(data, field):
    with pytest.raises(ConfigError) as info:
        validate_config(data)
    assert info.value.field == field


def test_topologies_must_share_size():
    with pytest.raises(ConfigError):
        validate_config({"graph": {"kind": "wuxing", "n": 5},
                         "topologies": [{"kind": "ring", "n": 6, "lambda": 0.05}]})


def test_overrides_revalidate():
    config = validate_config({"horizons": [64, 128], "seeds": [0, 1]})
    single = config.with_overrides(seed=7, horizon=256, allocator="uniform", topology="full")
    assert single.seeds == [7] and single.horizons == [256]
    assert single.allocator.kind == AllocatorKind.UNIFORM
    assert single.graph.kind == TopologyKind.FULL
    with pytest.raises(ConfigError):
        config.with_overrides(allocator="greedy")


def test_load_config_rejects_invalid_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(path)


def test_result_row_cells_use_shortest_repr():
    cells = _row(static_regret=0.1 + 0.2).csv_values()
    assert cells[10] == "0.30000000000000004"
    assert cells[5] == "0.05"
    assert _row(truthfulness_gap=None).csv_values()[12] == ""


def test_result_row_rejects_non_finite():
    with pytest.raises(ValueError):
        _row(static_regret=float("nan"))


def test_result_row_record_uses_lambda_key():
    record = _row().as_record()
    assert record["lambda"] == 0.05
    assert "constraint_violations" not in record


def test_settings_read_environment(monkeypatch):
    from config.config import Settings

    monkeypatch.setenv("ENDOCOST_WORKERS", "3")
    monkeypatch.setenv("ENDOCOST_SOLVER_TOLERANCE", "1e-9")
    monkeypatch.setenv("ENDOCOST_MAX_HORIZON_EXPONENT", "12")
    fresh = Settings()
    assert fresh.harness.workers == 3
    assert fresh.solver.tolerance == 1e-9
    assert fresh.harness.default_seed_count == 16
    assert fresh.default_horizons == [1024, 2048, 4096]
