"""Long-horizon sweeps pinning the measured regret, bound and truthfulness behaviour.

Run with `pytest -m slow`; the default run skips them.
"""
import os
import sys

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

import numpy as np
import pytest

from endocost.harness import bound_exceedances, horizon_sweep, topology_sweep, truthfulness_series
from endocost.models import AllocatorKind, AllocatorSpec, validate_config

pytestmark = pytest.mark.slow

WUXING = {"kind": "wuxing", "n": 5, "lambda": 0.05}


def _config(**overrides):
    data = {
        "name": "acceptance",
        "graph": WUXING,
        "environment": {"kind": "alternating"},
        "horizons": [2**k for k in range(10, 16)],
        "seeds": [0, 1, 2, 3],
    }
    data.update(overrides)
    return validate_config(data)


def _sweep(config, kind):
    return horizon_sweep(config, AllocatorSpec(kind=kind))


def test_uniform_regret_is_linear_on_alternating_values():
    sweep = _sweep(_config(), AllocatorKind.UNIFORM)
    assert sweep.fit is not None
    assert 0.9 <= sweep.fit.exponent <= 1.1


def test_competitive_out_edge_regret_grows_faster_than_square_root():
    # the comparator collects cooperative interaction that out-edge rewards never point to
    sweep = _sweep(_config(), AllocatorKind.COMPETITIVE)
    assert sweep.fit is not None
    assert 0.6 < sweep.fit.exponent < 0.95


def test_gated_policy_beats_fixed_comparator_on_alternating_values():
    sweep = _sweep(_config(), AllocatorKind.GATED)
    assert all(regret < 0 for regret in sweep.mean_regret.values())
    assert sweep.fit is None
    assert sweep.fit_error


def test_out_edge_competitive_regret_leaves_the_bound_after_two_to_the_fourteen():
    config = _config(horizons=[2**14, 2**15, 2**16], seeds=[0])
    sweep = _sweep(config, AllocatorKind.COMPETITIVE)
    regret = sweep.mean_regret
    assert regret[2**14] == pytest.approx(296.13, abs=1.0)
    assert regret[2**15] == pytest.approx(538.49, abs=1.0)
    assert regret[2**16] == pytest.approx(1001.21, abs=1.0)
    exceeded = bound_exceedances(sweep)
    assert sorted(exceeded) == [2**15, 2**16]
    assert exceeded[2**15][1] == pytest.approx(459.30, abs=0.01)
    assert exceeded[2**16][1] == pytest.approx(649.54, abs=0.01)
    assert regret[2**16] / regret[2**15] > 1.7


def test_exact_gradient_competitive_regret_stays_below_bound():
    config = _config(horizons=[2**14, 2**15, 2**16], seeds=[0], reward_mode="exact-gradient")
    sweep = _sweep(config, AllocatorKind.COMPETITIVE)
    assert all(regret < 0 for regret in sweep.mean_regret.values())
    assert bound_exceedances(sweep) == {}


def test_fixed_rate_truthfulness_gap_levels_off():
    config = _config(environment={"kind": "stationary", "min_value": 0.2},
                     horizons=[2**k for k in range(10, 15)])
    report = truthfulness_series(config)
    assert report.decreasing is False
    assert report.bounded is False
    assert report.ratio[2**14] > report.ratio[2**12]


def test_wuxing_cost_product_below_full_graph():
    config = _config(environment={"kind": "stationary", "min_value": 0.2},
                     topologies=[WUXING,
                                 {"kind": "star", "n": 5, "lambda": 0.05},
                                 {"kind": "full", "n": 5, "lambda": 0.05}],
                     horizons=[2**14], seeds=list(range(8)))
    rows = topology_sweep(config)
    product = {name: np.mean([r.cost_product for r in rows if r.topology == name])
               for name in ("wuxing", "star", "full")}
    assert product["wuxing"] <= product["full"]
    assert all(r.constraint_violations for r in rows if r.topology == "star")
    assert not any(r.constraint_violations for r in rows if r.topology == "wuxing")
