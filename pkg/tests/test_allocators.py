import math
import os
import sys

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

import numpy as np
import pytest

from endocost.allocators import (ALLOCATORS, AllocatorState, CompetitiveAllocator, Feedback,
                                 GatedAllocator, UniformAllocator, competitive_step, create_allocator,
                                 default_learning_rate, gate_direction, gated_step, gating_gradient,
                                 make_features, softmax)
from endocost.errors import NonFiniteRewardError
from endocost.graph import InteractionGraph, build_full, build_wuxing
from endocost.models import AllocatorKind, AllocatorSpec, FeatureScheme, RewardMode
from endocost.payoff import Allocation, RewardVector, ValueVector, payoff, reward
from endocost.regret import hedge_bound


def _competitive(weights, eta, anytime=False, round_index=1):
    return AllocatorState(kind=AllocatorKind.COMPETITIVE, allocation=Allocation.from_weights(weights),
                          learning_rate=eta, anytime=anytime, round_index=round_index)


def _feedback(rewards, n=None):
    r = np.asarray(rewards, dtype=np.float64)
    v = ValueVector(np.clip(r, 0.0, 1.0))
    return Feedback(v, RewardVector(r), 0.0)


def test_registry_has_every_kind():
    assert set(ALLOCATORS) == set(AllocatorKind)
    assert ALLOCATORS[AllocatorKind.UNIFORM] is UniformAllocator
    assert ALLOCATORS[AllocatorKind.GATED] is GatedAllocator
    assert ALLOCATORS[AllocatorKind.COMPETITIVE] is CompetitiveAllocator


def test_uniform_never_moves():
    g = build_wuxing(lam=0.05)
    allocator = create_allocator(AllocatorSpec(kind=AllocatorKind.UNIFORM), 5, 100, seed=0)
    a = allocator.start()
    for _ in range(10):
        a = allocator.step(_feedback([1.0, 0.0, 0.0, 0.0, 0.0]), g)
    np.testing.assert_array_equal(a.weights, np.full(5, 0.2))


def test_competitive_worked_example():
    state = _competitive([0.5, 0.5], eta=1.0)
    a = competitive_step(state, _feedback([math.log(2), 0.0]))
    np.testing.assert_allclose(a.weights, [2 / 3, 1 / 3], rtol=1e-12)
    assert state.round_index == 2


def test_competitive_ratio_identity():
    rng = np.random.default_rng(4)
    weights = rng.dirichlet(np.ones(6))
    r = rng.random(6)
    eta = 0.3
    a = competitive_step(_competitive(weights, eta), _feedback(r)).weights
    for i in range(6):
        for j in range(6):
            expected = weights[i] * math.exp(eta * r[i]) / (weights[j] * math.exp(eta * r[j]))
            assert a[i] / a[j] == pytest.approx(expected, rel=1e-12)


def test_competitive_shift_invariance():
    rng = np.random.default_rng(5)
    weights = rng.dirichlet(np.ones(4))
    r = rng.random(4)
    base = competitive_step(_competitive(weights, 0.5), _feedback(r)).weights
    shifted = competitive_step(_competitive(weights, 0.5), Feedback(
        ValueVector(r), RewardVector(r + 7.25), 0.0)).weights
    np.testing.assert_allclose(base, shifted, rtol=1e-12, atol=1e-15)


def test_competitive_weights_stay_positive_under_extreme_rewards():
    state = _competitive([0.5, 0.5], eta=1.0)
    for _ in range(5):
        a = competitive_step(state, Feedback(ValueVector(np.array([1.0, 0.0])),
                                             RewardVector(np.array([1000.0, 0.0])), 0.0))
    assert a.weights[1] > 0.0
    assert a.weights.sum() == pytest.approx(1.0, abs=1e-12)


def test_competitive_rejects_non_finite_reward():
    state = _competitive([0.5, 0.5], eta=1.0)
    with pytest.raises(NonFiniteRewardError):
        competitive_step(state, Feedback(ValueVector(np.array([0.5, 0.5])),
                                         RewardVector(np.array([np.inf, 0.0])), 0.0))


def test_default_and_anytime_learning_rates():
    allocator = create_allocator(AllocatorSpec(kind=AllocatorKind.COMPETITIVE), 5, 1024, seed=0)
    assert allocator.state.learning_rate == pytest.approx(math.sqrt(math.log(5) / 1024))
    assert default_learning_rate(2, 100) == pytest.approx(math.sqrt(math.log(2) / 100))
    explicit = create_allocator(AllocatorSpec(kind=AllocatorKind.COMPETITIVE, eta=0.7), 5, 1024, seed=0)
    assert explicit.state.learning_rate == 0.7

    state = _competitive([0.5, 0.5], eta=None, anytime=True, round_index=4)
    a = competitive_step(state, _feedback([1.0, 0.0]))
    eta = math.sqrt(math.log(2) / 4)
    assert a.weights[0] / a.weights[1] == pytest.approx(math.exp(eta), rel=1e-12)


def test_hedge_regret_bound_without_coupling():
    # lambda = 0, rewards in [0, 1]: regret <= ln N / eta + eta T / 8
    g = build_wuxing(lam=0.0)
    T, n = 2000, 5
    rng = np.random.default_rng(12)
    values = rng.random((T, n))
    values[:, 2] = np.minimum(values[:, 2] + 0.2, 1.0)
    eta = default_learning_rate(n, T)
    state = _competitive(np.full(n, 1.0 / n), eta)
    earned = 0.0
    for v in values:
        a = state.allocation
        earned += payoff(a, v, g)
        competitive_step(state, Feedback(ValueVector(v), reward(a, v, g), 0.0))
    best = values.sum(axis=0).max()
    assert best - earned <= hedge_bound(T, n, eta)
    assert best - earned <= 2 * math.sqrt(T * math.log(n))


def test_softmax_is_stable():
    p = softmax(np.array([1000.0, 1000.0, -1000.0]))
    np.testing.assert_allclose(p, [0.5, 0.5, 0.0], atol=1e-15)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)


def test_gated_starts_uniform_and_ignores_constant_rewards():
    g = build_wuxing(lam=0.0)
    allocator = create_allocator(AllocatorSpec(kind=AllocatorKind.GATED), 5, 100, seed=0)
    x = np.array([0.3, 0.1, 0.9, 0.4, 0.2])
    a = allocator.start(x)
    np.testing.assert_allclose(a.weights, np.full(5, 0.2))
    v = ValueVector(np.full(5, 0.6))
    for _ in range(20):
        a = allocator.step(Feedback(v, reward(a, v, g), payoff(a, v, g), x), g, x)
    np.testing.assert_allclose(allocator.state.gating, 0.0, atol=1e-14)
    np.testing.assert_allclose(a.weights, np.full(5, 0.2), atol=1e-12)


def test_gated_step_size_and_direction():
    g = build_wuxing(lam=0.0)
    state = AllocatorState(kind=AllocatorKind.GATED, allocation=Allocation.uniform(5),
                           gating=np.zeros((5, 5)), round_index=8)
    x = np.ones(5)
    v = ValueVector(np.array([1.0, 0.0, 0.0, 0.0, 0.0]))
    a = gated_step(state, Feedback(v, reward(Allocation.uniform(5), v, g), 0.2, x))
    # J u for a uniform, u = e_1: 0.2 * (e_1 - 0.2); step 8^(-1/3) = 0.5
    expected_row = 0.5 * 0.2 * (np.array([1.0, 0, 0, 0, 0]) - 0.2)
    np.testing.assert_allclose(state.gating[:, 0], expected_row, atol=1e-15)
    assert a.weights[0] > 0.2
    assert state.round_index == 9


def test_gated_two_module_step_moves_toward_valuable_module():
    g = build_full(2, lam=0.0)
    state = AllocatorState(kind=AllocatorKind.GATED, allocation=Allocation.uniform(2),
                           gating=np.zeros((2, 2)))
    x = np.array([1.0, 0.0])
    v = ValueVector(np.array([1.0, 0.0]))
    a = gated_step(state, Feedback(v, reward(Allocation.uniform(2), v, g), 0.5, x))
    np.testing.assert_allclose(state.gating[:, 0], [0.25, -0.25], atol=1e-15)
    np.testing.assert_allclose(state.gating[:, 1], 0.0, atol=1e-15)
    assert a.weights[0] > 0.5


@pytest.mark.parametrize("seed", range(20))
def test_gating_gradient_matches_finite_difference(seed):
    # with exact-gradient rewards this is the derivative of P(softmax(G x)) in G
    rng = np.random.default_rng(seed)
    n = 2 + seed % 7
    w = rng.uniform(-1.0, 1.0, size=(n, n))
    np.fill_diagonal(w, 0.0)
    g = InteractionGraph.from_matrix(w, 0.1)
    G = rng.normal(size=(n, n))
    x = rng.random(n)
    v = ValueVector(rng.random(n))
    grad = gating_gradient(G, x, v, g, RewardMode.EXACT)
    h = 1e-6
    for i in range(n):
        for j in range(n):
            E = np.zeros((n, n))
            E[i, j] = h
            up = payoff(softmax((G + E) @ x), v, g)
            down = payoff(softmax((G - E) @ x), v, g)
            assert grad[i, j] == pytest.approx((up - down) / (2 * h), abs=1e-7)


def test_gated_step_moves_along_gate_direction():
    rng = np.random.default_rng(11)
    g = build_wuxing(0.05)
    gating = rng.normal(size=(5, 5))
    x = rng.random(5)
    a = Allocation.from_weights(softmax(gating @ x))
    v = ValueVector(rng.random(5))
    u = reward(a, v, g)
    state = AllocatorState(kind=AllocatorKind.GATED, allocation=a, gating=gating.copy(),
                           alpha=0.5, round_index=8)
    gated_step(state, Feedback(v, u, payoff(a, v, g), x))
    expected = gating + 0.5 * 8 ** (-1 / 3) * gate_direction(a.weights, u.rewards, x)
    np.testing.assert_allclose(state.gating, expected, atol=1e-12)
    np.testing.assert_allclose(gate_direction(a.weights, u.rewards, x), gating_gradient(gating, x, v, g),
                               atol=1e-12)


def test_make_features():
    rng = np.random.default_rng(0)
    v = ValueVector(np.array([0.0, 0.5, 1.0]))
    exact = make_features(v, FeatureScheme.NOISY_VALUE, rng, sigma=0.0)
    np.testing.assert_array_equal(exact, v.values)
    noisy = make_features(v, FeatureScheme.NOISY_VALUE, rng, sigma=0.5)
    assert ((noisy >= 0) & (noisy <= 1)).all()
    blind = make_features(v, FeatureScheme.UNINFORMATIVE, rng)
    assert blind.shape == (3,) and ((blind >= 0) & (blind < 1)).all()


def test_noisy_features_track_drifting_values():
    rng = np.random.default_rng(5)
    values = rng.random((2000, 3))
    features = np.array([make_features(ValueVector(v), FeatureScheme.NOISY_VALUE, rng) for v in values])
    for i in range(3):
        assert np.corrcoef(values[:, i], features[:, i])[0, 1] > 0.5
