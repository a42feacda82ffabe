"""Exact and tau-leap path simulators against analytic oracles."""

import math

import numpy as np
import pytest

from rxnmc import (
    BudgetExceededError,
    Observable,
    RandomStream,
    Reaction,
    ReactionNetwork,
    State,
    exact_path,
    tau_leap_path,
)
from rxnmc.mlmc import _exact_level, _sample_level, _tau_level
from rxnmc.models import isomerization, mm_infinity, pure_decay


def _mean_over_paths(level, n, seed):
    acc, _ = _sample_level(level, seed=seed, slot=0, run_tag=2, n_fixed=n)
    return acc


def test_no_reactions_leaves_state_unchanged():
    net = ReactionNetwork([("A", 7)])
    res = exact_path(net, net.initial_state(), 2.0, RandomStream(1))
    assert np.array_equal(res.final_state.counts, [7])
    assert res.final_state.time == 2.0
    assert res.updates == 0


def test_zero_horizon():
    net = pure_decay().network
    res = exact_path(net, net.initial_state(), 0.0, RandomStream(1))
    assert np.array_equal(res.final_state.counts, [1000])
    res = tau_leap_path(net, net.initial_state(), 0.0, 0.5, RandomStream(1))
    assert np.array_equal(res.final_state.counts, [1000])


def test_exact_decay_mean():
    # analytic: E X(1) = 1000 * e^-1 = 367.879441; CLT half-width  about
    # 4 * sigma / sqrt(n) with sigma^2 = 1000 e^-1 (1 - e^-1) = 232.54
    net = pure_decay().network
    acc = _mean_over_paths(
        _exact_level(net, net.initial_counts, 1.0, Observable.component(0)),
        100_000, seed=21,
    )
    assert abs(acc.mean - 1000 * math.exp(-1)) < 1.5


def test_exact_decay_direct_method_mean():
    net = pure_decay().network
    acc = _mean_over_paths(
        _exact_level(net, net.initial_counts, 1.0, Observable.component(0),
                     use_direct=True),
        100_000, seed=22,
    )
    assert abs(acc.mean - 1000 * math.exp(-1)) < 1.5


def test_exact_mm_infinity_transient_mean():
    # E X(8) = (lambda/mu)(1 - e^{-mu t}) = 10 (1 - e^-8) = 9.99665
    net = mm_infinity().network
    acc = _mean_over_paths(
        _exact_level(net, net.initial_counts, 8.0, Observable.component(0)),
        100_000, seed=23,
    )
    assert abs(acc.mean - 10 * (1 - math.exp(-8))) < 0.05


def test_exact_isometry_symmetric_mean_is_constant():
    net = isomerization(1.0).network
    acc = _mean_over_paths(
        _exact_level(net, net.initial_counts, 1.0, Observable.component(0)),
        20_000, seed=24,
    )
    half = 4 * math.sqrt(acc.variance / acc.n)
    assert abs(acc.mean - 1000.0) < half


def test_tau_decay_mean_recursion():
    # per-step mean factor (1 - kappa h) holds exactly, so
    # E Z(1) = 1e4 * (1 - 1/4)^4 = 3164.0625
    net = pure_decay(x0=10_000).network
    acc = _mean_over_paths(
        _tau_level(net, net.initial_counts, 1.0, 0.25, Observable.component(0)),
        100_000, seed=25,
    )
    expected = 10_000 * (1 - 0.25) ** 4
    half = 4 * math.sqrt(acc.variance / acc.n)
    assert abs(acc.mean - expected) < half


def test_tau_single_step_matches_direct_poisson_construction():
    # with h >= T the leap is one step: X(T) = x0 + sum_k Poisson(lam_k(x0) T) zeta_k,
    # reproducible draw-for-draw from the same tagged stream
    net = ReactionNetwork(
        [("A", 50), ("B", 3)],
        [
            Reaction({0: 1}, {1: 1}, 0.8),
            Reaction({1: 1}, {}, 0.3),
            Reaction({}, {0: 2}, 2.0),
        ],
    )
    seed, pidx, T = 77, 5, 1.5
    res = tau_leap_path(net, net.initial_state(), T, h=4.0, stream=RandomStream(seed, pidx))
    assert res.updates == net.num_reactions
    oracle = RandomStream(seed, pidx, channel_tag=0)
    x = net.initial_counts.copy()
    lam = [0.8 * 50, 0.3 * 3, 2.0]
    for k, rate in enumerate(lam):
        n = oracle.poisson(rate * T) if rate > 0 else 0
        x += n * net.zeta_matrix[k]
    assert np.array_equal(res.final_state.counts, x)


def test_conservation_along_paths():
    # w = (1, 1) has w . zeta_k = 0 for both channels
    net = isomerization(1.0).network
    for i in range(50):
        r1 = exact_path(net, net.initial_state(), 0.5, RandomStream(31, i))
        assert r1.final_state.counts.sum() == 2000
        r2 = tau_leap_path(net, net.initial_state(), 0.5, 1 / 8, RandomStream(32, i))
        assert r2.final_state.counts.sum() == 2000


def test_tau_weak_bias_first_order():
    # analytic bias at step h: 1000 [(1 - h)^{1/h} - e^-1]
    # ratio |bias(1/9)| / |bias(1/27)| = 21.44 / 7.45 = 2.88, within [2.0, 4.5]
    net = pure_decay().network
    truth = 1000 * math.exp(-1)
    biases = {}
    for seed, h in ((41, 1 / 9), (42, 1 / 27)):
        acc = _mean_over_paths(
            _tau_level(net, net.initial_counts, 1.0, h, Observable.component(0)),
            400_000, seed=seed,
        )
        expected = 1000 * (1 - h) ** round(1 / h)
        half = 4 * math.sqrt(acc.variance / acc.n)
        assert abs(acc.mean - expected) < half
        biases[h] = acc.mean - truth
    ratio = abs(biases[1 / 9]) / abs(biases[1 / 27])
    assert 2.0 <= ratio <= 4.5


def test_updates_accounting():
    net = pure_decay().network
    res = exact_path(net, net.initial_state(), 1.0, RandomStream(51, 0))
    # decay events are one-for-one with molecules lost
    assert res.updates == 1000 - res.final_state.counts[0]
    res2 = tau_leap_path(net, net.initial_state(), 1.0, 0.25, RandomStream(51, 0))
    assert res2.updates == 4 * net.num_reactions
    # replay gives identical accounting
    res3 = exact_path(net, net.initial_state(), 1.0, RandomStream(51, 0))
    assert (res3.updates, res3.rng_draws) == (res.updates, res.rng_draws)


def test_budget_cap():
    net = pure_decay().network
    with pytest.raises(BudgetExceededError, match="path budget"):
        exact_path(net, net.initial_state(), 1.0, RandomStream(1), max_events=10)
    with pytest.raises(BudgetExceededError):
        tau_leap_path(net, net.initial_state(), 1.0, 1e-4, RandomStream(1),
                      max_events=100)


def test_argument_errors():
    net = pure_decay().network
    x0 = net.initial_state()
    with pytest.raises(ValueError):
        tau_leap_path(net, x0, 1.0, 0.0, RandomStream(1))
    with pytest.raises(ValueError):
        tau_leap_path(net, x0, 1.0, -0.5, RandomStream(1))
    with pytest.raises(ValueError):
        exact_path(net, x0, -1.0, RandomStream(1))
    with pytest.raises(ValueError):
        exact_path(net, State(np.array([-1])), 1.0, RandomStream(1))
    with pytest.raises(ValueError):
        exact_path(net, x0, 1.0, RandomStream(1), method="leapfrog")


def test_absorbing_state_stalls_to_horizon():
    # all propensities vanish once the single molecule decays
    net = pure_decay(kappa=50.0, x0=1).network
    res = exact_path(net, net.initial_state(), 100.0, RandomStream(3))
    assert res.final_state.counts[0] == 0
    assert res.final_state.time == 100.0
    assert res.updates == 1
