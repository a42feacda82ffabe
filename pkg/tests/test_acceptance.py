"""Acceptance suite: every criterion at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one PASS/FAIL line
per criterion.  Shared expensive runs (the dimer estimates) are module
fixtures reused across criteria.
"""

import json
import math
from contextlib import contextmanager

import numpy as np
import pytest

from rxnmc import (
    ChannelMap,
    Observable,
    RandomStream,
    Reaction,
    ReactionNetwork,
    allocate,
    cmc_exact,
    cmc_tau,
    control_variate,
    coupled_exact_exact,
    coupled_exact_tau,
    mlmc_unbiased,
    pilot,
)
from rxnmc.cli import main as cli_main
from rxnmc.coupling import _run_coupled_tau
from rxnmc.mlmc import LevelPlan
from rxnmc.models import dimer, get_model, pure_decay, viral

from test_mlmc import grid_search_allocation

DECAY_MEAN = 1000 * math.exp(-1)


@contextmanager
def criterion(number, title):
    try:
        yield
    except Exception:
        print(f"FAIL criterion {number}: {title}")
        raise
    print(f"PASS criterion {number}: {title}")


def _overlap(r1, r2):
    return abs(r1.estimate - r2.estimate) <= r1.half_width + r2.half_width


@pytest.fixture(scope="module")
def dimer_net():
    return dimer().network


@pytest.fixture(scope="module")
def dimer_unbiased(dimer_net):
    return mlmc_unbiased(
        dimer_net, None, 1.0, Observable.component(2), M=3, ell0=2, L=5,
        epsilon=10.0, stream=42, workers=2,
    )


@pytest.fixture(scope="module")
def dimer_exact(dimer_net):
    return cmc_exact(
        dimer_net, None, 1.0, Observable.component(2), epsilon=10.0,
        stream=43, workers=2,
    )


def test_criterion_1_dimer_mean(dimer_unbiased, dimer_exact):
    with criterion(1, "dimer mean via unbiased MLMC and exact CMC at eps=10"):
        assert abs(dimer_unbiased.estimate - 3714.2) <= 11.0
        assert dimer_unbiased.half_width <= 10.0
        assert dimer_exact.half_width <= 10.0
        assert _overlap(dimer_unbiased, dimer_exact)


def test_criterion_2_dimer_second_moment(dimer_net):
    with criterion(2, "dimer second moment via unbiased MLMC at eps=1e5"):
        rep = mlmc_unbiased(
            dimer_net, None, 1.0, Observable.product(2, 2), M=3, ell0=2, L=5,
            epsilon=1e5, stream=44, workers=2,
        )
        assert abs(rep.estimate - 1.5035e7) <= 1.5e5


def test_criterion_3_speedup(dimer_unbiased, dimer_exact):
    with criterion(3, "unbiased MLMC uses <= 1/5 the updates of exact CMC"):
        assert dimer_unbiased.total_updates * 5 <= dimer_exact.total_updates
        print(
            f"  (speedup {dimer_exact.total_updates / dimer_unbiased.total_updates:.1f}x: "
            f"exact {dimer_exact.total_updates:,} vs mlmc "
            f"{dimer_unbiased.total_updates:,})"
        )


def test_criterion_4_bias_visibility(dimer_net, dimer_unbiased):
    with criterion(4, "tau-CMC at h=3^-4 lands in [3645, 3665], below the unbiased CI"):
        rep = cmc_tau(
            dimer_net, None, 1.0, Observable.component(2), h=3.0 ** -4,
            epsilon=2.0, stream=45, workers=2,
        )
        assert 3645.0 <= rep.estimate <= 3665.0
        assert rep.estimate + rep.half_width < (
            dimer_unbiased.estimate - dimer_unbiased.half_width
        )


def _theta_speedup(theta, plan, seed):
    model = get_model(f"isomerization:theta={theta}")
    net = model.network
    obs = Observable.component(0)
    target = float(net.initial_counts[0])
    mlmc = mlmc_unbiased(
        net, None, 1.0, obs, M=plan.M, ell0=plan.ell0, L=plan.L,
        epsilon=0.5, stream=seed, workers=2,
    )
    exact = cmc_exact(net, None, 1.0, obs, epsilon=0.5, stream=seed + 1,
                      workers=2)
    assert abs(mlmc.estimate - target) <= mlmc.half_width
    return exact.total_updates / mlmc.total_updates


def test_criterion_5_theta_family():
    with criterion(5, "isomerization family: CIs contain the symmetric mean; "
                      "speedup falls as theta rises"):
        s1 = _theta_speedup(1, LevelPlan(3, 2, 5), seed=46)
        s10 = _theta_speedup(10, LevelPlan(3, 5, 6), seed=48)
        print(f"  (speedup theta=1: {s1:.1f}x, theta=10: {s10:.1f}x)")
        assert s1 > s10


def test_criterion_6_viral_control_variate():
    with criterion(6, "viral control variate: estimate near 13.85 with fewer "
                      "updates than exact CMC"):
        mf = viral()
        rep = control_variate(
            mf.network, mf.reduced, None, None, 20.0,
            Observable.component(3), Observable.component(2),
            mf.channel_map, epsilon=0.5, stream=7, workers=2,
        )
        exact = cmc_exact(
            mf.network, None, 20.0, Observable.component(3), epsilon=0.5,
            stream=8, workers=2,
        )
        assert 13.25 <= rep.estimate <= 14.45
        assert rep.total_updates < exact.total_updates
        print(
            f"  (cv {rep.estimate:.3f} +/- {rep.half_width:.3f}, "
            f"{exact.total_updates / rep.total_updates:.1f}x fewer updates)"
        )


def test_criterion_7_unbiasedness_over_seeds():
    with criterion(7, "pure decay: |estimate - 1000/e| <= 1 in >= 17 of 20 seeds"):
        net = pure_decay().network
        hits = 0
        for seed in range(20):
            rep = mlmc_unbiased(
                net, None, 1.0, Observable.component(0), M=3, ell0=2, L=5,
                epsilon=1.0, stream=1000 + seed,
            )
            hits += abs(rep.estimate - DECAY_MEAN) <= 1.0
        print(f"  ({hits} of 20 within tolerance)")
        assert hits >= 17


def test_criterion_8_tau_mean_recursion():
    with criterion(8, "tau-CMC decay matches 1000(1-h)^(1/h) at h=1/2, 1/4, 1/8"):
        net = pure_decay().network
        for i, h in enumerate((0.5, 0.25, 0.125)):
            expected = 1000.0 * (1.0 - h) ** round(1 / h)
            rep = cmc_tau(net, None, 1.0, Observable.component(0), h=h,
                          epsilon=1.0, stream=50 + i)
            assert abs(rep.estimate - expected) <= rep.half_width


def test_criterion_9_coupling_identities(dimer_net):
    with criterion(9, "degenerate couplings are bitwise identical (zero tolerance)"):
        x0 = dimer_net.initial_state()
        cmap = ChannelMap([(k, k) for k in range(dimer_net.num_reactions)])
        for i in range(1000):
            pair = _run_coupled_tau(dimer_net, x0, 1.0, 1 / 9, 1,
                                    RandomStream(52, i), 10 ** 9)
            assert np.array_equal(pair.fine_final.counts,
                                  pair.coarse_final.counts)
            twin = coupled_exact_exact(dimer_net, dimer_net, x0, x0, 0.1,
                                       cmap, RandomStream(53, i))
            assert np.array_equal(twin.fine_final.counts,
                                  twin.coarse_final.counts)
        const = ReactionNetwork([("A", 0)], [Reaction({}, {0: 1}, 5.0)])
        for i in range(1000):
            res = coupled_exact_tau(const, const.initial_state(), 1.0, 0.125,
                                    RandomStream(54, i))
            assert np.array_equal(res.fine_final.counts,
                                  res.coarse_final.counts)


def test_criterion_10_variance_decay(dimer_net):
    with criterion(10, "dimer level variances fall in ell; exact coupling "
                       "removes >90% of the variance"):
        obs = Observable.component(2)
        stats = pilot(dimer_net, None, 1.0, obs, LevelPlan(3, 2, 6),
                      n_pilot=1000, stream=55, workers=2)
        by_level = {s.level: s for s in stats if s.kind == "coupled-tau"}
        variances = [by_level[ell].variance for ell in (3, 4, 5, 6)]
        assert all(a > b for a, b in zip(variances, variances[1:]))
        # exact/tau distance at L=5 against the raw observable variance
        stats5 = pilot(dimer_net, None, 1.0, obs, LevelPlan(3, 2, 5),
                       n_pilot=1000, stream=56, workers=2)
        exact_level = next(s for s in stats5 if s.kind == "exact-coupled")
        var_fx = cmc_exact(dimer_net, None, 1.0, obs, epsilon=200.0,
                           stream=57).levels[0].variance
        assert exact_level.variance < 0.1 * var_fx
        print(
            f"  (level variances {['%.3g' % v for v in variances]}, "
            f"coupling/plain variance ratio "
            f"{exact_level.variance / var_fx:.2e})"
        )


def test_criterion_11_allocation_optimality():
    with criterion(11, "closed-form allocation matches grid search to 1e-6 "
                       "on 50 random cost vectors"):
        rng = np.random.default_rng(2024)
        budget = (1.0 / 1.96) ** 2
        for _ in range(50):
            m = int(rng.integers(2, 6))
            K = rng.uniform(0.05, 50.0, size=m)
            V = allocate(K, epsilon=1.0, z=1.96)
            V_grid = grid_search_allocation(K, budget)
            obj = float((K / V).sum())
            obj_grid = float((K / V_grid).sum())
            assert obj <= obj_grid * (1 + 1e-9)
            assert abs(obj - obj_grid) <= 1e-6 * obj
            assert np.max(np.abs(V - V_grid)) <= 1e-4 * budget


def test_criterion_12_determinism(tmp_path):
    with criterion(12, "reports replay byte-identically at any worker count"):
        args = [
            "estimate", "--model", "dimer", "--observable", "D", "--time", "1",
            "--method", "unbiased-mlmc", "--M", "3", "--l0", "2", "--L", "4",
            "--epsilon", "25", "--seed", "60",
        ]
        blobs = []
        for i, workers in enumerate((1, 2, 4)):
            out = tmp_path / f"rep{i}.json"
            code = cli_main(args + ["--workers", str(workers),
                                    "--output", str(out)])
            assert code == 0
            blobs.append(out.read_bytes())
        assert blobs[0] == blobs[1] == blobs[2]
        json.loads(blobs[0])  # well-formed
