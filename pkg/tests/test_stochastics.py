"""Stream determinism and distributional correctness of the variate source."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from rxnmc import RandomStream


def test_replay_exact_sequences():
    a = RandomStream(2024, path_index=7)
    b = RandomStream(2024, path_index=7)
    assert [a.uniform() for _ in range(50)] == [b.uniform() for _ in range(50)]
    assert [a.unit_exponential() for _ in range(10)] == [
        b.unit_exponential() for _ in range(10)
    ]
    assert [a.poisson(3.7) for _ in range(20)] == [b.poisson(3.7) for _ in range(20)]
    assert a.draws == b.draws == 80


def test_distinct_paths_give_distinct_sequences():
    base = RandomStream(5, path_index=0)
    other = RandomStream(5, path_index=1)
    tagged = RandomStream(5, path_index=0, channel_tag=1)
    seq = [base.uniform() for _ in range(8)]
    assert seq != [other.uniform() for _ in range(8)]
    assert seq != [tagged.uniform() for _ in range(8)]


def test_uniform_moments_and_open_interval():
    u = RandomStream(11).uniforms(10**6)
    # CLT bound 4*sigma/sqrt(n) with sigma^2 = 1/12 -> 0.00115; spec says 0.002
    assert abs(u.mean() - 0.5) < 0.002
    assert u.min() > 0.0
    assert u.max() < 1.0


def test_unit_exponential_moments():
    e = RandomStream(12).unit_exponentials(10**6)
    assert abs(e.mean() - 1.0) < 0.004  # CLT: 4/sqrt(1e6) = 0.004
    assert e.min() > 0.0


def test_exponential_is_log_inverse_uniform():
    s1 = RandomStream(77, 3)
    s2 = RandomStream(77, 3)
    xs = [s1.unit_exponential() for _ in range(100)]
    ys = [math.log(1.0 / s2.uniform()) for _ in range(100)]
    assert xs == ys


def test_poisson_degenerate_and_argument_errors():
    s = RandomStream(1)
    assert s.poisson(0.0) == 0
    with pytest.raises(ValueError):
        s.poisson(-1.0)
    with pytest.raises(ValueError):
        s.poisson(float("inf"))
    with pytest.raises(ValueError):
        s.poisson(float("nan"))


def test_poisson_mean_four_moments():
    p = RandomStream(13).poissons(4.0, 10**6)
    assert abs(p.mean() - 4.0) < 0.008  # 4*sigma/sqrt(n), sigma = 2
    assert abs(p.var(ddof=1) - 4.0) < 0.05


def test_poisson_huge_mean_tail():
    mean = 1e6
    p = RandomStream(14).poissons(mean, 10**6).astype(np.float64)
    band = 5.0 * math.sqrt(mean)
    below = np.mean(p <= mean + band)
    above = np.mean(p >= mean - band)
    assert below >= 0.9999997
    assert above >= 0.9999997


@pytest.mark.parametrize("mean", [0.5, 5.0, 50.0, 5000.0])
def test_poisson_chi_square_goodness_of_fit(mean):
    n = 10**5
    sample = RandomStream(int(mean * 1000) + 3).poissons(mean, n)
    lo = max(0, int(mean - 6 * math.sqrt(mean) - 2))
    hi = int(mean + 6 * math.sqrt(mean) + 5)
    ks = np.arange(lo, hi + 1)
    pmf = stats.poisson.pmf(ks, mean)
    # pool everything outside [lo, hi] into the edge bins
    pmf[0] += stats.poisson.cdf(lo - 1, mean)
    pmf[-1] += stats.poisson.sf(hi, mean)
    counts = np.bincount(np.clip(sample, lo, hi) - lo, minlength=ks.size)
    # merge bins with tiny expected counts
    expected = pmf * n
    keep = expected >= 5
    obs = np.concatenate([counts[keep], [counts[~keep].sum()]])
    exp = np.concatenate([expected[keep], [expected[~keep].sum()]])
    if exp[-1] == 0:
        obs, exp = obs[:-1], exp[:-1]
    exp = exp * obs.sum() / exp.sum()
    _, pvalue = stats.chisquare(obs, exp)
    assert pvalue > 1e-4


@settings(max_examples=25, deadline=None)
@given(
    seed=st.integers(min_value=0, max_value=2**63 - 1),
    path=st.integers(min_value=0, max_value=2**62),
    tag=st.integers(min_value=0, max_value=7),
)
def test_streams_are_pure_functions_of_identity(seed, path, tag):
    a = RandomStream(seed, path, tag)
    b = RandomStream(seed, path, tag)
    ua = [a.uniform() for _ in range(5)]
    ub = [b.uniform() for _ in range(5)]
    assert ua == ub
    assert all(0.0 < u < 1.0 for u in ua)


def test_batch_and_scalar_draws_agree():
    scalar = RandomStream(99, 4)
    batch = RandomStream(99, 4)
    xs = np.array([scalar.poisson(37.5) for _ in range(500)])
    ys = batch.poissons(37.5, 500)
    assert np.array_equal(xs, ys)
