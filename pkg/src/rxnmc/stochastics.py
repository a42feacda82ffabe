"""Seeded random variate generation with independent per-path substreams.

Every stream is identified by a key ``(seed, path_index, channel_tag)`` and a
draw counter.  The raw 64-bit output for draw ``n`` of a stream is a pure
function of the key and ``n`` (a counter-based construction), so replaying a
run with the same seed reproduces every variate bit-for-bit regardless of how
paths are scheduled across workers.

The same compiled primitives are used both by the Python-level
:class:`RandomStream` and by the simulation kernels, so a path simulated
inside a batched kernel consumes exactly the draws a hand-driven stream would.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

__all__ = ["RandomStream"]

# 64-bit mixing constants (golden-ratio increment and avalanche multipliers).
_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_G2 = np.uint64(0x9E3779B97F4A7C15 * 2 & _MASK64)
_G3 = np.uint64(0x9E3779B97F4A7C15 * 3 & _MASK64)
_MIX_A = np.uint64(0xBF58476D1CE4E5B9)
_MIX_B = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_U1 = np.uint64(1)
_INV53 = 1.0 / float(1 << 53)

# Poisson sampling switches from sequential-search inversion to an O(1)
# transformed-rejection sampler at this mean.
_POISSON_REJECTION_CUTOFF = 10.0


@njit(cache=True)
def _mix64(z):
    """Bijective avalanche finalizer on uint64."""
    z = (z ^ (z >> _S30)) * _MIX_A
    z = (z ^ (z >> _S27)) * _MIX_B
    return z ^ (z >> _S31)


@njit(cache=True)
def _stream_key(seed, path_index, channel_tag):
    """Derive the 64-bit stream key for (seed, path_index, channel_tag)."""
    s = _mix64(seed + _GOLDEN)
    s = _mix64(s ^ _mix64(path_index + _G2))
    return _mix64(s ^ _mix64(channel_tag + _G3))


@njit(cache=True)
def _new_state(seed, path_index, channel_tag):
    st = np.empty(2, dtype=np.uint64)
    st[0] = _stream_key(seed, path_index, channel_tag)
    st[1] = np.uint64(0)
    return st


@njit(cache=True)
def _next_raw(st):
    st[1] += _U1
    return _mix64(st[0] + st[1] * _GOLDEN)


@njit(cache=True)
def _uniform(st):
    """Uniform on the open interval (0, 1); zero outputs are redrawn."""
    while True:
        u = float(_next_raw(st) >> _S11) * _INV53
        if u > 0.0:
            return u


@njit(cache=True)
def _exponential(st):
    return math.log(1.0 / _uniform(st))


@njit(cache=True)
def _poisson(st, mean):
    """Exact Poisson(mean) sample.

    Inversion by sequential search below the cutoff, transformed rejection
    with an exact acceptance test above it.  No normal approximation at any
    mean.
    """
    if not (mean >= 0.0) or math.isinf(mean):
        raise ValueError("poisson mean must be finite and nonnegative")
    if mean == 0.0:
        return np.int64(0)
    if mean < _POISSON_REJECTION_CUTOFF:
        u = _uniform(st)
        p = math.exp(-mean)
        cum = p
        k = np.int64(0)
        while u > cum:
            k += 1
            p *= mean / k
            cum += p
            if k > 500:
                # cdf saturated in float; tail mass below resolution
                break
        return k
    slam = math.sqrt(mean)
    loglam = math.log(mean)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)
    while True:
        u = _uniform(st) - 0.5
        v = _uniform(st)
        us = 0.5 - abs(u)
        k = np.int64(math.floor((2.0 * a / us + b) * u + mean + 0.43))
        if us >= 0.07 and v <= vr:
            return k
        if k < 0 or (us < 0.013 and v > us):
            continue
        if (math.log(v) + math.log(invalpha) - math.log(a / (us * us) + b)
                <= k * loglam - mean - math.lgamma(k + 1.0)):
            return k


@njit(cache=True)
def _fill_uniforms(st, out):
    for i in range(out.size):
        out[i] = _uniform(st)


@njit(cache=True)
def _fill_exponentials(st, out):
    for i in range(out.size):
        out[i] = _exponential(st)


@njit(cache=True)
def _fill_poissons(st, mean, out):
    for i in range(out.size):
        out[i] = _poisson(st, mean)


def _as_u64(value: int) -> np.uint64:
    return np.uint64(int(value) & _MASK64)


class RandomStream:
    """Seeded source of uniform, exponential, and exact Poisson variates.

    Two streams with distinct ``(seed, path_index)`` are statistically
    independent, and a stream's output sequence depends only on
    ``(seed, path_index, channel_tag)`` — never on worker scheduling.

    The coupled-pair simulators additionally split one path's randomness into
    channel families via :meth:`channel`, so the shared and excess channels
    of a coupling draw from disjoint tagged streams.
    """

    __slots__ = ("seed", "path_index", "channel_tag", "_state", "_draws")

    def __init__(self, seed: int, path_index: int = 0, channel_tag: int = 0):
        self.seed = int(seed)
        self.path_index = int(path_index)
        self.channel_tag = int(channel_tag)
        self._state = _new_state(
            _as_u64(seed), _as_u64(path_index), _as_u64(channel_tag)
        )
        self._draws = 0

    def for_path(self, path_index: int) -> "RandomStream":
        """Fresh stream for another path of the same seeded experiment."""
        return RandomStream(self.seed, path_index, self.channel_tag)

    def channel(self, channel_tag: int) -> "RandomStream":
        """Fresh stream for a tagged channel family of this path."""
        return RandomStream(self.seed, self.path_index, channel_tag)

    @property
    def draws(self) -> int:
        """Number of variates handed out so far."""
        return self._draws

    def uniform(self) -> float:
        """Uniform variate on the open interval (0, 1)."""
        self._draws += 1
        return _uniform(self._state)

    def unit_exponential(self) -> float:
        """Mean-one exponential variate, computed as ln(1/U)."""
        self._draws += 1
        return _exponential(self._state)

    def poisson(self, mean: float) -> int:
        """Exact Poisson(mean) variate; ``mean`` must be finite and >= 0."""
        mean = float(mean)
        if not math.isfinite(mean) or mean < 0.0:
            raise ValueError(
                f"poisson mean must be finite and nonnegative, got {mean}"
            )
        self._draws += 1
        return int(_poisson(self._state, mean))

    def uniforms(self, n: int) -> np.ndarray:
        """Batch of ``n`` uniform variates (testing convenience)."""
        out = np.empty(int(n), dtype=np.float64)
        _fill_uniforms(self._state, out)
        self._draws += int(n)
        return out

    def unit_exponentials(self, n: int) -> np.ndarray:
        out = np.empty(int(n), dtype=np.float64)
        _fill_exponentials(self._state, out)
        self._draws += int(n)
        return out

    def poissons(self, mean: float, n: int) -> np.ndarray:
        mean = float(mean)
        if not math.isfinite(mean) or mean < 0.0:
            raise ValueError(
                f"poisson mean must be finite and nonnegative, got {mean}"
            )
        out = np.empty(int(n), dtype=np.int64)
        _fill_poissons(self._state, mean, out)
        self._draws += int(n)
        return out

    def __repr__(self) -> str:
        return (
            f"RandomStream(seed={self.seed}, path_index={self.path_index}, "
            f"channel_tag={self.channel_tag})"
        )
