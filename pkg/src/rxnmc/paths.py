"""Single-path simulators: exact (next reaction / direct) and tau-leaping.

Each simulator derives its working streams from the identity
``(seed, path_index)`` of the stream it is handed, so a path is a pure
function of that identity: rerunning with the same stream reproduces the
path bit-for-bit, and distinct path indices give independent paths.

Cost accounting: ``updates`` counts one unit per reaction event for exact
paths and one unit per (step x reaction channel) Poisson draw for tau-leap
paths; it is the machine-independent complexity proxy reported everywhere.
``rng_draws`` counts variates that consumed randomness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .model import ReactionNetwork, State, _all_propensities_csr
from .stochastics import _as_u64, _exponential, _new_state, _poisson, _uniform

__all__ = [
    "BudgetExceededError",
    "DEFAULT_MAX_EVENTS",
    "PathResult",
    "exact_path",
    "tau_leap_path",
]

DEFAULT_MAX_EVENTS = 1_000_000_000

# Channel-family tags.  Plain paths draw from family 0; coupled simulators
# use families 1..3 (see coupling.py).
TAG_PLAIN = np.uint64(0)


class BudgetExceededError(RuntimeError):
    """A path exceeded its event budget."""


@dataclass(frozen=True)
class PathResult:
    """Terminal state of one simulated path plus its cost accounting."""

    final_state: State
    updates: int
    rng_draws: int


@njit(cache=True, nogil=True)
def _nrm_kernel(r_ptr, r_idx, r_nu, zeta, kappa, cap, x, T, st, max_events):
    """Modified next reaction method on internal channel clocks.

    Returns (updates, draws, status); status 1 means budget exceeded.
    """
    R = kappa.size
    d = x.size
    updates = 0
    draws = 0
    P = np.empty(R, dtype=np.float64)
    Tk = np.zeros(R, dtype=np.float64)
    lam = np.empty(R, dtype=np.float64)
    for k in range(R):
        P[k] = _exponential(st)
        draws += 1
    t = 0.0
    while t < T:
        _all_propensities_csr(r_ptr, r_idx, r_nu, kappa, cap, x, lam)
        mu = -1
        dt_min = np.inf
        for k in range(R):
            if lam[k] > 0.0:
                dt = (P[k] - Tk[k]) / lam[k]
                if dt < dt_min:
                    dt_min = dt
                    mu = k
        if mu < 0 or t + dt_min >= T:
            # all channels silent (absorbing) or next event past the horizon
            break
        t += dt_min
        for k in range(R):
            Tk[k] += lam[k] * dt_min
        for i in range(d):
            x[i] += zeta[mu, i]
        P[mu] += _exponential(st)
        draws += 1
        updates += 1
        if updates >= max_events:
            return updates, draws, 1
    return updates, draws, 0


@njit(cache=True, nogil=True)
def _direct_kernel(r_ptr, r_idx, r_nu, zeta, kappa, cap, x, T, st, max_events):
    """Gillespie direct method: exponential holding time, cumulative pick."""
    R = kappa.size
    d = x.size
    updates = 0
    draws = 0
    lam = np.empty(R, dtype=np.float64)
    t = 0.0
    while t < T:
        _all_propensities_csr(r_ptr, r_idx, r_nu, kappa, cap, x, lam)
        a0 = 0.0
        for k in range(R):
            a0 += lam[k]
        if a0 <= 0.0:
            break
        dt = math.log(1.0 / _uniform(st)) / a0
        draws += 1
        if t + dt >= T:
            break
        t += dt
        r = _uniform(st) * a0
        draws += 1
        mu = -1
        c = 0.0
        for k in range(R):
            if lam[k] > 0.0:
                mu = k
                c += lam[k]
                if r < c:
                    break
        for i in range(d):
            x[i] += zeta[mu, i]
        updates += 1
        if updates >= max_events:
            return updates, draws, 1
    return updates, draws, 0


@njit(cache=True, nogil=True)
def _tau_kernel(r_ptr, r_idx, r_nu, zeta, kappa, cap, x, T, h, st, max_events):
    """Euler tau-leaping: frozen propensities, Poisson channel counts."""
    R = kappa.size
    d = x.size
    updates = 0
    draws = 0
    lam = np.empty(R, dtype=np.float64)
    t = 0.0
    while t < T:
        tn1 = t + h
        if tn1 >= T:
            tn1 = T
            dt = T - t
        else:
            dt = h
        _all_propensities_csr(r_ptr, r_idx, r_nu, kappa, cap, x, lam)
        for k in range(R):
            mean = lam[k] * dt
            if mean > 0.0:
                n = _poisson(st, mean)
                draws += 1
                if n > 0:
                    for i in range(d):
                        x[i] += zeta[k, i] * n
        updates += R
        t = tn1
        if updates >= max_events:
            return updates, draws, 1
    return updates, draws, 0


@njit(cache=True, nogil=True)
def _exact_batch(r_ptr, r_idx, r_nu, zeta, kappa, cap, x0, T, seed, path_lo, use_direct,
                 max_events, out_x, out_updates, out_draws):
    status = 0
    for b in range(out_x.shape[0]):
        st = _new_state(seed, path_lo + np.uint64(b), TAG_PLAIN)
        x = out_x[b]
        x[:] = x0
        if use_direct:
            u, dr, s = _direct_kernel(r_ptr, r_idx, r_nu, zeta, kappa, cap, x, T, st, max_events)
        else:
            u, dr, s = _nrm_kernel(r_ptr, r_idx, r_nu, zeta, kappa, cap, x, T, st, max_events)
        out_updates[b] = u
        out_draws[b] = dr
        if s != 0:
            status = s
    return status


@njit(cache=True, nogil=True)
def _tau_batch(r_ptr, r_idx, r_nu, zeta, kappa, cap, x0, T, h, seed, path_lo, max_events,
               out_x, out_updates, out_draws):
    status = 0
    for b in range(out_x.shape[0]):
        st = _new_state(seed, path_lo + np.uint64(b), TAG_PLAIN)
        x = out_x[b]
        x[:] = x0
        u, dr, s = _tau_kernel(r_ptr, r_idx, r_nu, zeta, kappa, cap, x, T, h, st, max_events)
        out_updates[b] = u
        out_draws[b] = dr
        if s != 0:
            status = s
    return status


def _check_horizon(T: float) -> float:
    T = float(T)
    if not math.isfinite(T) or T < 0.0:
        raise ValueError(f"horizon must be finite and >= 0, got {T}")
    return T


def exact_path(
    network: ReactionNetwork,
    x0: State,
    T: float,
    stream,
    method: str = "next-reaction",
    max_events: int = DEFAULT_MAX_EVENTS,
) -> PathResult:
    """Statistically exact draw of X(T) started from ``x0``.

    ``method`` selects "next-reaction" (default) or "direct"; both sample
    the same law.  Raises :class:`BudgetExceededError` past ``max_events``
    reaction events.
    """
    network.check_state(x0)
    T = _check_horizon(T)
    if np.any(x0.counts < 0):
        raise ValueError("exact paths require a nonnegative initial state")
    if method not in ("next-reaction", "direct"):
        raise ValueError(f"unknown exact method {method!r}")
    _, zeta, kappa, cap = network.kernel_arrays()
    r_ptr, r_idx, r_nu = network.reactant_csr
    st = _new_state(
        _as_u64(stream.seed), _as_u64(stream.path_index), TAG_PLAIN
    )
    x = x0.counts.copy()
    if method == "direct":
        updates, draws, status = _direct_kernel(
            r_ptr, r_idx, r_nu, zeta, kappa, cap, x, T, st, max_events
        )
    else:
        updates, draws, status = _nrm_kernel(
            r_ptr, r_idx, r_nu, zeta, kappa, cap, x, T, st, max_events
        )
    if status != 0:
        raise BudgetExceededError("path budget exceeded")
    return PathResult(State(x, T), int(updates), int(draws))


def tau_leap_path(
    network: ReactionNetwork,
    x0: State,
    T: float,
    h: float,
    stream,
    max_events: int = DEFAULT_MAX_EVENTS,
) -> PathResult:
    """Euler tau-leap approximation of X(T) with step size ``h``.

    The final step is clamped to land exactly on the horizon.  Counts may
    go negative; the propensity indicator silences any channel that would
    consume a species below its requirement.
    """
    network.check_state(x0)
    T = _check_horizon(T)
    h = float(h)
    if not math.isfinite(h) or h <= 0.0:
        raise ValueError(f"step size must be positive, got {h}")
    _, zeta, kappa, cap = network.kernel_arrays()
    r_ptr, r_idx, r_nu = network.reactant_csr
    st = _new_state(
        _as_u64(stream.seed), _as_u64(stream.path_index), TAG_PLAIN
    )
    x = x0.counts.copy()
    updates, draws, status = _tau_kernel(
        r_ptr, r_idx, r_nu, zeta, kappa, cap, x, T, h, st, max_events
    )
    if status != 0:
        raise BudgetExceededError("path budget exceeded")
    return PathResult(State(x, T), int(updates), int(draws))
