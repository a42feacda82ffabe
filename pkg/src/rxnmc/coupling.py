"""Coupled-pair simulators for variance reduction.

Three constructions, all built on the same split: each reaction channel is
driven by a shared Poisson channel running at the minimum of the two
marginal propensities plus one excess channel per side.  The shared channel
makes the two processes jump together whenever their propensities agree, so
the variance of pathwise differences stays small, while each marginal keeps
exactly its own law.

* tau/tau at adjacent step sizes (nested grids, coarse propensities frozen
  across the fine substeps of one coarse step),
* exact/tau (internal next-reaction clocks over three channel families, with
  the tau side frozen between grid boundaries),
* exact/exact over an explicit channel map between two different networks
  (the control-variate construction; unpaired channels run independently).

Randomness: the three channel families of a pair draw from disjoint tagged
substreams of the pair's ``(seed, path_index)``, so a coupled pair is a pure
function of its path identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .model import ModelError, ReactionNetwork, State, _all_propensities_csr
from .paths import DEFAULT_MAX_EVENTS, BudgetExceededError
from .stochastics import _as_u64, _exponential, _new_state, _poisson

__all__ = [
    "ChannelMap",
    "CoupledPairResult",
    "coupled_exact_exact",
    "coupled_exact_tau",
    "coupled_tau_pair",
]

TAG_SHARED = np.uint64(1)
TAG_FINE_EXCESS = np.uint64(2)
TAG_COARSE_EXCESS = np.uint64(3)


@dataclass(frozen=True)
class CoupledPairResult:
    """Terminal states of a coupled pair plus cost accounting.

    ``fine_final`` is the first (fine / exact / primary) marginal and
    ``coarse_final`` the second (coarse / tau / control) marginal.
    """

    fine_final: State
    coarse_final: State
    updates: int
    rng_draws: int


@dataclass(frozen=True)
class ChannelMap:
    """Pairing of reaction channels between two networks.

    ``pairs`` lists (reaction index in network A, reaction index in network
    B) that share a coupled channel; every other channel runs independently
    on its own side.  Paired reactions need not have equal net change.
    """

    pairs: tuple[tuple[int, int], ...]

    def __init__(self, pairs):
        object.__setattr__(
            self, "pairs", tuple((int(a), int(b)) for a, b in pairs)
        )

    def validate(self, net_a: ReactionNetwork, net_b: ReactionNetwork) -> None:
        seen_a: set[int] = set()
        seen_b: set[int] = set()
        for a, b in self.pairs:
            if not 0 <= a < net_a.num_reactions:
                raise ModelError(f"channel map index {a} invalid for network A")
            if not 0 <= b < net_b.num_reactions:
                raise ModelError(f"channel map index {b} invalid for network B")
            if a in seen_a or b in seen_b:
                raise ModelError("channel map reuses a reaction index")
            seen_a.add(a)
            seen_b.add(b)

    def unpaired_a(self, net_a: ReactionNetwork) -> tuple[int, ...]:
        used = {a for a, _ in self.pairs}
        return tuple(k for k in range(net_a.num_reactions) if k not in used)

    def unpaired_b(self, net_b: ReactionNetwork) -> tuple[int, ...]:
        used = {b for _, b in self.pairs}
        return tuple(k for k in range(net_b.num_reactions) if k not in used)


@njit(cache=True, nogil=True)
def _coupled_tau_kernel(r_ptr, r_idx, r_nu, zeta, kappa, cap, xf, xc, h_fine, M, n_coarse,
                        st1, st2, st3, max_events):
    """Nested-grid coupled tau-leap pair.

    Fine substeps j = 0..M-1 inside each coarse step; the coarse propensity
    vector is evaluated once per coarse step and never refreshed inside the
    inner loop.  Per channel and substep the shared rate is the pairwise
    minimum; at most one of the two excess rates is nonzero.
    """
    R = kappa.size
    d = xf.size
    updates = 0
    draws = 0
    lamf = np.empty(R, dtype=np.float64)
    lamc = np.empty(R, dtype=np.float64)
    for _ in range(n_coarse):
        _all_propensities_csr(r_ptr, r_idx, r_nu, kappa, cap, xc, lamc)
        for _ in range(M):
            _all_propensities_csr(r_ptr, r_idx, r_nu, kappa, cap, xf, lamf)
            for k in range(R):
                a1 = min(lamf[k], lamc[k])
                a2 = lamf[k] - a1
                a3 = lamc[k] - a1
                n_both = 0
                n_fine = 0
                n_coarse_only = 0
                if a1 > 0.0:
                    n_both = _poisson(st1, a1 * h_fine)
                    draws += 1
                if a2 > 0.0:
                    n_fine = _poisson(st2, a2 * h_fine)
                    draws += 1
                    updates += 1
                if a3 > 0.0:
                    n_coarse_only = _poisson(st3, a3 * h_fine)
                    draws += 1
                    updates += 1
                nf = n_both + n_fine
                nc = n_both + n_coarse_only
                if nf != 0 or nc != 0:
                    for i in range(d):
                        xf[i] += zeta[k, i] * nf
                        xc[i] += zeta[k, i] * nc
            updates += R
            if updates >= max_events:
                return updates, draws, 1
    return updates, draws, 0


@njit(cache=True, nogil=True)
def _exact_tau_kernel(r_ptr, r_idx, r_nu, zeta, kappa, cap, xx, xz, T, h,
                      st1, st2, st3, max_events):
    """Coupled exact/tau pair via next-reaction clocks on 3R channels.

    Family 1 fires both processes, family 2 only the exact one, family 3
    only the tau one.  The tau side sees a frozen copy of itself that is
    refreshed at every grid boundary; ties in the next-event scan resolve to
    the smallest (channel, family) pair.

    Returns (updates, draws, exact_events, status); ``exact_events`` counts
    the firings of the exact marginal alone (families 1 and 2).
    """
    R = kappa.size
    d = xx.size
    updates = 0
    draws = 0
    x_events = 0
    P = np.empty((R, 3), dtype=np.float64)
    Tk = np.zeros((R, 3), dtype=np.float64)
    A = np.empty((R, 3), dtype=np.float64)
    for k in range(R):
        P[k, 0] = _exponential(st1)
        P[k, 1] = _exponential(st2)
        P[k, 2] = _exponential(st3)
    draws += 3 * R
    zt = xz.copy()  # tau state frozen between grid boundaries
    lamx = np.empty(R, dtype=np.float64)
    lamz = np.empty(R, dtype=np.float64)
    _all_propensities_csr(r_ptr, r_idx, r_nu, kappa, cap, xx, lamx)
    _all_propensities_csr(r_ptr, r_idx, r_nu, kappa, cap, zt, lamz)
    t = 0.0
    t_grid = h if h < T else T
    while t < T:
        for k in range(R):
            a1 = min(lamx[k], lamz[k])
            A[k, 0] = a1
            A[k, 1] = lamx[k] - a1
            A[k, 2] = lamz[k] - a1
        dt_min = np.inf
        mk = -1
        mi = -1
        for k in range(R):
            for i in range(3):
                if A[k, i] > 0.0:
                    dt = (P[k, i] - Tk[k, i]) / A[k, i]
                    if dt < dt_min:
                        dt_min = dt
                        mk = k
                        mi = i
        if mk < 0 or t + dt_min >= t_grid:
            # grid boundary (or horizon) reached before the next event
            delta = t_grid - t
            for k in range(R):
                for i in range(3):
                    Tk[k, i] += A[k, i] * delta
            t = t_grid
            if t >= T:
                break
            for i in range(d):
                zt[i] = xz[i]
            _all_propensities_csr(r_ptr, r_idx, r_nu, kappa, cap, zt, lamz)
            t_grid = t_grid + h
            if t_grid > T:
                t_grid = T
            continue
        for k in range(R):
            for i in range(3):
                Tk[k, i] += A[k, i] * dt_min
        if mi == 0:
            for i in range(d):
                xx[i] += zeta[mk, i]
                xz[i] += zeta[mk, i]
            P[mk, 0] += _exponential(st1)
            _all_propensities_csr(r_ptr, r_idx, r_nu, kappa, cap, xx, lamx)
            x_events += 1
        elif mi == 1:
            for i in range(d):
                xx[i] += zeta[mk, i]
            P[mk, 1] += _exponential(st2)
            _all_propensities_csr(r_ptr, r_idx, r_nu, kappa, cap, xx, lamx)
            x_events += 1
        else:
            for i in range(d):
                xz[i] += zeta[mk, i]
            P[mk, 2] += _exponential(st3)
        draws += 1
        t += dt_min
        updates += 1
        if updates >= max_events:
            return updates, draws, x_events, 1
    return updates, draws, x_events, 0


@njit(cache=True, nogil=True)
def _exact_exact_kernel(ra_ptr, ra_idx, ra_nu, zeta_a, kappa_a, cap_a,
                        rb_ptr, rb_idx, rb_nu, zeta_b, kappa_b, cap_b,
                        chan_a, chan_b, fam,
                        xa, xb, T, st1, st2, st3, max_events):
    """Joint exact chain over a channel table.

    Each table entry carries (reaction in A or -1, reaction in B or -1,
    family).  Family 1 entries run at the pairwise minimum rate and fire
    both sides; family 2/3 entries carry the excess (or the full rate for
    unpaired channels) and fire one side only.
    """
    n_chan = fam.size
    da = xa.size
    db = xb.size
    updates = 0
    draws = 0
    P = np.empty(n_chan, dtype=np.float64)
    Tk = np.zeros(n_chan, dtype=np.float64)
    rate = np.empty(n_chan, dtype=np.float64)
    for j in range(n_chan):
        if fam[j] == 1:
            P[j] = _exponential(st1)
        elif fam[j] == 2:
            P[j] = _exponential(st2)
        else:
            P[j] = _exponential(st3)
    draws += n_chan
    lama = np.empty(kappa_a.size, dtype=np.float64)
    lamb = np.empty(kappa_b.size, dtype=np.float64)
    t = 0.0
    while t < T:
        _all_propensities_csr(ra_ptr, ra_idx, ra_nu, kappa_a, cap_a, xa, lama)
        _all_propensities_csr(rb_ptr, rb_idx, rb_nu, kappa_b, cap_b, xb, lamb)
        for j in range(n_chan):
            ka = chan_a[j]
            kb = chan_b[j]
            if fam[j] == 1:
                rate[j] = min(lama[ka], lamb[kb])
            elif fam[j] == 2:
                r = lama[ka]
                if kb >= 0:
                    r -= min(lama[ka], lamb[kb])
                rate[j] = r
            else:
                r = lamb[kb]
                if ka >= 0:
                    r -= min(lama[ka], lamb[kb])
                rate[j] = r
        dt_min = np.inf
        mj = -1
        for j in range(n_chan):
            if rate[j] > 0.0:
                dt = (P[j] - Tk[j]) / rate[j]
                if dt < dt_min:
                    dt_min = dt
                    mj = j
        if mj < 0 or t + dt_min >= T:
            break
        for j in range(n_chan):
            Tk[j] += rate[j] * dt_min
        if fam[mj] != 3:
            ka = chan_a[mj]
            for i in range(da):
                xa[i] += zeta_a[ka, i]
        if fam[mj] != 2:
            kb = chan_b[mj]
            for i in range(db):
                xb[i] += zeta_b[kb, i]
        if fam[mj] == 1:
            P[mj] += _exponential(st1)
        elif fam[mj] == 2:
            P[mj] += _exponential(st2)
        else:
            P[mj] += _exponential(st3)
        draws += 1
        t += dt_min
        updates += 1
        if updates >= max_events:
            return updates, draws, 1
    return updates, draws, 0


@njit(cache=True, nogil=True)
def _coupled_tau_batch(r_ptr, r_idx, r_nu, zeta, kappa, cap, x0, h_fine, M, n_coarse, seed,
                       path_lo, max_events, out_xf, out_xc, out_updates,
                       out_draws):
    status = 0
    for b in range(out_xf.shape[0]):
        pidx = path_lo + np.uint64(b)
        st1 = _new_state(seed, pidx, TAG_SHARED)
        st2 = _new_state(seed, pidx, TAG_FINE_EXCESS)
        st3 = _new_state(seed, pidx, TAG_COARSE_EXCESS)
        xf = out_xf[b]
        xc = out_xc[b]
        xf[:] = x0
        xc[:] = x0
        u, dr, s = _coupled_tau_kernel(
            r_ptr, r_idx, r_nu, zeta, kappa, cap, xf, xc, h_fine, M, n_coarse,
            st1, st2, st3, max_events
        )
        out_updates[b] = u
        out_draws[b] = dr
        if s != 0:
            status = s
    return status


@njit(cache=True, nogil=True)
def _exact_tau_batch(r_ptr, r_idx, r_nu, zeta, kappa, cap, x0, T, h, seed, path_lo,
                     max_events, out_xx, out_xz, out_updates, out_draws,
                     out_xevents):
    status = 0
    for b in range(out_xx.shape[0]):
        pidx = path_lo + np.uint64(b)
        st1 = _new_state(seed, pidx, TAG_SHARED)
        st2 = _new_state(seed, pidx, TAG_FINE_EXCESS)
        st3 = _new_state(seed, pidx, TAG_COARSE_EXCESS)
        xx = out_xx[b]
        xz = out_xz[b]
        xx[:] = x0
        xz[:] = x0
        u, dr, xe, s = _exact_tau_kernel(
            r_ptr, r_idx, r_nu, zeta, kappa, cap, xx, xz, T, h, st1, st2,
            st3, max_events
        )
        out_updates[b] = u
        out_draws[b] = dr
        out_xevents[b] = xe
        if s != 0:
            status = s
    return status


@njit(cache=True, nogil=True)
def _exact_exact_batch(ra_ptr, ra_idx, ra_nu, zeta_a, kappa_a, cap_a,
                       rb_ptr, rb_idx, rb_nu, zeta_b, kappa_b, cap_b,
                       chan_a, chan_b, fam, x0a, x0b, T, seed, path_lo,
                       max_events, out_xa, out_xb, out_updates, out_draws):
    status = 0
    for b in range(out_xa.shape[0]):
        pidx = path_lo + np.uint64(b)
        st1 = _new_state(seed, pidx, TAG_SHARED)
        st2 = _new_state(seed, pidx, TAG_FINE_EXCESS)
        st3 = _new_state(seed, pidx, TAG_COARSE_EXCESS)
        xa = out_xa[b]
        xb = out_xb[b]
        xa[:] = x0a
        xb[:] = x0b
        u, dr, s = _exact_exact_kernel(
            ra_ptr, ra_idx, ra_nu, zeta_a, kappa_a, cap_a,
            rb_ptr, rb_idx, rb_nu, zeta_b, kappa_b, cap_b,
            chan_a, chan_b, fam, xa, xb, T, st1, st2, st3, max_events
        )
        out_updates[b] = u
        out_draws[b] = dr
        if s != 0:
            status = s
    return status


def _coarse_step_count(T: float, h_fine: float, M: int) -> int:
    """Number of coarse steps; the coarse grid must tile [0, T] exactly."""
    h_coarse = M * h_fine
    n = T / h_coarse
    n_round = int(round(n))
    if n_round < 1 or abs(n - n_round) > 1e-9 * max(1.0, abs(n)):
        raise ValueError(
            f"coarse step M*h_fine = {h_coarse!r} does not divide the "
            f"horizon {T!r}"
        )
    return n_round


def _channel_table(net_a: ReactionNetwork, net_b: ReactionNetwork,
                   channel_map: ChannelMap):
    """Flatten a channel map into (chan_a, chan_b, fam) kernel arrays.

    Entry order (paired triples first, then unpaired A, then unpaired B)
    fixes the tie-break order of the joint next-reaction scan.
    """
    chan_a: list[int] = []
    chan_b: list[int] = []
    fam: list[int] = []
    for a, b in channel_map.pairs:
        for f in (1, 2, 3):
            chan_a.append(a)
            chan_b.append(b)
            fam.append(f)
    for a in channel_map.unpaired_a(net_a):
        chan_a.append(a)
        chan_b.append(-1)
        fam.append(2)
    for b in channel_map.unpaired_b(net_b):
        chan_a.append(-1)
        chan_b.append(b)
        fam.append(3)
    return (
        np.array(chan_a, dtype=np.int64),
        np.array(chan_b, dtype=np.int64),
        np.array(fam, dtype=np.int64),
    )


def _pair_streams(stream):
    seed = _as_u64(stream.seed)
    pidx = _as_u64(stream.path_index)
    return (
        _new_state(seed, pidx, TAG_SHARED),
        _new_state(seed, pidx, TAG_FINE_EXCESS),
        _new_state(seed, pidx, TAG_COARSE_EXCESS),
    )


def _run_coupled_tau(network, x0, T, h_fine, M, stream, max_events):
    network.check_state(x0)
    T = float(T)
    if not math.isfinite(T) or T < 0.0:
        raise ValueError(f"horizon must be finite and >= 0, got {T}")
    h_fine = float(h_fine)
    if not math.isfinite(h_fine) or h_fine <= 0.0:
        raise ValueError(f"step size must be positive, got {h_fine}")
    if T == 0.0:
        return CoupledPairResult(State(x0.counts, 0.0), State(x0.counts, 0.0), 0, 0)
    n_coarse = _coarse_step_count(T, h_fine, M)
    _, zeta, kappa, cap = network.kernel_arrays()
    r_ptr, r_idx, r_nu = network.reactant_csr
    st1, st2, st3 = _pair_streams(stream)
    xf = x0.counts.copy()
    xc = x0.counts.copy()
    updates, draws, status = _coupled_tau_kernel(
        r_ptr, r_idx, r_nu, zeta, kappa, cap, xf, xc, h_fine, M,
        n_coarse, st1, st2, st3, max_events
    )
    if status != 0:
        raise BudgetExceededError("path budget exceeded")
    return CoupledPairResult(State(xf, T), State(xc, T), int(updates), int(draws))


def coupled_tau_pair(
    network: ReactionNetwork,
    x0: State,
    T: float,
    h_fine: float,
    M: int,
    stream,
    max_events: int = DEFAULT_MAX_EVENTS,
) -> CoupledPairResult:
    """Coupled tau-leap pair at step sizes (h_fine, M * h_fine).

    Both marginals are distributed exactly as plain tau-leaping at their own
    step size.  ``M * h_fine`` must tile the horizon.
    """
    if int(M) != M or int(M) < 2:
        raise ValueError(f"refinement factor M must be an integer >= 2, got {M}")
    return _run_coupled_tau(network, x0, T, h_fine, int(M), stream, max_events)


def coupled_exact_tau(
    network: ReactionNetwork,
    x0: State,
    T: float,
    h: float,
    stream,
    max_events: int = DEFAULT_MAX_EVENTS,
) -> CoupledPairResult:
    """Coupled exact/tau pair: an exact path tied to a tau-leap path at ``h``.

    The exact marginal (``fine_final``) is a statistically exact draw; the
    tau marginal (``coarse_final``) is distributed as plain tau-leaping.
    """
    network.check_state(x0)
    T = float(T)
    if not math.isfinite(T) or T < 0.0:
        raise ValueError(f"horizon must be finite and >= 0, got {T}")
    h = float(h)
    if not math.isfinite(h) or h <= 0.0:
        raise ValueError(f"step size must be positive, got {h}")
    if np.any(x0.counts < 0):
        raise ValueError("exact paths require a nonnegative initial state")
    _, zeta, kappa, cap = network.kernel_arrays()
    r_ptr, r_idx, r_nu = network.reactant_csr
    st1, st2, st3 = _pair_streams(stream)
    xx = x0.counts.copy()
    xz = x0.counts.copy()
    updates, draws, _, status = _exact_tau_kernel(
        r_ptr, r_idx, r_nu, zeta, kappa, cap, xx, xz, T, h, st1, st2,
        st3, max_events
    )
    if status != 0:
        raise BudgetExceededError("path budget exceeded")
    return CoupledPairResult(State(xx, T), State(xz, T), int(updates), int(draws))


def coupled_exact_exact(
    net_a: ReactionNetwork,
    net_b: ReactionNetwork,
    x0a: State,
    x0b: State,
    T: float,
    channel_map: ChannelMap,
    stream,
    max_events: int = DEFAULT_MAX_EVENTS,
) -> CoupledPairResult:
    """Joint exact simulation of two networks sharing mapped channels.

    Both marginals are exact chains of their own networks; an empty map
    yields two independent exact paths.
    """
    net_a.check_state(x0a)
    net_b.check_state(x0b)
    channel_map.validate(net_a, net_b)
    T = float(T)
    if not math.isfinite(T) or T < 0.0:
        raise ValueError(f"horizon must be finite and >= 0, got {T}")
    if np.any(x0a.counts < 0) or np.any(x0b.counts < 0):
        raise ValueError("exact paths require nonnegative initial states")
    chan_a, chan_b, fam = _channel_table(net_a, net_b, channel_map)
    st1, st2, st3 = _pair_streams(stream)
    xa = x0a.counts.copy()
    xb = x0b.counts.copy()
    ra = net_a.reactant_csr
    rb = net_b.reactant_csr
    updates, draws, status = _exact_exact_kernel(
        ra[0], ra[1], ra[2], net_a.zeta_matrix, net_a.rate_constants,
        net_a.caps, rb[0], rb[1], rb[2], net_b.zeta_matrix,
        net_b.rate_constants, net_b.caps,
        chan_a, chan_b, fam, xa, xb, T, st1, st2, st3, max_events
    )
    if status != 0:
        raise BudgetExceededError("path budget exceeded")
    return CoupledPairResult(State(xa, T), State(xb, T), int(updates), int(draws))
