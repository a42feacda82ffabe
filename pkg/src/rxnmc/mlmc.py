"""Multilevel Monte Carlo assembly: level estimators, pilots, allocation.

An estimate is a telescoping sum over levels.  The base level is plain
tau-leaping at the coarsest step ``T * M**-ell0``; each middle level is the
mean of f(fine) - f(coarse) over coupled tau pairs at adjacent steps; the
optional top level couples an exact path to the finest tau path, which
removes the discretization bias entirely.  A pilot run per level fits K = (updates per
path) x (variance per path), the closed-form allocator splits the variance
budget (epsilon/z)^2 across levels proportionally to sqrt(K), and each level
then samples in batches until its estimator variance falls below target.

Determinism: paths are keyed by (run stage, level slot, path number) packed
into the stream path index, and batches merge in a fixed order, so results
are bit-identical for any worker count.
"""

from __future__ import annotations

import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Callable, Sequence

import numpy as np

from .coupling import (
    ChannelMap,
    _channel_table,
    _coupled_tau_batch,
    _exact_exact_batch,
    _exact_tau_batch,
)
from .model import Observable, ReactionNetwork, ScalingProfile, State
from .paths import (
    BudgetExceededError,
    DEFAULT_MAX_EVENTS,
    _exact_batch,
    _tau_batch,
)
from .stochastics import RandomStream, _as_u64

__all__ = [
    "EstimateReport",
    "LevelPlan",
    "LevelStats",
    "a_of_h",
    "allocate",
    "cmc_exact",
    "cmc_tau",
    "control_variate",
    "mlmc_biased",
    "mlmc_unbiased",
    "pilot",
]

MIN_SAMPLES = 100
BATCH_SIZE = 1000
PILOT_SAMPLES = 100

# Path-index packing: (run stage << 56) | (level slot << 40) | path number.
_RUN_PILOT = 1
_RUN_MAIN = 2
_SLOT_SHIFT = 40
_RUN_SHIFT = 56


def _quantile(confidence: float) -> float:
    confidence = float(confidence)
    if not 0.0 < confidence < 1.0:
        raise ValueError(f"confidence must be in (0, 1), got {confidence}")
    return NormalDist().inv_cdf(0.5 + confidence / 2.0)


def a_of_h(profile: ScalingProfile, h: float) -> float:
    """Predicted squared coupling distance weight at step size h.

    Evaluates N^-rho * (N^gamma h) + (N^gamma h)^2; used only in diagnostics
    and reporting of predicted level weights.
    """
    h = float(h)
    if not h > 0.0:
        raise ValueError(f"step size must be positive, got {h}")
    x = profile.N ** profile.gamma * h
    return profile.N ** (-profile.rho) * x + x * x


def allocate(level_costs: Sequence[float], epsilon: float, z: float = 1.96) -> np.ndarray:
    """Split the variance budget (epsilon/z)^2 across levels.

    Minimizes sum K_l / V_l subject to sum V_l = (epsilon/z)^2, whose
    stationary point is V_l proportional to sqrt(K_l).  Levels with K = 0
    get V = 0 (they run at the fixed minimum sample count).
    """
    K = np.asarray(level_costs, dtype=np.float64)
    if K.ndim != 1 or K.size == 0:
        raise ValueError("need at least one level cost")
    if np.any(~np.isfinite(K)) or np.any(K < 0):
        raise ValueError("level costs must be finite and >= 0")
    epsilon = float(epsilon)
    if not epsilon > 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    z = float(z)
    if not z > 0.0:
        raise ValueError(f"confidence quantile must be positive, got {z}")
    budget = (epsilon / z) ** 2
    roots = np.sqrt(K)
    total = roots.sum()
    if total == 0.0:
        warnings.warn(
            "all level costs are zero; falling back to a uniform minimal "
            "allocation",
            stacklevel=2,
        )
        return np.full(K.size, budget / K.size)
    return budget * roots / total


@dataclass(frozen=True)
class LevelPlan:
    """Level hierarchy: step sizes h_l = T * M**-l for l in ell0..L.

    ``include_exact_level`` adds the exact/tau coupled level on top, making
    the telescoping estimator exactly unbiased.
    """

    M: int
    ell0: int
    L: int
    include_exact_level: bool = True

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 2:
            raise ValueError(f"refinement factor M must be an integer >= 2, got {self.M}")
        if int(self.ell0) != self.ell0 or int(self.L) != self.L:
            raise ValueError("levels must be integers")
        if self.ell0 < 0 or self.ell0 > self.L:
            raise ValueError(
                f"need 0 <= ell0 <= L, got ell0={self.ell0}, L={self.L}"
            )

    def h(self, ell: int, T: float) -> float:
        return float(T) * float(self.M) ** (-int(ell))


@dataclass
class LevelStats:
    """Per-level sampling record: streaming moments and cost accounting."""

    kind: str
    level: int | None
    h: float | None
    h_coarse: float | None
    n: int
    mean: float
    variance: float
    estimator_variance: float
    updates: int
    rng_draws: int
    K: float | None = None
    target_variance: float | None = None


@dataclass
class EstimateReport:
    """Point estimate with confidence half-width and per-level breakdown.

    The estimate is the exact sum of the level means, coarsest level first.
    Wall time is informational and excluded from the canonical serialized
    form so reports replay byte-identically.
    """

    method: str
    estimate: float
    half_width: float
    epsilon: float
    confidence: float
    seed: int
    levels: list[LevelStats]
    total_updates: int
    total_rng_draws: int
    pilot_updates: int
    wall_time_s: float
    plan: dict | None = None
    bias_note: str | None = None
    recommend_exact_fallback: bool = False
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        """Canonical machine-readable form (deterministic key order)."""
        return {
            "format_version": 1,
            "method": self.method,
            "estimate": self.estimate,
            "half_width": self.half_width,
            "epsilon": self.epsilon,
            "confidence": self.confidence,
            "seed": self.seed,
            "plan": self.plan,
            "levels": [
                {
                    "kind": s.kind,
                    "level": s.level,
                    "h": s.h,
                    "h_coarse": s.h_coarse,
                    "n": s.n,
                    "mean": s.mean,
                    "variance": s.variance,
                    "estimator_variance": s.estimator_variance,
                    "updates": s.updates,
                    "rng_draws": s.rng_draws,
                    "K": s.K,
                    "target_variance": s.target_variance,
                }
                for s in self.levels
            ],
            "totals": {
                "updates": self.total_updates,
                "rng_draws": self.total_rng_draws,
                "pilot_updates": self.pilot_updates,
            },
            "bias_note": self.bias_note,
            "recommend_exact_fallback": self.recommend_exact_fallback,
            "notes": self.notes,
        }


@dataclass
class _BatchResult:
    f: np.ndarray
    updates: int
    draws: int
    status: int
    f_aux: np.ndarray | None = None
    aux_updates: int = 0


class _Accum:
    """One-pass mean/variance accumulator with order-fixed pairwise merge."""

    __slots__ = ("n", "mean", "m2", "updates", "draws")

    def __init__(self):
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0
        self.updates = 0
        self.draws = 0

    def add_values(self, f: np.ndarray) -> None:
        nb = int(f.size)
        if nb == 0:
            return
        mb = float(f.mean())
        m2b = float(((f - mb) ** 2).sum())
        n_new = self.n + nb
        delta = mb - self.mean
        self.mean += delta * nb / n_new
        self.m2 += m2b + delta * delta * self.n * nb / n_new
        self.n = n_new

    @property
    def variance(self) -> float:
        return self.m2 / (self.n - 1) if self.n > 1 else 0.0

    @property
    def variance_of_mean(self) -> float:
        return self.variance / self.n if self.n else math.inf


@dataclass
class _Level:
    kind: str
    level: int | None
    h: float | None
    h_coarse: float | None
    sampler: Callable


class _Budget:
    """Global update budget shared by every stage of one estimator run."""

    def __init__(self, limit: int | None):
        self.limit = limit
        self.used = 0

    def charge(self, updates: int) -> None:
        self.used += int(updates)
        if self.limit is not None and self.used > self.limit:
            raise BudgetExceededError(
                f"total update budget exceeded ({self.used} > {self.limit})"
            )


def _seed_of(stream) -> int:
    if isinstance(stream, RandomStream):
        return stream.seed
    return int(stream)


def _path_base(run_tag: int, slot: int) -> int:
    return (run_tag << _RUN_SHIFT) | (slot << _SLOT_SHIFT)


def _counts_of(x0: State) -> np.ndarray:
    return np.ascontiguousarray(x0.counts, dtype=np.int64)


def _tau_level(network: ReactionNetwork, x0c, T, h, observable, level=None):
    _, zeta, kappa, cap = network.kernel_arrays()
    r_ptr, r_idx, r_nu = network.reactant_csr
    d = network.num_species

    def sampler(seed, path_lo, size, max_events):
        out_x = np.empty((size, d), dtype=np.int64)
        ups = np.empty(size, dtype=np.int64)
        drs = np.empty(size, dtype=np.int64)
        status = _tau_batch(
            r_ptr, r_idx, r_nu, zeta, kappa, cap, x0c, T, h, seed, path_lo,
            max_events, out_x, ups, drs,
        )
        return _BatchResult(observable(out_x), int(ups.sum()), int(drs.sum()), status)

    return _Level("tau", level, h, None, sampler)


def _exact_level(network: ReactionNetwork, x0c, T, observable, use_direct=False):
    _, zeta, kappa, cap = network.kernel_arrays()
    r_ptr, r_idx, r_nu = network.reactant_csr
    d = network.num_species

    def sampler(seed, path_lo, size, max_events):
        out_x = np.empty((size, d), dtype=np.int64)
        ups = np.empty(size, dtype=np.int64)
        drs = np.empty(size, dtype=np.int64)
        status = _exact_batch(
            r_ptr, r_idx, r_nu, zeta, kappa, cap, x0c, T, seed, path_lo,
            use_direct, max_events, out_x, ups, drs,
        )
        return _BatchResult(observable(out_x), int(ups.sum()), int(drs.sum()), status)

    return _Level("exact", None, None, None, sampler)


def _coupled_tau_level(network, x0c, T, h_fine, M, n_coarse, observable, level):
    _, zeta, kappa, cap = network.kernel_arrays()
    r_ptr, r_idx, r_nu = network.reactant_csr
    d = network.num_species

    def sampler(seed, path_lo, size, max_events):
        out_f = np.empty((size, d), dtype=np.int64)
        out_c = np.empty((size, d), dtype=np.int64)
        ups = np.empty(size, dtype=np.int64)
        drs = np.empty(size, dtype=np.int64)
        status = _coupled_tau_batch(
            r_ptr, r_idx, r_nu, zeta, kappa, cap, x0c, h_fine, M, n_coarse,
            seed, path_lo, max_events, out_f, out_c, ups, drs,
        )
        f = observable(out_f) - observable(out_c)
        return _BatchResult(f, int(ups.sum()), int(drs.sum()), status)

    return _Level("coupled-tau", level, h_fine, M * h_fine, sampler)


def _exact_coupled_level(network, x0c, T, h, observable, level):
    _, zeta, kappa, cap = network.kernel_arrays()
    r_ptr, r_idx, r_nu = network.reactant_csr
    d = network.num_species

    def sampler(seed, path_lo, size, max_events):
        out_x = np.empty((size, d), dtype=np.int64)
        out_z = np.empty((size, d), dtype=np.int64)
        ups = np.empty(size, dtype=np.int64)
        drs = np.empty(size, dtype=np.int64)
        xev = np.empty(size, dtype=np.int64)
        status = _exact_tau_batch(
            r_ptr, r_idx, r_nu, zeta, kappa, cap, x0c, T, h, seed, path_lo,
            max_events, out_x, out_z, ups, drs, xev,
        )
        fx = observable(out_x)
        f = fx - observable(out_z)
        return _BatchResult(
            f, int(ups.sum()), int(drs.sum()), status, fx, int(xev.sum())
        )

    return _Level("exact-coupled", level, h, None, sampler)


def _cv_base_level(network, x0c, T, observable, use_direct=False):
    lv = _exact_level(network, x0c, T, observable, use_direct)
    return _Level("cv-base", None, None, None, lv.sampler)


def _cv_diff_level(net_a, net_b, x0a, x0b, T, obs_a, obs_b, channel_map):
    chan_a, chan_b, fam = _channel_table(net_a, net_b, channel_map)
    ra = net_a.reactant_csr
    rb = net_b.reactant_csr
    da = net_a.num_species
    db = net_b.num_species

    def sampler(seed, path_lo, size, max_events):
        out_a = np.empty((size, da), dtype=np.int64)
        out_b = np.empty((size, db), dtype=np.int64)
        ups = np.empty(size, dtype=np.int64)
        drs = np.empty(size, dtype=np.int64)
        status = _exact_exact_batch(
            ra[0], ra[1], ra[2], net_a.zeta_matrix, net_a.rate_constants,
            net_a.caps, rb[0], rb[1], rb[2], net_b.zeta_matrix,
            net_b.rate_constants, net_b.caps,
            chan_a, chan_b, fam, x0a, x0b, T, seed, path_lo, max_events,
            out_a, out_b, ups, drs,
        )
        f = obs_a(out_a) - obs_b(out_b)
        return _BatchResult(f, int(ups.sum()), int(drs.sum()), status)

    return _Level("cv-diff", None, None, None, sampler)


def _sample_level(level, seed, slot, run_tag, *, n_fixed=None, target_var=None,
                  min_n=MIN_SAMPLES, batch_size=BATCH_SIZE, workers=1,
                  max_events=DEFAULT_MAX_EVENTS, budget=None):
    """Sample one level and return (summand accum, auxiliary accum).

    ``n_fixed`` runs exactly that many paths (pilot mode); otherwise batches
    continue until the level estimator variance drops to ``target_var``
    (``None`` means run the minimum count only).  Batches merge strictly in
    index order, so the outcome is independent of the worker count.
    """
    seed_u = _as_u64(seed)
    base = _path_base(run_tag, slot)
    acc = _Accum()
    aux = _Accum()

    def sizes():
        if n_fixed is not None:
            remaining = int(n_fixed)
            while remaining > 0:
                take = min(remaining, batch_size)
                yield take
                remaining -= take
            return
        yield min_n
        while True:
            yield batch_size

    def run_batch(lo, size):
        return level.sampler(seed_u, _as_u64(base + lo), size, max_events)

    def consume(res: _BatchResult) -> None:
        if res.status != 0:
            raise BudgetExceededError("path budget exceeded")
        acc.add_values(res.f)
        acc.updates += res.updates
        acc.draws += res.draws
        if res.f_aux is not None:
            aux.add_values(res.f_aux)
            aux.updates += res.aux_updates
        if budget is not None:
            budget.charge(res.updates)

    def stop_now() -> bool:
        if n_fixed is not None:
            return acc.n >= n_fixed
        if acc.n < min_n:
            return False
        if target_var is None:
            return True
        return acc.variance_of_mean <= target_var

    size_iter = sizes()
    if workers <= 1:
        lo = 0
        for size in size_iter:
            consume(run_batch(lo, size))
            lo += size
            if stop_now():
                break
    else:
        # speculative prefetch; merge strictly in submission order
        with ThreadPoolExecutor(max_workers=workers) as pool:
            pending = []
            lo = 0
            exhausted = False
            stopped = False
            while not stopped:
                while not exhausted and len(pending) < workers + 1:
                    size = next(size_iter, None)
                    if size is None:
                        exhausted = True
                        break
                    pending.append(pool.submit(run_batch, lo, size))
                    lo += size
                if not pending:
                    break
                consume(pending.pop(0).result())
                stopped = stop_now()
    return acc, aux


def _level_stats(level, acc, K=None, target=None) -> LevelStats:
    return LevelStats(
        kind=level.kind,
        level=level.level,
        h=level.h,
        h_coarse=level.h_coarse,
        n=acc.n,
        mean=acc.mean,
        variance=acc.variance,
        estimator_variance=acc.variance_of_mean,
        updates=acc.updates,
        rng_draws=acc.draws,
        K=K,
        target_variance=target,
    )


def _estimate_multilevel(levels, *, seed, epsilon, confidence, n_pilot,
                         min_n, batch_size, workers, max_events,
                         max_total_updates, method, plan_meta=None,
                         bias_note=None, check_fallback=False):
    t0 = time.perf_counter()
    z = _quantile(confidence)
    budget = _Budget(max_total_updates)
    notes: list[str] = []

    pilot_accs = []
    for slot, lv in enumerate(levels):
        acc, aux = _sample_level(
            lv, seed, slot, _RUN_PILOT, n_fixed=n_pilot, min_n=min_n,
            batch_size=batch_size, workers=workers, max_events=max_events,
            budget=budget,
        )
        pilot_accs.append((acc, aux))
    pilot_updates = sum(a.updates for a, _ in pilot_accs)

    K = np.array(
        [(a.updates / a.n) * a.variance if a.n else 0.0 for a, _ in pilot_accs]
    )
    V = allocate(K, epsilon, z)

    recommend = False
    if check_fallback:
        for lv, (acc, aux) in zip(levels, pilot_accs):
            if lv.kind == "exact-coupled" and aux.n > 0:
                exact_cost = aux.updates / aux.n
                var_fx = aux.variance
                predicted_exact = exact_cost * var_fx / (epsilon / z) ** 2
                predicted_mlmc = float(
                    sum(k / v for k, v in zip(K, V) if v > 0.0)
                )
                if predicted_mlmc >= predicted_exact > 0.0:
                    recommend = True
                    notes.append(
                        "pilot predicts no update-count speedup over exact "
                        "sampling with crude Monte Carlo; consider method "
                        "exact-cmc"
                    )

    stats = []
    for slot, lv in enumerate(levels):
        target = float(V[slot]) if K[slot] > 0.0 else None
        acc, _ = _sample_level(
            lv, seed, slot, _RUN_MAIN, target_var=target, min_n=min_n,
            batch_size=batch_size, workers=workers, max_events=max_events,
            budget=budget,
        )
        stats.append(_level_stats(lv, acc, K=float(K[slot]), target=target))

    estimate = 0.0
    var_total = 0.0
    for s in stats:
        estimate += s.mean
        var_total += s.estimator_variance
    half_width = z * math.sqrt(var_total)
    return EstimateReport(
        method=method,
        estimate=estimate,
        half_width=half_width,
        epsilon=float(epsilon),
        confidence=float(confidence),
        seed=int(seed),
        levels=stats,
        total_updates=sum(s.updates for s in stats) + pilot_updates,
        total_rng_draws=sum(s.rng_draws for s in stats),
        pilot_updates=pilot_updates,
        wall_time_s=time.perf_counter() - t0,
        plan=plan_meta,
        bias_note=bias_note,
        recommend_exact_fallback=recommend,
        notes=notes,
    )


def _check_estimator_args(network, x0, T, observable, epsilon, confidence):
    if x0 is None:
        x0 = network.initial_state()
    network.check_state(x0)
    observable.validate_for(network)
    T = float(T)
    if not math.isfinite(T) or T < 0.0:
        raise ValueError(f"horizon must be finite and >= 0, got {T}")
    if not float(epsilon) > 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    _quantile(confidence)
    return x0, T


def _single_level_estimate(level, *, seed, epsilon, confidence, min_n,
                           batch_size, workers, max_events,
                           max_total_updates, method, bias_note=None):
    t0 = time.perf_counter()
    z = _quantile(confidence)
    budget = _Budget(max_total_updates)
    target = (epsilon / z) ** 2
    acc, _ = _sample_level(
        level, seed, 0, _RUN_MAIN, target_var=target, min_n=min_n,
        batch_size=batch_size, workers=workers, max_events=max_events,
        budget=budget,
    )
    stats = [_level_stats(level, acc, target=target)]
    half_width = z * math.sqrt(acc.variance_of_mean)
    return EstimateReport(
        method=method,
        estimate=acc.mean,
        half_width=half_width,
        epsilon=float(epsilon),
        confidence=float(confidence),
        seed=int(seed),
        levels=stats,
        total_updates=acc.updates,
        total_rng_draws=acc.draws,
        pilot_updates=0,
        wall_time_s=time.perf_counter() - t0,
        bias_note=bias_note,
    )


def cmc_exact(
    network: ReactionNetwork,
    x0: State | None,
    T: float,
    observable: Observable,
    epsilon: float,
    confidence: float = 0.95,
    stream: RandomStream | int = 0,
    *,
    method: str = "next-reaction",
    min_paths: int = MIN_SAMPLES,
    batch_size: int = BATCH_SIZE,
    workers: int = 1,
    max_events: int = DEFAULT_MAX_EVENTS,
    max_total_updates: int | None = None,
) -> EstimateReport:
    """Crude Monte Carlo over exact paths, sequential stopping at epsilon.

    Samples until z * sd / sqrt(n) <= epsilon with at least ``min_paths``
    paths; the point estimate is unbiased.
    """
    x0, T = _check_estimator_args(network, x0, T, observable, epsilon, confidence)
    if np.any(x0.counts < 0):
        raise ValueError("exact paths require a nonnegative initial state")
    level = _exact_level(
        network, _counts_of(x0), T, observable, use_direct=(method == "direct")
    )
    return _single_level_estimate(
        level, seed=_seed_of(stream), epsilon=epsilon, confidence=confidence,
        min_n=min_paths, batch_size=batch_size, workers=workers,
        max_events=max_events, max_total_updates=max_total_updates,
        method="exact-cmc",
    )


def cmc_tau(
    network: ReactionNetwork,
    x0: State | None,
    T: float,
    observable: Observable,
    h: float,
    epsilon: float,
    confidence: float = 0.95,
    stream: RandomStream | int = 0,
    *,
    min_paths: int = MIN_SAMPLES,
    batch_size: int = BATCH_SIZE,
    workers: int = 1,
    max_events: int = DEFAULT_MAX_EVENTS,
    max_total_updates: int | None = None,
) -> EstimateReport:
    """Crude Monte Carlo over tau-leap paths at step ``h``.

    Estimates the tau-leap law's expectation, which carries an O(h) bias
    relative to the exact chain.
    """
    x0, T = _check_estimator_args(network, x0, T, observable, epsilon, confidence)
    h = float(h)
    if not h > 0.0:
        raise ValueError(f"step size must be positive, got {h}")
    level = _tau_level(network, _counts_of(x0), T, h, observable)
    return _single_level_estimate(
        level, seed=_seed_of(stream), epsilon=epsilon, confidence=confidence,
        min_n=min_paths, batch_size=batch_size, workers=workers,
        max_events=max_events, max_total_updates=max_total_updates,
        method="tau-cmc",
        bias_note=f"estimates the tau-leap law at h={h:g}; O(h) bias "
                  "relative to the exact chain",
    )


def _build_levels(network, x0, T, observable, plan: LevelPlan):
    x0c = _counts_of(x0)
    levels = [_tau_level(network, x0c, T, plan.h(plan.ell0, T), observable,
                         level=plan.ell0)]
    for ell in range(plan.ell0 + 1, plan.L + 1):
        h_fine = plan.h(ell, T)
        n_coarse = int(round(plan.M ** (ell - 1)))
        levels.append(
            _coupled_tau_level(
                network, x0c, T, h_fine, plan.M, n_coarse, observable, ell
            )
        )
    if plan.include_exact_level:
        levels.append(
            _exact_coupled_level(
                network, x0c, T, plan.h(plan.L, T), observable, plan.L
            )
        )
    return levels


def pilot(
    network: ReactionNetwork,
    x0: State | None,
    T: float,
    observable: Observable,
    plan: LevelPlan,
    n_pilot: int = PILOT_SAMPLES,
    stream: RandomStream | int = 0,
    *,
    workers: int = 1,
    max_events: int = DEFAULT_MAX_EVENTS,
) -> list[LevelStats]:
    """Preliminary per-level runs fitting K = cost x variance per level.

    Pilot paths are never folded into a final estimate; they only size the
    main sampling stage.
    """
    x0, T = _check_estimator_args(network, x0, T, observable, 1.0, 0.95)
    if int(n_pilot) < 2:
        raise ValueError(f"n_pilot must be >= 2, got {n_pilot}")
    levels = _build_levels(network, x0, T, observable, plan)
    seed = _seed_of(stream)
    out = []
    for slot, lv in enumerate(levels):
        acc, _ = _sample_level(
            lv, seed, slot, _RUN_PILOT, n_fixed=int(n_pilot),
            workers=workers, max_events=max_events,
        )
        K = (acc.updates / acc.n) * acc.variance if acc.n else 0.0
        out.append(_level_stats(lv, acc, K=K))
    return out


def _mlmc(network, x0, T, observable, M, ell0, L, epsilon, confidence,
          stream, unbiased, n_pilot, min_n, batch_size, workers, max_events,
          max_total_updates):
    x0, T = _check_estimator_args(network, x0, T, observable, epsilon, confidence)
    if unbiased and np.any(x0.counts < 0):
        raise ValueError("the exact level requires a nonnegative initial state")
    plan = LevelPlan(M, ell0, L, include_exact_level=unbiased)
    levels = _build_levels(network, x0, T, observable, plan)
    plan_meta = {
        "M": int(M),
        "ell0": int(ell0),
        "L": int(L),
        "unbiased": bool(unbiased),
        "n_pilot": int(n_pilot),
    }
    bias_note = None
    if not unbiased:
        bias_note = (
            f"biased telescoping estimator: targets the tau-leap law at "
            f"h_L={plan.h(L, T):g}; the O(h_L) discretization bias is not "
            "quantified by this run"
        )
    return _estimate_multilevel(
        levels, seed=_seed_of(stream), epsilon=epsilon, confidence=confidence,
        n_pilot=int(n_pilot), min_n=min_n, batch_size=batch_size,
        workers=workers, max_events=max_events,
        max_total_updates=max_total_updates,
        method="unbiased-mlmc" if unbiased else "biased-mlmc",
        plan_meta=plan_meta, bias_note=bias_note, check_fallback=unbiased,
    )


def mlmc_biased(
    network: ReactionNetwork,
    x0: State | None,
    T: float,
    observable: Observable,
    M: int,
    ell0: int,
    L: int,
    epsilon: float,
    confidence: float = 0.95,
    stream: RandomStream | int = 0,
    *,
    n_pilot: int = PILOT_SAMPLES,
    min_samples: int = MIN_SAMPLES,
    batch_size: int = BATCH_SIZE,
    workers: int = 1,
    max_events: int = DEFAULT_MAX_EVENTS,
    max_total_updates: int | None = None,
) -> EstimateReport:
    """Telescoping multilevel estimator over tau-leap levels ell0..L.

    Unbiased for the tau-leap law at the finest step, but carries that law's
    O(h_L) bias against the exact chain; the report says so.
    """
    return _mlmc(
        network, x0, T, observable, M, ell0, L, epsilon, confidence, stream,
        False, n_pilot, min_samples, batch_size, workers, max_events,
        max_total_updates,
    )


def mlmc_unbiased(
    network: ReactionNetwork,
    x0: State | None,
    T: float,
    observable: Observable,
    M: int,
    ell0: int,
    L: int,
    epsilon: float,
    confidence: float = 0.95,
    stream: RandomStream | int = 0,
    *,
    n_pilot: int = PILOT_SAMPLES,
    min_samples: int = MIN_SAMPLES,
    batch_size: int = BATCH_SIZE,
    workers: int = 1,
    max_events: int = DEFAULT_MAX_EVENTS,
    max_total_updates: int | None = None,
) -> EstimateReport:
    """Exactly unbiased multilevel estimator.

    Adds a coupled exact/tau level at the finest step on top of the
    tau-leap telescope, so no discretization bias remains at any (M, L).
    If the pilot predicts no speedup over exact crude Monte Carlo, the
    report recommends falling back but the requested method still runs.
    """
    return _mlmc(
        network, x0, T, observable, M, ell0, L, epsilon, confidence, stream,
        True, n_pilot, min_samples, batch_size, workers, max_events,
        max_total_updates,
    )


def control_variate(
    network: ReactionNetwork,
    reduced: ReactionNetwork,
    x0: State | None,
    x0_reduced: State | None,
    T: float,
    observable: Observable,
    observable_reduced: Observable,
    channel_map: ChannelMap,
    epsilon: float,
    confidence: float = 0.95,
    stream: RandomStream | int = 0,
    *,
    n_pilot: int = PILOT_SAMPLES,
    min_samples: int = MIN_SAMPLES,
    batch_size: int = BATCH_SIZE,
    workers: int = 1,
    max_events: int = DEFAULT_MAX_EVENTS,
    max_total_updates: int | None = None,
    exact_method: str = "next-reaction",
) -> EstimateReport:
    """Control-variate estimate of E f(X(T)) via a cheap companion chain.

    Splits E f(X) = E g(Z) + E[f(X) - g(Z)]: the first term is estimated
    with plain exact paths of the reduced network, the second with coupled
    exact/exact pairs over the channel map.  Both marginals are exact, so
    the estimator is unbiased.
    """
    if x0 is None:
        x0 = network.initial_state()
    if x0_reduced is None:
        x0_reduced = reduced.initial_state()
    x0, T = _check_estimator_args(network, x0, T, observable, epsilon, confidence)
    reduced.check_state(x0_reduced)
    observable_reduced.validate_for(reduced)
    channel_map.validate(network, reduced)
    if np.any(x0.counts < 0) or np.any(x0_reduced.counts < 0):
        raise ValueError("exact paths require nonnegative initial states")
    x0c = _counts_of(x0)
    x0r = _counts_of(x0_reduced)
    levels = [
        _cv_base_level(reduced, x0r, T, observable_reduced,
                       use_direct=(exact_method == "direct")),
        _cv_diff_level(
            network, reduced, x0c, x0r, T, observable, observable_reduced,
            channel_map,
        ),
    ]
    return _estimate_multilevel(
        levels, seed=_seed_of(stream), epsilon=epsilon, confidence=confidence,
        n_pilot=int(n_pilot), min_n=min_samples, batch_size=batch_size,
        workers=workers, max_events=max_events,
        max_total_updates=max_total_updates, method="control-variate",
        plan_meta={"coupled_channels": list(map(list, channel_map.pairs))},
    )
