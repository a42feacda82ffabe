"""Reaction networks, mass-action propensities, and scaling diagnostics.

A network is a fixed set of species and reaction channels.  Each channel k
carries a source (reactant) stoichiometry vector, a product vector, and a
rate constant; its propensity at integer state x is the mass-action falling
product gated by an indicator that zeroes the rate whenever any reactant
count is below its stoichiometric requirement.  Networks are immutable after
construction and safe to share across workers.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np
from numba import njit

__all__ = [
    "ModelError",
    "Observable",
    "Reaction",
    "ReactionNetwork",
    "ScalingProfile",
    "State",
    "all_propensities",
    "compute_scaling",
    "evaluate",
    "propensity",
]


class ModelError(ValueError):
    """Structural problem with a network, state, or observable."""


@njit(cache=True)
def _propensity_one(nu, kappa, cap, x, k):
    """Mass-action propensity of channel k at integer state x.

    Returns 0 whenever any reactant count is below its requirement, which
    also zeroes channels that would consume a species with negative count.
    """
    rate = kappa[k]
    if rate == 0.0:
        return 0.0
    prod = 1.0
    for i in range(nu.shape[1]):
        v = nu[k, i]
        if v > 0:
            xi = x[i]
            if xi < v:
                return 0.0
            for m in range(v):
                prod *= xi - m
    if prod > cap[k]:
        prod = cap[k]
    return rate * prod


@njit(cache=True)
def _all_propensities(nu, kappa, cap, x, out):
    for k in range(nu.shape[0]):
        out[k] = _propensity_one(nu, kappa, cap, x, k)


@njit(cache=True)
def _all_propensities_csr(r_ptr, r_idx, r_nu, kappa, cap, x, out):
    """Same as _all_propensities over a sparse reactant layout."""
    for k in range(kappa.size):
        rate = kappa[k]
        if rate == 0.0:
            out[k] = 0.0
            continue
        prod = 1.0
        ok = True
        for j in range(r_ptr[k], r_ptr[k + 1]):
            xi = x[r_idx[j]]
            v = r_nu[j]
            if xi < v:
                ok = False
                break
            for m in range(v):
                prod *= xi - m
        if not ok:
            out[k] = 0.0
            continue
        if prod > cap[k]:
            prod = cap[k]
        out[k] = rate * prod


def _as_count_map(mapping: Mapping[int, int], what: str) -> dict[int, int]:
    out: dict[int, int] = {}
    for idx, count in dict(mapping).items():
        idx = int(idx)
        count = int(count)
        if idx < 0:
            raise ModelError(f"{what} species index {idx} is negative")
        if count <= 0:
            raise ModelError(
                f"{what} count for species {idx} must be a positive integer"
            )
        out[idx] = count
    return out


@dataclass(frozen=True)
class Reaction:
    """One reaction channel: reactant/product stoichiometry and a rate.

    ``min_cap`` optionally caps the mass-action product at a constant, which
    expresses capacity-limited service rates such as mu * min(X, k); it is
    the only supported deviation from pure mass action.
    """

    reactants: Mapping[int, int]
    products: Mapping[int, int]
    rate_constant: float
    min_cap: float = math.inf

    def __post_init__(self):
        object.__setattr__(
            self, "reactants", _as_count_map(self.reactants, "reactant")
        )
        object.__setattr__(
            self, "products", _as_count_map(self.products, "product")
        )
        rate = float(self.rate_constant)
        if not math.isfinite(rate) or rate < 0.0:
            raise ModelError(
                f"rate constant must be finite and >= 0, got {self.rate_constant}"
            )
        object.__setattr__(self, "rate_constant", rate)
        cap = float(self.min_cap)
        if math.isnan(cap) or cap <= 0.0:
            raise ModelError(f"min_cap must be positive, got {self.min_cap}")
        object.__setattr__(self, "min_cap", cap)

    def net_change(self, num_species: int) -> np.ndarray:
        """Net state change zeta = products - reactants as a length-d vector."""
        zeta = np.zeros(num_species, dtype=np.int64)
        for i, c in self.reactants.items():
            zeta[i] -= c
        for i, c in self.products.items():
            zeta[i] += c
        return zeta

    def max_species_index(self) -> int:
        indices = list(self.reactants) + list(self.products)
        return max(indices) if indices else -1


@dataclass(frozen=True)
class State:
    """Integer copy numbers at a point in time.

    Counts may go negative only along tau-leap paths; exact simulators never
    produce negative counts.
    """

    counts: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64).copy()
        if counts.ndim != 1 or counts.size == 0:
            raise ModelError("state counts must be a nonempty 1-d vector")
        object.__setattr__(self, "counts", counts)
        t = float(self.time)
        if not math.isfinite(t) or t < 0.0:
            raise ModelError(f"state time must be finite and >= 0, got {self.time}")
        object.__setattr__(self, "time", t)

    @property
    def dimension(self) -> int:
        return self.counts.size


class ReactionNetwork:
    """Immutable reaction network: species with initial counts, plus channels.

    Species and reactions are addressed by stable integer index (declaration
    order); names matter only at the I/O boundary.
    """

    def __init__(
        self,
        species: Sequence[tuple[str, int]],
        reactions: Iterable[Reaction] = (),
        name: str = "",
    ):
        species = tuple((str(n), int(c)) for n, c in species)
        if not species:
            raise ModelError("a network needs at least one species")
        names = [n for n, _ in species]
        if len(set(names)) != len(names):
            raise ModelError("duplicate species names")
        for n, c in species:
            if c < 0:
                raise ModelError(f"initial count of {n!r} is negative")
        reactions = tuple(reactions)
        d = len(species)
        for k, r in enumerate(reactions):
            if not isinstance(r, Reaction):
                raise ModelError(f"reaction {k} is not a Reaction")
            if r.max_species_index() >= d:
                raise ModelError(
                    f"reaction {k} references species index "
                    f"{r.max_species_index()} but the network has {d} species"
                )
            if not np.any(r.net_change(d)):
                warnings.warn(
                    f"reaction {k} has zero net state change", stacklevel=2
                )
        self.name = str(name)
        self.species = species
        self.reactions = reactions
        self._index = {n: i for i, (n, _) in enumerate(species)}

    @property
    def num_species(self) -> int:
        return len(self.species)

    @property
    def num_reactions(self) -> int:
        return len(self.reactions)

    @property
    def species_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.species)

    def species_index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise ModelError(f"unknown species {name!r}") from None

    @cached_property
    def initial_counts(self) -> np.ndarray:
        return np.array([c for _, c in self.species], dtype=np.int64)

    def initial_state(self) -> State:
        return State(self.initial_counts, 0.0)

    @cached_property
    def nu_matrix(self) -> np.ndarray:
        """Reactant stoichiometry, shape (R, d)."""
        nu = np.zeros((self.num_reactions, self.num_species), dtype=np.int64)
        for k, r in enumerate(self.reactions):
            for i, c in r.reactants.items():
                nu[k, i] = c
        nu.setflags(write=False)
        return nu

    @cached_property
    def zeta_matrix(self) -> np.ndarray:
        """Net change vectors, shape (R, d)."""
        zeta = np.zeros((self.num_reactions, self.num_species), dtype=np.int64)
        for k, r in enumerate(self.reactions):
            zeta[k] = r.net_change(self.num_species)
        zeta.setflags(write=False)
        return zeta

    @cached_property
    def rate_constants(self) -> np.ndarray:
        kappa = np.array(
            [r.rate_constant for r in self.reactions], dtype=np.float64
        )
        kappa.setflags(write=False)
        return kappa

    @cached_property
    def caps(self) -> np.ndarray:
        cap = np.array([r.min_cap for r in self.reactions], dtype=np.float64)
        cap.setflags(write=False)
        return cap

    def kernel_arrays(self):
        """(nu, zeta, kappa, cap) arrays consumed by the compiled kernels."""
        return self.nu_matrix, self.zeta_matrix, self.rate_constants, self.caps

    @cached_property
    def reactant_csr(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Sparse reactant layout (ptr, species index, count) for hot loops."""
        ptr = np.zeros(self.num_reactions + 1, dtype=np.int64)
        idx: list[int] = []
        counts: list[int] = []
        for k, r in enumerate(self.reactions):
            for i in sorted(r.reactants):
                idx.append(i)
                counts.append(r.reactants[i])
            ptr[k + 1] = len(idx)
        out = (
            ptr,
            np.array(idx, dtype=np.int64),
            np.array(counts, dtype=np.int64),
        )
        for a in out:
            a.setflags(write=False)
        return out

    def check_state(self, state: State) -> None:
        if state.dimension != self.num_species:
            raise ModelError(
                f"state has {state.dimension} components, network has "
                f"{self.num_species} species"
            )

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return (
            f"<ReactionNetwork{label}: {self.num_species} species, "
            f"{self.num_reactions} reactions>"
        )


@dataclass(frozen=True)
class Observable:
    """Scalar test function of the state: a component, a product of two
    components, or an interval indicator."""

    kind: str
    i: int
    j: int = -1
    lower: float = 0.0
    upper: float = 0.0

    @staticmethod
    def component(i: int) -> "Observable":
        return Observable("component", int(i))

    @staticmethod
    def product(i: int, j: int) -> "Observable":
        return Observable("product", int(i), int(j))

    @staticmethod
    def indicator(i: int, lower: float, upper: float) -> "Observable":
        lower, upper = float(lower), float(upper)
        if not lower <= upper:
            raise ModelError(
                f"indicator interval is empty: [{lower}, {upper}]"
            )
        return Observable("indicator", int(i), -1, lower, upper)

    def __post_init__(self):
        if self.kind not in ("component", "product", "indicator"):
            raise ModelError(f"unknown observable kind {self.kind!r}")
        if self.i < 0 or (self.kind == "product" and self.j < 0):
            raise ModelError("observable species index is negative")

    def validate_for(self, network: ReactionNetwork) -> None:
        d = network.num_species
        if self.i >= d or (self.kind == "product" and self.j >= d):
            raise ModelError(
                f"observable references species index outside 0..{d - 1}"
            )

    def __call__(self, counts: np.ndarray) -> np.ndarray:
        """Evaluate on counts of shape (d,) or a batch of shape (n, d)."""
        counts = np.asarray(counts)
        x = counts[..., self.i].astype(np.float64)
        if self.kind == "component":
            return x
        if self.kind == "product":
            return x * counts[..., self.j].astype(np.float64)
        return ((x >= self.lower) & (x <= self.upper)).astype(np.float64)

    def describe(self, names: Sequence[str]) -> str:
        if self.kind == "component":
            return names[self.i]
        if self.kind == "product":
            return f"{names[self.i]}*{names[self.j]}"
        return f"indicator({names[self.i]}, {self.lower:g}, {self.upper:g})"


@dataclass(frozen=True)
class ScalingProfile:
    """Order-of-magnitude diagnostics for a network at an initial state.

    Heuristic and diagnostic only: exponents are log-extracted from the
    initial counts and rate constants, and nothing here feeds back into the
    simulators.
    """

    N: float
    alpha: np.ndarray
    beta: np.ndarray
    gamma: float
    c: np.ndarray
    rho_k: np.ndarray
    rho: float
    nbar: float


def propensity(network: ReactionNetwork, state: State, k: int) -> float:
    """Mass-action propensity of channel ``k`` at ``state``."""
    network.check_state(state)
    if not 0 <= int(k) < network.num_reactions:
        raise ModelError(
            f"reaction index {k} outside 0..{network.num_reactions - 1}"
        )
    nu, _, kappa, cap = network.kernel_arrays()
    return float(_propensity_one(nu, kappa, cap, state.counts, int(k)))


def all_propensities(network: ReactionNetwork, state: State) -> np.ndarray:
    """Vector of all channel propensities at ``state``."""
    network.check_state(state)
    out = np.empty(network.num_reactions, dtype=np.float64)
    nu, _, kappa, cap = network.kernel_arrays()
    _all_propensities(nu, kappa, cap, state.counts, out)
    return out


def evaluate(observable: Observable, state: State) -> float:
    """Evaluate the observable at a single state."""
    if observable.i >= state.dimension or (
        observable.kind == "product" and observable.j >= state.dimension
    ):
        raise ModelError("observable index outside the state dimension")
    return float(observable(state.counts))


def compute_scaling(
    network: ReactionNetwork, state0: State | None = None
) -> ScalingProfile:
    """Extract abundance/rate exponents and timescale diagnostics.

    The reference size N is the largest initial count (at least 2); species
    exponents alpha and rate exponents beta are logs base N; gamma is the
    largest propensity-vs-abundance exponent over channels that actually
    move a species, so that max_k (c_k - rho_k) = 0.  Used for reporting
    only, never inside a simulation.
    """
    if network.num_reactions == 0:
        raise ModelError("scaling undefined for a network with no reactions")
    if state0 is None:
        state0 = network.initial_state()
    network.check_state(state0)
    x0 = state0.counts
    kappa = network.rate_constants
    if not (np.any(x0 > 0) or np.any(kappa > 0)):
        raise ModelError(
            "scaling undefined: no positive initial count or rate constant"
        )
    N = float(max(2, int(x0.max())))
    logN = math.log(N)
    alpha = np.log(np.maximum(x0, 1).astype(np.float64)) / logN
    beta = np.log(np.maximum(kappa, N ** -12.0)) / logN
    zeta = network.zeta_matrix
    nu = network.nu_matrix
    drive = beta + nu.astype(np.float64) @ alpha  # beta_k + nu_k . alpha
    gamma = -math.inf
    for k in range(network.num_reactions):
        moved = np.nonzero(zeta[k])[0]
        for i in moved:
            gamma = max(gamma, drive[k] - alpha[i])
    if not math.isfinite(gamma):
        # every channel is a null reaction; no species scale to compare against
        gamma = 0.0
    c = drive - gamma
    rho_k = np.empty(network.num_reactions, dtype=np.float64)
    for k in range(network.num_reactions):
        moved = np.nonzero(zeta[k])[0]
        rho_k[k] = alpha[moved].min() if moved.size else 0.0
    rho = float(rho_k.min()) if network.num_reactions else 0.0
    nbar = float(N ** gamma * np.sum(N ** c))
    return ScalingProfile(
        N=N,
        alpha=alpha,
        beta=beta,
        gamma=float(gamma),
        c=c,
        rho_k=rho_k,
        rho=rho,
        nbar=nbar,
    )
