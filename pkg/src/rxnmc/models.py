"""Bundled example models.

Builders return :class:`~rxnmc.modelfile.ModelFile` objects; the CLI resolves
``--model`` strings against :func:`bundled_models` (optionally with
``name:key=value,...`` parameters) before trying the filesystem.
"""

from __future__ import annotations

import math

from .coupling import ChannelMap
from .model import Reaction, ReactionNetwork
from .modelfile import ModelFile

__all__ = [
    "bundled_models",
    "dimer",
    "dimer_with_gene",
    "get_model",
    "isomerization",
    "mm_infinity",
    "mmk_queue",
    "pure_decay",
    "viral",
]


def dimer() -> ModelFile:
    """Transcription/translation/dimerization cascade, gene folded in.

    The gene count never changes, so transcription is expressed as a
    zero-order channel; see :func:`dimer_with_gene` for the 4-species
    variant with the same dynamics.
    """
    net = ReactionNetwork(
        [("M", 0), ("P", 0), ("D", 0)],
        [
            Reaction({}, {0: 1}, 25.0),          # 0 -> M
            Reaction({0: 1}, {0: 1, 1: 1}, 1000.0),  # M -> M + P
            Reaction({1: 2}, {2: 1}, 0.001),     # P + P -> D
            Reaction({0: 1}, {}, 0.1),           # M -> 0
            Reaction({1: 1}, {}, 1.0),           # P -> 0
        ],
        name="dimer",
    )
    return ModelFile(net)


def dimer_with_gene() -> ModelFile:
    """Same cascade with the constant gene declared as an explicit species."""
    net = ReactionNetwork(
        [("G", 1), ("M", 0), ("P", 0), ("D", 0)],
        [
            Reaction({0: 1}, {0: 1, 1: 1}, 25.0),    # G -> G + M
            Reaction({1: 1}, {1: 1, 2: 1}, 1000.0),  # M -> M + P
            Reaction({2: 2}, {3: 1}, 0.001),         # P + P -> D
            Reaction({1: 1}, {}, 0.1),               # M -> 0
            Reaction({2: 1}, {}, 1.0),               # P -> 0
        ],
        name="dimer-gene",
    )
    return ModelFile(net)


def pure_decay(kappa: float = 1.0, x0: int = 1000) -> ModelFile:
    """Single-species decay S -> 0; E X(t) = x0 * exp(-kappa t) exactly."""
    net = ReactionNetwork(
        [("S", int(x0))],
        [Reaction({0: 1}, {}, float(kappa))],
        name="decay",
    )
    return ModelFile(net)


def mm_infinity(arrival: float = 10.0, service: float = 1.0, x0: int = 0) -> ModelFile:
    """M/M/infinity queue: constant arrivals, per-customer service."""
    net = ReactionNetwork(
        [("S", int(x0))],
        [
            Reaction({}, {0: 1}, float(arrival)),
            Reaction({0: 1}, {}, float(service)),
        ],
        name="mm-infinity",
    )
    return ModelFile(net)


def mmk_queue(
    arrival: float = 10.0, service: float = 1.0, servers: int = 3, x0: int = 0
) -> ModelFile:
    """M/M/k queue; service propensity is service * min(X, servers)."""
    if int(servers) < 1:
        raise ValueError(f"servers must be >= 1, got {servers}")
    net = ReactionNetwork(
        [("S", int(x0))],
        [
            Reaction({}, {0: 1}, float(arrival)),
            Reaction({0: 1}, {}, float(service), min_cap=float(servers)),
        ],
        name="mmk",
    )
    return ModelFile(net)


def isomerization(theta: float = 1.0) -> ModelFile:
    """Reversible isomerization A <-> B at symmetric rate theta.

    Both species start at floor(1000 / theta), so faster switching comes
    with smaller copy numbers; the symmetric start pins E X_A(t) at its
    initial value for every t.
    """
    theta = float(theta)
    if not theta > 0:
        raise ValueError(f"theta must be positive, got {theta}")
    x0 = int(math.floor(1000.0 / theta))
    net = ReactionNetwork(
        [("A", x0), ("B", x0)],
        [
            Reaction({0: 1}, {1: 1}, theta),
            Reaction({1: 1}, {0: 1}, theta),
        ],
        name="isomerization",
    )
    return ModelFile(net)


def viral() -> ModelFile:
    """Intracellular viral kinetics with a mean-field reduced companion.

    Species (G, S, T, V) = genome, structural protein, template, virus,
    starting from ten templates.  Protein production and decay (channels 3
    and 5) run orders of magnitude faster than the rest; the reduced model
    drops S entirely and substitutes its conditional-equilibrium mean
    (500 per template) into the packaging rate, turning channel 6 into
    G + T -> V + T at rate 7.5e-6 * 500.  The channel map couples the four
    shared channels (1, 2, 4, 6) for control-variate runs.
    """
    full = ReactionNetwork(
        [("G", 0), ("S", 0), ("T", 10), ("V", 0)],
        [
            Reaction({2: 1}, {2: 1, 0: 1}, 1.0),      # T -> T + G
            Reaction({0: 1}, {2: 1}, 0.025),          # G -> T
            Reaction({2: 1}, {2: 1, 1: 1}, 1000.0),   # T -> T + S
            Reaction({2: 1}, {}, 0.25),               # T -> 0
            Reaction({1: 1}, {}, 2.0),                # S -> 0
            Reaction({0: 1, 1: 1}, {3: 1}, 7.5e-6),   # G + S -> V
        ],
        name="viral",
    )
    reduced = ReactionNetwork(
        [("G", 0), ("T", 10), ("V", 0)],
        [
            Reaction({1: 1}, {1: 1, 0: 1}, 1.0),      # T -> T + G
            Reaction({0: 1}, {1: 1}, 0.025),          # G -> T
            Reaction({1: 1}, {}, 0.25),               # T -> 0
            Reaction({0: 1, 1: 1}, {1: 1, 2: 1}, 3.75e-3),  # G + T -> V + T
        ],
        name="viral-reduced",
    )
    return ModelFile(full, reduced, ChannelMap([(0, 0), (1, 1), (3, 2), (5, 3)]))


_BUILDERS = {
    "dimer": dimer,
    "dimer-gene": dimer_with_gene,
    "decay": pure_decay,
    "mm-infinity": mm_infinity,
    "mmk": mmk_queue,
    "isomerization": isomerization,
    "viral": viral,
}


def bundled_models() -> dict[str, ModelFile]:
    """All bundled models at their default parameters."""
    return {name: build() for name, build in _BUILDERS.items()}


def get_model(spec: str) -> ModelFile:
    """Resolve a bundled model spec like ``dimer`` or ``isomerization:theta=10``.

    Raises KeyError for unknown names and TypeError/ValueError for bad
    parameters.
    """
    name, _, params_text = spec.partition(":")
    name = name.strip()
    if name not in _BUILDERS:
        raise KeyError(f"no bundled model named {name!r}")
    kwargs = {}
    if params_text.strip():
        for item in params_text.split(","):
            key, eq, value = item.partition("=")
            if not eq:
                raise ValueError(
                    f"model parameter {item.strip()!r} must look like key=value"
                )
            key = key.strip()
            value = value.strip()
            try:
                parsed = int(value)
            except ValueError:
                parsed = float(value)
            kwargs[key] = parsed
    return _BUILDERS[name](**kwargs)
