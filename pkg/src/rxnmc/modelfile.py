"""Model file parsing and serialization.

A model file is a line-oriented text document.  ``#`` starts a comment,
``key: value`` lines set scalars (``format_version``, ``name``), and section
headers (``species:``, ``reactions:``, and the optional ``reduced_species:``,
``reduced_reactions:``, ``channel_map:`` for control-variate pairs) collect
the indented entries that follow.  Example::

    format_version: 1
    name: dimer

    species:
      M = 0
      P = 0
      D = 0

    reactions:
      0 -> M       @ 25
      M -> M + P   @ 1000
      P + P -> D   @ 0.001
      M -> 0       @ 0.1
      P -> 0       @ 1

Reaction sides are ``0`` (nothing) or ``+``-separated terms with an optional
integer coefficient (``2 P``); ``@`` introduces the rate constant, and an
optional trailing ``[min_cap: k]`` caps the mass-action product at ``k``
(capacity-limited service).  ``channel_map`` lines pair reactions of the two
models by their 1-based declaration ordinals, ``full -> reduced``.

Parsing is strict: unknown keys, unknown species, duplicate names, and
negative counts or rates are errors that carry the offending line number.
Serialization emits a canonical form, so serialize(parse(text)) is
idempotent.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass

from .coupling import ChannelMap
from .model import ModelError, Reaction, ReactionNetwork

__all__ = ["ModelFile", "ParseError", "parse_model", "serialize_model"]

FORMAT_VERSION = 1

_HEADER_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*:\s*(.*)$")
_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_CAP_RE = re.compile(r"^\[\s*min_cap\s*:\s*([^\]\s]+)\s*\]$")

_SCALAR_KEYS = ("format_version", "name")
_SECTION_KEYS = (
    "species",
    "reactions",
    "reduced_species",
    "reduced_reactions",
    "channel_map",
)


class ParseError(ValueError):
    """Model file rejected; carries the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


@dataclass(frozen=True)
class ModelFile:
    """A parsed model: the main network plus an optional reduced companion
    network and the channel map coupling the two."""

    network: ReactionNetwork
    reduced: ReactionNetwork | None = None
    channel_map: ChannelMap | None = None

    @property
    def name(self) -> str:
        return self.network.name

    def __post_init__(self):
        if (self.reduced is None) != (self.channel_map is None):
            raise ModelError(
                "a reduced network and a channel map must come together"
            )
        if self.channel_map is not None:
            self.channel_map.validate(self.network, self.reduced)


def _parse_species_entry(line: str, lineno: int) -> tuple[str, int]:
    if "=" not in line:
        raise ParseError(
            f"species entry must look like 'NAME = COUNT', got {line!r}", lineno
        )
    name, _, value = line.partition("=")
    name = name.strip()
    value = value.strip()
    if not _NAME_RE.match(name):
        raise ParseError(f"invalid species name {name!r}", lineno)
    try:
        count = int(value)
    except ValueError:
        raise ParseError(
            f"initial count for {name!r} must be an integer, got {value!r}",
            lineno,
        ) from None
    if count < 0:
        raise ParseError(f"initial count for {name!r} is negative", lineno)
    return name, count


def _parse_side(text: str, index: dict[str, int], lineno: int) -> dict[int, int]:
    text = text.strip()
    if text in ("", "0"):
        return {}
    counts: dict[int, int] = {}
    for term in text.split("+"):
        tokens = term.replace("*", " ").split()
        if len(tokens) == 1:
            coeff, name = 1, tokens[0]
        elif len(tokens) == 2:
            try:
                coeff = int(tokens[0])
            except ValueError:
                raise ParseError(
                    f"bad stoichiometric coefficient {tokens[0]!r}", lineno
                ) from None
            name = tokens[1]
        else:
            raise ParseError(f"cannot parse reaction term {term.strip()!r}", lineno)
        if coeff <= 0:
            raise ParseError(
                f"stoichiometric coefficient must be positive in {term.strip()!r}",
                lineno,
            )
        if not _NAME_RE.match(name):
            raise ParseError(f"invalid species name {name!r}", lineno)
        if name not in index:
            raise ParseError(f"unknown species {name!r}", lineno)
        counts[index[name]] = counts.get(index[name], 0) + coeff
    return counts


def _parse_reaction_entry(line: str, index: dict[str, int], lineno: int) -> Reaction:
    cap = math.inf
    body = line
    if body.endswith("]"):
        lb = body.rfind("[")
        if lb < 0:
            raise ParseError("unmatched ']' in reaction", lineno)
        m = _CAP_RE.match(body[lb:])
        if not m:
            raise ParseError(
                f"unknown reaction attribute {body[lb:]!r}", lineno
            )
        try:
            cap = float(m.group(1))
        except ValueError:
            raise ParseError(f"bad min_cap value {m.group(1)!r}", lineno) from None
        if not cap > 0:
            raise ParseError("min_cap must be positive", lineno)
        body = body[:lb].strip()
    if "@" not in body:
        raise ParseError(
            "reaction entry must look like 'LHS -> RHS @ RATE'", lineno
        )
    sides, _, rate_text = body.rpartition("@")
    if "->" not in sides:
        raise ParseError("reaction is missing '->'", lineno)
    lhs, arrow, rhs = sides.partition("->")
    if "->" in rhs:
        raise ParseError("reaction has more than one '->'", lineno)
    try:
        rate = float(rate_text.strip())
    except ValueError:
        raise ParseError(
            f"bad rate constant {rate_text.strip()!r}", lineno
        ) from None
    if not math.isfinite(rate) or rate < 0:
        raise ParseError("rate constant must be finite and >= 0", lineno)
    reactants = _parse_side(lhs, index, lineno)
    products = _parse_side(rhs, index, lineno)
    return Reaction(reactants, products, rate, min_cap=cap)


def _parse_channel_entry(line: str, lineno: int) -> tuple[int, int]:
    if "->" not in line:
        raise ParseError(
            "channel map entry must look like 'FULL -> REDUCED' "
            "(1-based reaction ordinals)",
            lineno,
        )
    a_text, _, b_text = line.partition("->")
    try:
        a = int(a_text.strip())
        b = int(b_text.strip())
    except ValueError:
        raise ParseError("channel map entries must be integers", lineno) from None
    if a < 1 or b < 1:
        raise ParseError("channel map ordinals are 1-based", lineno)
    return a - 1, b - 1


def _build_network(species, reactions, name, lineno_of_section) -> ReactionNetwork:
    if not species:
        raise ParseError("model declares no species", lineno_of_section)
    names = [n for n, _ in species]
    dupes = {n for n in names if names.count(n) > 1}
    if dupes:
        raise ParseError(f"duplicate species names: {sorted(dupes)}", lineno_of_section)
    return ReactionNetwork(species, reactions, name=name)


def parse_model(text: str) -> ModelFile:
    """Parse a model document into networks and an optional channel map."""
    scalars: dict[str, str] = {}
    entries: dict[str, list[tuple[int, str]]] = {k: [] for k in _SECTION_KEYS}
    section_line: dict[str, int] = {}
    current: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _HEADER_RE.match(line)
        if m:
            key, value = m.group(1), m.group(2).strip()
            if key in _SCALAR_KEYS:
                if key in scalars:
                    raise ParseError(f"duplicate field {key!r}", lineno)
                if not value:
                    raise ParseError(f"field {key!r} needs a value", lineno)
                scalars[key] = value
                current = None
                continue
            if key in _SECTION_KEYS:
                if key in section_line:
                    raise ParseError(f"duplicate section {key!r}", lineno)
                if value:
                    raise ParseError(
                        f"section header {key!r} takes no inline value", lineno
                    )
                section_line[key] = lineno
                current = key
                continue
            raise ParseError(f"unknown field {key!r}", lineno)
        if current is None:
            raise ParseError(f"entry outside any section: {line!r}", lineno)
        entries[current].append((lineno, line))

    if "format_version" not in scalars:
        raise ParseError("missing required field 'format_version'")
    if scalars["format_version"].strip() != str(FORMAT_VERSION):
        raise ParseError(
            f"unsupported format_version {scalars['format_version']!r} "
            f"(this tool reads version {FORMAT_VERSION})"
        )
    name = scalars.get("name", "")

    if "species" not in section_line:
        raise ParseError("missing required section 'species'")
    species = [
        _parse_species_entry(line, ln) for ln, line in entries["species"]
    ]
    index = {n: i for i, (n, _) in enumerate(species)}
    if len(index) != len(species):
        dupes = sorted(
            {n for n, _ in species if [m for m, _ in species].count(n) > 1}
        )
        first = next(
            ln for ln, line in entries["species"]
            if _parse_species_entry(line, ln)[0] in dupes
        )
        raise ParseError(f"duplicate species names: {dupes}", first)
    reactions = [
        _parse_reaction_entry(line, index, ln) for ln, line in entries["reactions"]
    ]
    if "reactions" in section_line and not reactions:
        warnings.warn("model declares no reactions", stacklevel=2)
    network = _build_network(
        species, reactions, name, section_line.get("species")
    )

    has_reduced = "reduced_species" in section_line
    if "reduced_reactions" in section_line and not has_reduced:
        raise ParseError(
            "reduced_reactions requires a reduced_species section",
            section_line["reduced_reactions"],
        )
    if "channel_map" in section_line and not has_reduced:
        raise ParseError(
            "channel_map requires a reduced model", section_line["channel_map"]
        )
    if not has_reduced:
        return ModelFile(network)

    r_species = [
        _parse_species_entry(line, ln) for ln, line in entries["reduced_species"]
    ]
    r_index = {n: i for i, (n, _) in enumerate(r_species)}
    r_reactions = [
        _parse_reaction_entry(line, r_index, ln)
        for ln, line in entries["reduced_reactions"]
    ]
    reduced = _build_network(
        r_species, r_reactions, name + "-reduced" if name else "reduced",
        section_line["reduced_species"],
    )
    pairs = []
    for ln, line in entries["channel_map"]:
        a, b = _parse_channel_entry(line, ln)
        if a >= network.num_reactions:
            raise ParseError(
                f"channel map ordinal {a + 1} exceeds the model's "
                f"{network.num_reactions} reactions", ln
            )
        if b >= reduced.num_reactions:
            raise ParseError(
                f"channel map ordinal {b + 1} exceeds the reduced model's "
                f"{reduced.num_reactions} reactions", ln
            )
        pairs.append((a, b))
    channel_map = ChannelMap(pairs)
    try:
        channel_map.validate(network, reduced)
    except ModelError as exc:
        raise ParseError(str(exc), section_line["channel_map"]) from None
    return ModelFile(network, reduced, channel_map)


def _format_side(counts: dict[int, int], names) -> str:
    if not counts:
        return "0"
    terms = []
    for idx in sorted(counts):
        c = counts[idx]
        terms.append(names[idx] if c == 1 else f"{c} {names[idx]}")
    return " + ".join(terms)


def _format_rate(rate: float) -> str:
    if rate == int(rate) and abs(rate) < 1e15:
        return repr(int(rate))
    return repr(rate)


def _serialize_network(net: ReactionNetwork, species_key: str, reactions_key: str) -> list[str]:
    lines = [f"{species_key}:"]
    for name, count in net.species:
        lines.append(f"  {name} = {count}")
    lines.append("")
    lines.append(f"{reactions_key}:")
    names = net.species_names
    for r in net.reactions:
        entry = (
            f"  {_format_side(r.reactants, names)} -> "
            f"{_format_side(r.products, names)} @ {_format_rate(r.rate_constant)}"
        )
        if math.isfinite(r.min_cap):
            entry += f" [min_cap: {_format_rate(r.min_cap)}]"
        lines.append(entry)
    return lines


def serialize_model(model: ModelFile) -> str:
    """Render a model in the canonical text form read by :func:`parse_model`."""
    lines = [f"format_version: {FORMAT_VERSION}"]
    if model.name:
        lines.append(f"name: {model.name}")
    lines.append("")
    lines.extend(_serialize_network(model.network, "species", "reactions"))
    if model.reduced is not None:
        lines.append("")
        lines.extend(
            _serialize_network(model.reduced, "reduced_species", "reduced_reactions")
        )
        lines.append("")
        lines.append("channel_map:")
        for a, b in model.channel_map.pairs:
            lines.append(f"  {a + 1} -> {b + 1}")
    lines.append("")
    return "\n".join(lines)
