"""Model file parsing, validation errors, round-trip serialization."""

import numpy as np
import pytest

from rxnmc import (
    ParseError,
    State,
    all_propensities,
    parse_model,
    serialize_model,
)
from rxnmc.models import bundled_models, get_model

DIMER_TEXT = """\
# transcription / translation / dimerization
format_version: 1
name: dimer

species:
  M = 0
  P = 0
  D = 0

reactions:
  0 -> M       @ 25       # transcription (constant gene folded in)
  M -> M + P   @ 1000
  P + P -> D   @ 0.001
  M -> 0       @ 0.1
  P -> 0       @ 1
"""


def test_parse_dimer():
    model = parse_model(DIMER_TEXT)
    net = model.network
    assert net.name == "dimer"
    assert net.species_names == ("M", "P", "D")
    assert net.num_reactions == 5
    assert np.allclose(net.rate_constants, [25, 1000, 0.001, 0.1, 1])
    assert np.array_equal(net.zeta_matrix[2], [0, -2, 1])
    assert model.reduced is None


def test_folded_and_explicit_gene_models_are_equivalent():
    folded = get_model("dimer").network
    explicit = get_model("dimer-gene").network
    rng = np.random.default_rng(0)
    for _ in range(50):
        counts = rng.integers(0, 50, size=3)
        lam_folded = all_propensities(folded, State(counts))
        lam_explicit = all_propensities(
            explicit, State(np.concatenate([[1], counts]))
        )
        assert np.allclose(lam_folded, lam_explicit)


def test_unknown_species_error_has_line():
    text = DIMER_TEXT.replace("P -> 0       @ 1", "Q -> 0 @ 1")
    with pytest.raises(ParseError, match=r"line 15.*unknown species 'Q'"):
        parse_model(text)


def test_negative_count_and_rate_errors():
    with pytest.raises(ParseError, match="negative"):
        parse_model("format_version: 1\nspecies:\n  A = -3\n")
    with pytest.raises(ParseError, match="rate constant"):
        parse_model(
            "format_version: 1\nspecies:\n  A = 1\nreactions:\n  A -> 0 @ -2\n"
        )


def test_duplicate_species_error():
    with pytest.raises(ParseError, match="duplicate species"):
        parse_model("format_version: 1\nspecies:\n  A = 1\n  A = 2\n")


def test_unknown_field_rejected():
    with pytest.raises(ParseError, match="unknown field 'flavor'"):
        parse_model("format_version: 1\nflavor: salty\nspecies:\n  A = 1\n")


def test_missing_or_bad_format_version():
    with pytest.raises(ParseError, match="format_version"):
        parse_model("species:\n  A = 1\n")
    with pytest.raises(ParseError, match="unsupported format_version"):
        parse_model("format_version: 99\nspecies:\n  A = 1\n")


def test_empty_reactions_is_valid_with_warning():
    with pytest.warns(UserWarning, match="no reactions"):
        model = parse_model("format_version: 1\nspecies:\n  A = 4\nreactions:\n")
    assert model.network.num_reactions == 0


def test_min_cap_parses():
    model = parse_model(
        "format_version: 1\nspecies:\n  S = 0\nreactions:\n"
        "  0 -> S @ 10\n  S -> 0 @ 1 [min_cap: 3]\n"
    )
    assert model.network.reactions[1].min_cap == 3.0


def test_entry_outside_section_rejected():
    with pytest.raises(ParseError, match="outside any section"):
        parse_model("format_version: 1\nA = 1\n")


def test_malformed_reaction_entries():
    head = "format_version: 1\nspecies:\n  A = 1\nreactions:\n"
    with pytest.raises(ParseError, match="more than one '->'"):
        parse_model(head + "  A -> A -> A @ 1\n")
    with pytest.raises(ParseError, match="missing '->'"):
        parse_model(head + "  A @ 1\n")
    with pytest.raises(ParseError, match="bad rate constant"):
        parse_model(head + "  A -> 0 @ fast\n")
    with pytest.raises(ParseError, match="coefficient must be positive"):
        parse_model(head + "  0 A -> 0 @ 1\n")
    with pytest.raises(ParseError, match="cannot parse reaction term"):
        parse_model(head + "  2 A A -> 0 @ 1\n")
    with pytest.raises(ParseError, match="unknown reaction attribute"):
        parse_model(head + "  A -> 0 @ 1 [speed: 3]\n")
    with pytest.raises(ParseError, match="min_cap must be positive"):
        parse_model(head + "  A -> 0 @ 1 [min_cap: -1]\n")


def test_section_header_rejects_inline_value():
    with pytest.raises(ParseError, match="takes no inline value"):
        parse_model("format_version: 1\nspecies: A = 1\n")


def test_duplicate_section_rejected():
    with pytest.raises(ParseError, match="duplicate section"):
        parse_model(
            "format_version: 1\nspecies:\n  A = 1\nspecies:\n  B = 1\n"
        )


def test_channel_map_requires_reduced_model():
    with pytest.raises(ParseError, match="channel_map requires"):
        parse_model(
            "format_version: 1\nspecies:\n  A = 1\nreactions:\n  A -> 0 @ 1\n"
            "channel_map:\n  1 -> 1\n"
        )


def test_channel_map_bounds_checked():
    text = (
        "format_version: 1\nspecies:\n  A = 1\nreactions:\n  A -> 0 @ 1\n"
        "reduced_species:\n  A = 1\nreduced_reactions:\n  A -> 0 @ 1\n"
        "channel_map:\n  2 -> 1\n"
    )
    with pytest.raises(ParseError, match="exceeds"):
        parse_model(text)


def test_shipped_model_files_match_builders():
    # models/*.model are the canonical serialized forms of the builders
    import pathlib

    root = pathlib.Path(__file__).resolve().parent.parent / "models"
    for name, model in bundled_models().items():
        path = root / f"{name}.model"
        assert path.exists(), path
        assert path.read_text() == serialize_model(model)


def test_round_trip_idempotent_on_bundled_corpus():
    for name, model in bundled_models().items():
        text = serialize_model(model)
        reparsed = parse_model(text)
        assert serialize_model(reparsed) == text, name
        assert reparsed.network.species == model.network.species
        assert np.array_equal(
            reparsed.network.zeta_matrix, model.network.zeta_matrix
        )
        assert np.allclose(
            reparsed.network.rate_constants, model.network.rate_constants
        )
        if model.reduced is not None:
            assert reparsed.channel_map.pairs == model.channel_map.pairs


def test_viral_bundle_structure():
    model = get_model("viral")
    assert model.network.species_names == ("G", "S", "T", "V")
    assert np.array_equal(model.network.initial_counts, [0, 0, 10, 0])
    assert model.network.num_reactions == 6
    assert model.reduced.num_reactions == 4
    # coupled through channels 1, 2, 4, 6 of the full model (1-based)
    assert model.channel_map.pairs == ((0, 0), (1, 1), (3, 2), (5, 3))
    assert model.channel_map.unpaired_a(model.network) == (2, 4)
    assert model.channel_map.unpaired_b(model.reduced) == ()
    # reduced packaging rate carries the 500-per-template substitution
    assert model.reduced.rate_constants[3] == pytest.approx(7.5e-6 * 500)


def test_isomerization_theta_parameters():
    assert np.array_equal(get_model("isomerization").network.initial_counts,
                          [1000, 1000])
    m = get_model("isomerization:theta=10")
    assert np.array_equal(m.network.initial_counts, [100, 100])
    assert np.allclose(m.network.rate_constants, [10.0, 10.0])
    m = get_model("isomerization:theta=0.1")
    assert np.array_equal(m.network.initial_counts, [10000, 10000])
    with pytest.raises(KeyError):
        get_model("nosuchmodel")
