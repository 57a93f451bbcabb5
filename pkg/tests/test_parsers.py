from __future__ import annotations

import json
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from inmind import errors
from inmind.errors import MalformedLine, MissingPlayer, NonAscending, ParseError, WrongArity
from inmind.game import Role
from inmind.parsers import (
    RankedPrediction,
    ReplacementMap,
    RoleMap,
    parse_ranked,
    parse_replacements,
    parse_roles,
    render_ranked,
    render_replacements,
    render_roles,
    split_sections,
)

ADVERSARIAL = json.loads((Path(__file__).parent / "fixtures" / "adversarial.json").read_text("utf-8"))
PARSERS = {"ranked": parse_ranked, "replacements": parse_replacements, "roles": parse_roles}

RECORDED_ROLES = {1: Role.PERCIVAL, 2: Role.ASSASSIN, 3: Role.LOYAL, 4: Role.MERLIN, 5: Role.MORGANA, 6: Role.LOYAL}


def test_split_sections_basic():
    out = split_sections("=== Content ===\nA\n=== Replacements ===\nB")
    assert out.content == "A"
    assert out.replacements == "B"
    assert out.order == ("content", "replacements")


def test_split_sections_no_markers():
    out = split_sections("just prose")
    assert out.preamble == "just prose"
    assert out.content is None and out.replacements is None and out.roles is None


def test_split_sections_duplicate_later_wins():
    out = split_sections("=== Roles ===\nfirst\n=== Roles ===\nsecond")
    assert out.roles == "second"
    assert len(out.warnings) == 1


def test_parse_ranked_plain_and_fenced():
    raw = '{"top1":"player2","top3":["player2","player5","player1"]}'
    plain = parse_ranked(raw)
    assert plain.top1 == "player2"
    assert plain.top3_ids == (2, 5, 1)
    fenced = parse_ranked(f"Here is my answer.\n```json\n{raw}\n```\nThanks.")
    assert fenced == plain


def test_parse_ranked_arity():
    with pytest.raises(WrongArity):
        parse_ranked('{"top1":"player2","top3":["player2","player5"]}')


def test_parse_replacements_examples():
    assert parse_replacements("[MASK_2(2digits)] => 35").entries == {2: (3, 5)}
    with pytest.raises(MalformedLine):
        parse_replacements("[MASK_1(1digit)] => 7")
    with pytest.raises(NonAscending):
        parse_replacements("[MASK_1(2digits)] => 53")


def test_normalize_digits_toggle():
    assert parse_replacements("[MASK_1(2digits)] => 53", normalize_digits=True).entries == {1: (3, 5)}


def test_replacements_section_preferred():
    text = "=== Content ===\n[MASK_9(1digit)] => 1\n=== Replacements ===\n[MASK_1(1digit)] => 4"
    assert parse_replacements(text).entries == {1: (4,)}


def test_parse_roles_bilingual_and_fullwidth():
    text = "玩家1：派西维尔\n玩家2：刺客\n玩家3：忠臣\nPlayer 4: [梅林]\n玩家5：【莫甘娜】\nPlayer 6: [Loyal Servant]"
    assert parse_roles(text).entries == RECORDED_ROLES


def test_parse_roles_two_merlins_flags_composition():
    entries = {**RECORDED_ROLES, 3: Role.MERLIN}
    parsed = parse_roles(render_roles(entries))
    assert parsed.entries[3] is Role.MERLIN
    assert not parsed.composition_ok


def test_parse_roles_missing_sixth():
    text = render_roles({p: r for p, r in RECORDED_ROLES.items() if p != 6})
    with pytest.raises(MissingPlayer) as err:
        parse_roles(text)
    assert err.value.player == 6


@pytest.mark.parametrize("case", ADVERSARIAL, ids=[f"{c['parser']}-{i}" for i, c in enumerate(ADVERSARIAL)])
def test_adversarial_fixture(case):
    expected = getattr(errors, case["error"])
    with pytest.raises(ParseError) as err:
        PARSERS[case["parser"]](case["input"])
    assert type(err.value) is expected


labels = st.sampled_from([f"player{p}" for p in range(1, 7)])
replacement_maps = st.dictionaries(
    st.integers(1, 12),
    st.lists(st.integers(1, 6), min_size=1, max_size=6, unique=True).map(lambda xs: tuple(sorted(xs))),
    max_size=8,
).map(ReplacementMap)
role_maps = st.fixed_dictionaries({p: st.sampled_from(list(Role)) for p in range(1, 7)}).map(RoleMap)


@settings(max_examples=300)
@given(replacement_maps)
def test_replacements_round_trip(rmap):
    assert parse_replacements(render_replacements(rmap)) == rmap


@settings(max_examples=300)
@given(role_maps, st.sampled_from(["en", "zh"]), st.booleans())
def test_roles_round_trip(rmap, lang, header):
    assert parse_roles(render_roles(rmap, lang, header)) == rmap


@given(st.lists(labels, min_size=3, max_size=3, unique=True))
def test_ranked_round_trip(top3):
    pred = RankedPrediction(top3[0], tuple(top3))
    assert parse_ranked(render_ranked(pred)) == pred


@settings(max_examples=300)
@given(st.text(max_size=200), st.sampled_from(sorted(PARSERS)))
def test_parsers_are_total(text, which):
    """Arbitrary text yields a value or a typed parse error, never anything else."""
    try:
        PARSERS[which](text)
    except ParseError:
        pass
