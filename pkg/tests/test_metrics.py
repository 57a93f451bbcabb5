from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from inmind.errors import LengthMismatch, MismatchedInstanceSets
from inmind.game import ROLE_COMPOSITION, Role, RoleAssignment
from inmind.metrics import (
    Scheme,
    delta_prior_trace,
    exact_match,
    role_round_score,
    round_weights,
    score_exact_match,
    score_role_inference,
    score_topk,
)
from inmind.parsers import RankedPrediction, ReplacementMap, RoleMap

TRUTH = RoleAssignment.from_mapping(
    {1: "percival", 2: "assassin", 3: "loyal", 4: "merlin", 5: "morgana", 6: "loyal"}
)
PERFECT = RoleMap(TRUTH.as_dict())
WRONG = RoleMap({1: Role.LOYAL, 2: Role.MERLIN, 3: Role.MORGANA, 4: Role.ASSASSIN, 5: Role.PERCIVAL, 6: Role.MERLIN})


def test_topk_membership():
    pred = RankedPrediction("player3", ("player3", "player1", "player2"))
    out = score_topk([pred], [1])
    assert out.top1 == 0.0 and out.top3 == 1.0


def test_topk_all_failures():
    out = score_topk([None, None], [1, 2])
    assert (out.top1, out.top3) == (0.0, 0.0)


def test_exact_match_all_or_nothing():
    truth = ReplacementMap({1: (1,), 2: (5,)})
    assert exact_match(ReplacementMap({1: (1,), 2: (5,)}), truth).correct
    wrong = exact_match(ReplacementMap({1: (1,), 2: (4,)}), truth)
    assert not wrong.correct and wrong.reason == "wrong-digits"
    assert wrong.per_mask == {1: True, 2: False}
    missing = exact_match(ReplacementMap({1: (1,)}), truth)
    assert missing.reason == "missing-mask"
    assert exact_match(ReplacementMap({1: (1,), 2: (5,), 3: (2,)}), truth).reason == "extra-mask"
    assert exact_match(None, truth).reason == "parse-error"


def test_exact_match_aggregate():
    truth = [ReplacementMap({1: (1,), 2: (5,)}), ReplacementMap({1: (3,)})]
    preds = [ReplacementMap({1: (1,), 2: (4,)}), ReplacementMap({1: (3,)})]
    agg = score_exact_match(preds, truth)
    assert agg.accuracy == 0.5
    assert agg.per_mask_accuracy == pytest.approx(2 / 3)
    with pytest.raises(LengthMismatch):
        score_exact_match(preds, truth[:1])


def test_merlin_percival_swap():
    swapped = RoleMap({**TRUTH.as_dict(), 1: Role.MERLIN, 4: Role.PERCIVAL})
    assert role_round_score(swapped, TRUTH, Scheme.STRICT) == pytest.approx(4 / 6)
    assert role_round_score(swapped, TRUTH, Scheme.RELAXED) == 1.0
    assert role_round_score(swapped, TRUTH, Scheme.ALL_EXACT) == 0.0


@pytest.mark.parametrize("weighting", ["uniform", "linear", "exp"])
@pytest.mark.parametrize("scheme", list(Scheme))
def test_perfect_scores_one(weighting, scheme):
    assert score_role_inference([PERFECT] * 4, TRUTH, scheme, weighting) == pytest.approx(1.0)


def test_linear_weights_favor_late_rounds():
    assert round_weights(3, "linear") == pytest.approx([1 / 6, 2 / 6, 3 / 6])
    late = score_role_inference([WRONG, WRONG, PERFECT], TRUTH, Scheme.ALL_EXACT)
    early = score_role_inference([PERFECT, WRONG, WRONG], TRUTH, Scheme.ALL_EXACT)
    assert late == pytest.approx(0.5)
    assert early == pytest.approx(1 / 6)


def test_expected_rounds_enforced():
    with pytest.raises(LengthMismatch):
        score_role_inference([PERFECT], TRUTH, expected_rounds=2)


def test_zero_violations_toggle():
    two_merlins = RoleMap({**TRUTH.as_dict(), 3: Role.MERLIN})
    assert not two_merlins.composition_ok
    assert score_role_inference([two_merlins], TRUTH) == pytest.approx(5 / 6)
    assert score_role_inference([two_merlins], TRUTH, zero_violations=True) == 0.0


def test_delta_prior_trace():
    assert delta_prior_trace(0.503, 0.517) == pytest.approx(0.014)
    assert delta_prior_trace(0.4, 0.4) == 0.0
    with pytest.raises(MismatchedInstanceSets):
        delta_prior_trace(0.1, 0.2, ["a", "b"], ["a"])


role_maps = st.fixed_dictionaries({p: st.sampled_from(list(Role)) for p in range(1, 7)}).map(RoleMap)
assignments = st.permutations(list(ROLE_COMPOSITION.elements())).map(lambda r: RoleAssignment(tuple(r)))


@given(role_maps, assignments)
def test_relaxed_dominates_strict(pred, truth):
    strict = role_round_score(pred, truth, Scheme.STRICT)
    assert role_round_score(pred, truth, Scheme.RELAXED) >= strict >= role_round_score(pred, truth, Scheme.ALL_EXACT)


@given(st.integers(2, 8), st.data(), st.sampled_from(["linear", "exp"]))
def test_moving_correct_round_later_never_hurts(n, data, weighting):
    correct = data.draw(st.lists(st.booleans(), min_size=n, max_size=n))
    i = data.draw(st.integers(0, n - 2))
    if not correct[i] or correct[i + 1]:
        return
    moved = list(correct)
    moved[i], moved[i + 1] = False, True
    before = score_role_inference([PERFECT if c else WRONG for c in correct], TRUTH, "all_exact", weighting)
    after = score_role_inference([PERFECT if c else WRONG for c in moved], TRUTH, "all_exact", weighting)
    assert after >= before


@given(st.floats(0, 1))
def test_delta_of_equal_is_zero(x):
    assert delta_prior_trace(x, x) == 0.0
