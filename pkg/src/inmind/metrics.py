"""Scoring: top-k accuracy, all-masks exact match, role inference, and prior-trace deltas."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Hashable, Iterable, Mapping, Sequence

from .errors import LengthMismatch, MismatchedInstanceSets
from .game import PLAYERS, Role, RoleAssignment
from .parsers import RankedPrediction, ReplacementMap, RoleMap


class Scheme(str, Enum):
    STRICT = "strict"
    RELAXED = "relaxed"
    ALL_EXACT = "all_exact"


class RoleGroup(str, Enum):
    INFORMED_GOOD = "informed_good"
    UNINFORMED_GOOD = "uninformed_good"
    EVIL = "evil"


ROLE_GROUP = {
    Role.MERLIN: RoleGroup.INFORMED_GOOD,
    Role.PERCIVAL: RoleGroup.INFORMED_GOOD,
    Role.LOYAL: RoleGroup.UNINFORMED_GOOD,
    Role.MORGANA: RoleGroup.EVIL,
    Role.ASSASSIN: RoleGroup.EVIL,
}

WEIGHTINGS = ("uniform", "linear", "exp")


@dataclass(frozen=True)
class TopK:
    top1: float
    top3: float
    n: int


def score_topk(predictions: Sequence[RankedPrediction | None], truths: Sequence[int]) -> TopK:
    """``None`` predictions (parse or backend failures) count as misses."""
    if len(predictions) != len(truths):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(truths)} truths")
    if not truths:
        return TopK(0.0, 0.0, 0)
    hit1 = sum(p is not None and p.top1_id == t for p, t in zip(predictions, truths))
    hit3 = sum(p is not None and t in p.top3_ids for p, t in zip(predictions, truths))
    return TopK(hit1 / len(truths), hit3 / len(truths), len(truths))


@dataclass(frozen=True)
class MatchResult:
    correct: bool
    reason: str | None
    per_mask: dict[int, bool] = field(default_factory=dict)


def exact_match(prediction: ReplacementMap | None, truth: ReplacementMap) -> MatchResult:
    if prediction is None:
        return MatchResult(False, "parse-error", {k: False for k in truth.entries})
    per_mask = {k: set(prediction.entries.get(k, ())) == set(v) for k, v in truth.entries.items()}
    if any(k not in prediction.entries for k in truth.entries):
        return MatchResult(False, "missing-mask", per_mask)
    extra = [k for k in prediction.entries if k not in truth.entries]
    if extra:
        return MatchResult(False, "extra-mask", per_mask)
    if not all(per_mask.values()):
        return MatchResult(False, "wrong-digits", per_mask)
    return MatchResult(True, None, per_mask)


@dataclass(frozen=True)
class ExactMatch:
    accuracy: float
    per_mask_accuracy: float
    n: int
    n_masks: int


def score_exact_match(predictions: Sequence[ReplacementMap | None], truths: Sequence[ReplacementMap]) -> ExactMatch:
    if len(predictions) != len(truths):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(truths)} truths")
    results = [exact_match(p, t) for p, t in zip(predictions, truths)]
    masks = [ok for r in results for ok in r.per_mask.values()]
    n = len(results)
    return ExactMatch(
        accuracy=sum(r.correct for r in results) / n if n else 0.0,
        per_mask_accuracy=sum(masks) / len(masks) if masks else 0.0,
        n=n,
        n_masks=len(masks),
    )


def round_weights(n_rounds: int, weighting: str = "linear") -> list[float]:
    """Normalized weights over rounds 1..n; ``linear`` is z / sum(1..n), ``exp`` is 2^z normalized."""
    if n_rounds < 1:
        raise LengthMismatch("at least one round is required")
    if weighting == "uniform":
        raw = [1.0] * n_rounds
    elif weighting == "linear":
        raw = [float(z) for z in range(1, n_rounds + 1)]
    elif weighting == "exp":
        raw = [2.0**z for z in range(1, n_rounds + 1)]
    else:
        raise ValueError(f"unknown weighting {weighting!r}")
    total = sum(raw)
    return [w / total for w in raw]


def role_round_score(prediction: RoleMap | None, truth: RoleAssignment, scheme: Scheme | str) -> float:
    scheme = Scheme(scheme)
    if prediction is None:
        return 0.0
    exact = [prediction.entries.get(p) is truth[p] for p in PLAYERS]
    if scheme is Scheme.ALL_EXACT:
        return 1.0 if all(exact) else 0.0
    if scheme is Scheme.STRICT:
        return sum(exact) / 6
    grouped = [
        p in prediction.entries and ROLE_GROUP[prediction.entries[p]] is ROLE_GROUP[truth[p]] for p in PLAYERS
    ]
    return sum(grouped) / 6


def score_role_inference(
    predictions: Sequence[RoleMap | None],
    truth: RoleAssignment,
    scheme: Scheme | str = Scheme.STRICT,
    weighting: str = "linear",
    *,
    expected_rounds: int | None = None,
    zero_violations: bool = False,
) -> float:
    """Weighted session score over rounds in order.

    Composition-violating maps are scored per player unless ``zero_violations``.
    """
    if expected_rounds is not None and len(predictions) != expected_rounds:
        raise LengthMismatch(f"{len(predictions)} round predictions, expected {expected_rounds}")
    weights = round_weights(len(predictions), weighting)
    total = 0.0
    for w, pred in zip(weights, predictions):
        if zero_violations and pred is not None and not pred.composition_ok:
            continue
        total += w * role_round_score(pred, truth, scheme)
    return min(1.0, max(0.0, total))


def delta_prior_trace(
    base: float,
    with_prior: float,
    base_ids: Iterable[Hashable] | None = None,
    prior_ids: Iterable[Hashable] | None = None,
) -> float:
    """``with_prior - base``; refuses when the two runs cover different instances."""
    if (base_ids is None) != (prior_ids is None):
        raise MismatchedInstanceSets("instance ids must be given for both runs or neither")
    if base_ids is not None and set(base_ids) != set(prior_ids):
        missing = set(base_ids) ^ set(prior_ids)
        raise MismatchedInstanceSets(f"instance sets differ on {sorted(map(str, missing))[:5]}")
    return with_prior - base


def mean(values: Iterable[float]) -> float:
    values = list(values)
    return sum(values) / len(values) if values else 0.0


def composition_violations(maps: Mapping | Sequence[RoleMap | None]) -> int:
    items = maps.values() if isinstance(maps, Mapping) else maps
    return sum(1 for m in items if m is not None and not m.composition_ok)
