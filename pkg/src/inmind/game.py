"""Six-player Avalon rules engine.

Every operation takes an immutable :class:`GameState` and returns a new one.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Mapping

from .errors import (
    BadTeamSize,
    GoodPlayerFailVote,
    InvalidAssignment,
    MissingVote,
    OutOfRange,
    WrongPhase,
)

PLAYERS = (1, 2, 3, 4, 5, 6)
TEAM_SIZES = (2, 3, 4, 3, 4)
MAX_REJECTIONS = 5


class Alignment(str, Enum):
    GOOD = "good"
    EVIL = "evil"


class Role(str, Enum):
    MERLIN = "merlin"
    PERCIVAL = "percival"
    LOYAL = "loyal"
    MORGANA = "morgana"
    ASSASSIN = "assassin"

    @property
    def alignment(self) -> Alignment:
        if self in (Role.MORGANA, Role.ASSASSIN):
            return Alignment.EVIL
        return Alignment.GOOD


ROLE_COMPOSITION = Counter(
    {Role.MERLIN: 1, Role.PERCIVAL: 1, Role.LOYAL: 2, Role.MORGANA: 1, Role.ASSASSIN: 1}
)


@dataclass(frozen=True)
class RoleAssignment:
    """Seat -> role mapping. ``roles[i]`` is the role of player ``i + 1``."""

    roles: tuple[Role, ...]

    def __post_init__(self):
        if len(self.roles) != 6:
            raise InvalidAssignment(f"expected 6 roles, got {len(self.roles)}")
        if Counter(self.roles) != ROLE_COMPOSITION:
            raise InvalidAssignment(f"bad role multiset: {sorted(r.value for r in self.roles)}")

    @classmethod
    def from_mapping(cls, mapping: Mapping[int, Role | str]) -> "RoleAssignment":
        keys = sorted(int(k) for k in mapping)
        if keys != list(PLAYERS):
            raise InvalidAssignment(f"players must be exactly 1..6, got {keys}")
        by_int = {int(k): v for k, v in mapping.items()}
        try:
            roles = tuple(Role(by_int[p]) for p in PLAYERS)
        except ValueError as e:
            raise InvalidAssignment(str(e)) from None
        return cls(roles)

    def __getitem__(self, player: int) -> Role:
        _check_player(player)
        return self.roles[player - 1]

    def as_dict(self) -> dict[int, Role]:
        return {p: self.roles[p - 1] for p in PLAYERS}

    def seat_of(self, role: Role) -> list[int]:
        return [p for p in PLAYERS if self.roles[p - 1] is role]

    def evil_players(self) -> list[int]:
        return [p for p in PLAYERS if self.roles[p - 1].alignment is Alignment.EVIL]


class Phase(str, Enum):
    PROPOSING = "proposing"
    TEAM_VOTING = "team_voting"
    MISSION_VOTING = "mission_voting"
    ASSASSINATION = "assassination"
    FINISHED = "finished"


class MissionResult(str, Enum):
    SUCCESS = "success"
    FAIL = "fail"


class MissionVote(str, Enum):
    SUCCESS = "success"
    FAIL = "fail"


class OutcomeReason(str, Enum):
    THREE_SUCCESSES_ASSASSIN_MISSED = "three_successes_assassin_missed"
    ASSASSIN_HIT_MERLIN = "assassin_hit_merlin"
    THREE_FAILURES = "three_failures"
    FIVE_REJECTIONS = "five_rejections"
    EARLY_KNIFE_HIT = "early_knife_hit"


_EVIL_REASONS = {
    OutcomeReason.ASSASSIN_HIT_MERLIN,
    OutcomeReason.THREE_FAILURES,
    OutcomeReason.FIVE_REJECTIONS,
    OutcomeReason.EARLY_KNIFE_HIT,
}


@dataclass(frozen=True)
class GameOutcome:
    winner: Alignment
    reason: OutcomeReason

    def __post_init__(self):
        expected = Alignment.EVIL if self.reason in _EVIL_REASONS else Alignment.GOOD
        if self.winner is not expected:
            raise ValueError(f"{self.reason.value} implies winner={expected.value}")


@dataclass(frozen=True)
class GameState:
    assignment: RoleAssignment
    leader: int
    mission_index: int = 1
    proposal_round: int = 1
    results: tuple[MissionResult, ...] = ()
    consecutive_rejections: int = 0
    phase: Phase = Phase.PROPOSING
    team: tuple[int, ...] = ()
    outcome: GameOutcome | None = None
    early_knife_used: bool = False

    @property
    def successes(self) -> int:
        return self.results.count(MissionResult.SUCCESS)

    @property
    def failures(self) -> int:
        return self.results.count(MissionResult.FAIL)


def _check_player(p: int) -> None:
    if p not in PLAYERS:
        raise OutOfRange(f"player id {p!r} not in 1..6")


def next_player(p: int) -> int:
    return p % 6 + 1


def required_team_size(mission_index: int) -> int:
    if not 1 <= mission_index <= 5:
        raise OutOfRange(f"mission index {mission_index} not in 1..5")
    return TEAM_SIZES[mission_index - 1]


def new_game(assignment: RoleAssignment | Mapping[int, Role | str], first_leader: int) -> GameState:
    if not isinstance(assignment, RoleAssignment):
        assignment = RoleAssignment.from_mapping(assignment)
    _check_player(first_leader)
    return GameState(assignment=assignment, leader=first_leader)


def visible_info(assignment: RoleAssignment, viewer: int) -> frozenset[tuple[int, str]]:
    """What ``viewer`` is told at setup, as ``(player, label)`` pairs.

    Labels: ``"evil"`` (Merlin's view), ``"ambiguous"`` (Percival's thumbs),
    ``"teammate"`` (Evil players seeing each other).
    """
    _check_player(viewer)
    role = assignment[viewer]
    if role is Role.MERLIN:
        return frozenset((p, "evil") for p in assignment.evil_players())
    if role is Role.PERCIVAL:
        seen = assignment.seat_of(Role.MERLIN) + assignment.seat_of(Role.MORGANA)
        return frozenset((p, "ambiguous") for p in seen)
    if role is Role.MORGANA:
        return frozenset((p, "teammate") for p in assignment.seat_of(Role.ASSASSIN))
    if role is Role.ASSASSIN:
        return frozenset((p, "teammate") for p in assignment.seat_of(Role.MORGANA))
    return frozenset()


def _require(state: GameState, *phases: Phase) -> None:
    if state.phase not in phases:
        allowed = "/".join(p.value for p in phases)
        raise WrongPhase(f"phase is {state.phase.value}, expected {allowed}")


def _validate_team(state: GameState, team: Iterable[int]) -> tuple[int, ...]:
    members = tuple(sorted(set(team)))
    for p in members:
        _check_player(p)
    size = required_team_size(state.mission_index)
    if len(members) != size:
        raise BadTeamSize(f"mission {state.mission_index} needs {size} players, got {list(members)}")
    return members


def propose_team(state: GameState, team: Iterable[int], leader: int | None = None) -> GameState:
    """Leader puts a team forward; moves to TEAM_VOTING.

    ``leader`` overrides the engine's rotation (recorded sessions carry their own).
    """
    _require(state, Phase.PROPOSING)
    if leader is not None:
        _check_player(leader)
    members = _validate_team(state, team)
    return replace(
        state, team=members, phase=Phase.TEAM_VOTING, leader=state.leader if leader is None else leader
    )


def _rejected(state: GameState) -> GameState:
    rejections = state.consecutive_rejections + 1
    if rejections >= MAX_REJECTIONS:
        return replace(
            state,
            consecutive_rejections=rejections,
            team=(),
            phase=Phase.FINISHED,
            outcome=GameOutcome(Alignment.EVIL, OutcomeReason.FIVE_REJECTIONS),
        )
    return replace(
        state,
        consecutive_rejections=rejections,
        proposal_round=state.proposal_round + 1,
        leader=next_player(state.leader),
        team=(),
        phase=Phase.PROPOSING,
    )


def apply_team_vote(state: GameState, proposal: Iterable[int], approvals: Iterable[int]) -> GameState:
    """Public vote on the final proposal. Strictly more than 3 approvals passes."""
    _require(state, Phase.TEAM_VOTING)
    members = _validate_team(state, proposal)
    approvers = set(approvals)
    for p in approvers:
        _check_player(p)
    if len(approvers) > 3:
        return replace(state, team=members, consecutive_rejections=0, phase=Phase.MISSION_VOTING)
    return _rejected(state)


def apply_proposal_timeout(state: GameState) -> GameState:
    """Leader failed to confirm a team in time; counts as a failed formation."""
    _require(state, Phase.PROPOSING, Phase.TEAM_VOTING)
    return _rejected(state)


def apply_mission_votes(state: GameState, votes: Mapping[int, MissionVote | str]) -> GameState:
    _require(state, Phase.MISSION_VOTING)
    cast = {int(p): MissionVote(v) for p, v in votes.items()}
    missing = [p for p in state.team if p not in cast]
    if missing:
        raise MissingVote(f"no mission vote from {missing}")
    extra = [p for p in cast if p not in state.team]
    if extra:
        raise MissingVote(f"votes from non-members {extra}")
    for p, v in cast.items():
        if v is MissionVote.FAIL and state.assignment[p].alignment is Alignment.GOOD:
            raise GoodPlayerFailVote(f"player {p} is Good and cannot play Fail")

    failed = any(v is MissionVote.FAIL for v in cast.values())
    results = state.results + (MissionResult.FAIL if failed else MissionResult.SUCCESS,)
    nxt = replace(state, results=results, team=())
    if results.count(MissionResult.FAIL) >= 3:
        return replace(
            nxt, phase=Phase.FINISHED, outcome=GameOutcome(Alignment.EVIL, OutcomeReason.THREE_FAILURES)
        )
    if results.count(MissionResult.SUCCESS) >= 3:
        if state.early_knife_used:
            # the single knife was already spent
            return replace(
                nxt,
                phase=Phase.FINISHED,
                outcome=GameOutcome(Alignment.GOOD, OutcomeReason.THREE_SUCCESSES_ASSASSIN_MISSED),
            )
        return replace(nxt, phase=Phase.ASSASSINATION)
    return replace(
        nxt,
        phase=Phase.PROPOSING,
        mission_index=state.mission_index + 1,
        proposal_round=1,
        leader=next_player(state.leader),
    )


def assassinate(state: GameState, target: int, early: bool = False) -> GameState:
    """Assassin names a target.

    ``early=True`` is the knife both Evil players agree on before the end;
    a miss leaves play running but spends the knife.
    """
    _check_player(target)
    hit = state.assignment[target] is Role.MERLIN
    if not early:
        _require(state, Phase.ASSASSINATION)
        if hit:
            outcome = GameOutcome(Alignment.EVIL, OutcomeReason.ASSASSIN_HIT_MERLIN)
        else:
            outcome = GameOutcome(Alignment.GOOD, OutcomeReason.THREE_SUCCESSES_ASSASSIN_MISSED)
        return replace(state, phase=Phase.FINISHED, outcome=outcome)

    if state.phase is Phase.FINISHED or state.early_knife_used:
        raise WrongPhase("early knife not available")
    if hit:
        return replace(
            state, phase=Phase.FINISHED, outcome=GameOutcome(Alignment.EVIL, OutcomeReason.EARLY_KNIFE_HIT)
        )
    if state.phase is Phase.ASSASSINATION:
        return replace(
            state,
            early_knife_used=True,
            phase=Phase.FINISHED,
            outcome=GameOutcome(Alignment.GOOD, OutcomeReason.THREE_SUCCESSES_ASSASSIN_MISSED),
        )
    return replace(state, early_knife_used=True)
