"""Annotated session model: types, canonical JSON form, and engine replay."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from importlib import resources
from typing import Any, Iterator, Union

import jsonschema

from . import game
from .errors import ConsistencyError, GameError, SchemaError
from .game import Alignment, GameOutcome, MissionResult, MissionVote, OutcomeReason, Phase, Role, RoleAssignment

SYSTEM = "system"


class Mode(str, Enum):
    OBSERVER = "observer"
    PARTICIPANT = "participant"


@dataclass(frozen=True)
class MentionSpan:
    start: int
    end: int
    players: tuple[int, ...]


@dataclass(frozen=True)
class AnnotatedText:
    text: str
    translation: str | None = None
    mentions: tuple[MentionSpan, ...] = ()


@dataclass(frozen=True)
class Utterance:
    speaker: int | str  # player id or SYSTEM
    text: str
    translation: str | None = None
    mentions: tuple[MentionSpan, ...] = ()

    @property
    def annotated(self) -> AnnotatedText:
        return AnnotatedText(self.text, self.translation, self.mentions)


@dataclass(frozen=True)
class Proposal:
    leader: int
    team: tuple[int, ...]
    final: bool


@dataclass(frozen=True)
class TeamVote:
    approvals: tuple[int, ...]
    approved: bool


@dataclass(frozen=True)
class Timeout:
    leader: int


@dataclass(frozen=True)
class MissionTally:
    good: int
    bad: int


@dataclass(frozen=True)
class Assassination:
    target: int
    early: bool


Event = Union[Proposal, TeamVote, Timeout, MissionTally, Assassination]


@dataclass(frozen=True)
class RoundEvents:
    utterances: tuple[Utterance, ...]
    events: tuple[Event, ...]
    trace: AnnotatedText | None = None

    @property
    def leader(self) -> int | None:
        for e in self.events:
            if isinstance(e, (Proposal, Timeout)):
                return e.leader
        return None

    @property
    def final_team(self) -> tuple[int, ...]:
        team: tuple[int, ...] = ()
        for e in self.events:
            if isinstance(e, Proposal):
                team = e.team
        return team


@dataclass(frozen=True)
class MissionBlock:
    index: int
    rounds: tuple[RoundEvents, ...]
    result: MissionTally | None = None


@dataclass(frozen=True)
class Session:
    mode: Mode
    subject: int
    observed_player: int | None
    assignment: RoleAssignment
    missions: tuple[MissionBlock, ...]
    reflection: AnnotatedText
    outcome: GameOutcome
    id: str = ""

    def rounds(self) -> Iterator[tuple[tuple[int, int], RoundEvents]]:
        """Flattened ``((mission, round), events)`` sequence, both 1-based."""
        for block in self.missions:
            for r, rnd in enumerate(block.rounds, start=1):
                yield (block.index, r), rnd

    def traces(self) -> list[tuple[tuple[int, int], AnnotatedText]]:
        return [(pos, rnd.trace) for pos, rnd in self.rounds() if rnd.trace is not None]

    def utterances(self) -> Iterator[Utterance]:
        for _, rnd in self.rounds():
            yield from rnd.utterances

    @property
    def subject_role(self) -> Role:
        return self.assignment[self.subject]


# --- serialization ------------------------------------------------------------


@lru_cache(maxsize=1)
def _validator() -> jsonschema.protocols.Validator:
    schema = json.loads(resources.files("inmind").joinpath("schema/session.schema.json").read_text("utf-8"))
    return jsonschema.Draft202012Validator(schema)


def _pointer(parts) -> str:
    return "/" + "/".join(str(p) for p in parts) if parts else "/"


def _schema_errors(doc: Any) -> list[SchemaError]:
    out = []
    for err in sorted(_validator().iter_errors(doc), key=lambda e: list(e.absolute_path)):
        path = list(err.absolute_path)
        if err.validator == "required" and isinstance(err.instance, dict):
            for name in err.validator_value:
                if name not in err.instance:
                    out.append(SchemaError(_pointer(path + [name]), "required field missing"))
            continue
        out.append(SchemaError(_pointer(path), err.message))
    return out


def _spans(raw: list[dict], text: str, path: str) -> tuple[MentionSpan, ...]:
    spans = []
    prev_end = 0
    for i, s in enumerate(raw):
        where = f"{path}/mentions/{i}"
        if not 0 <= s["start"] < s["end"] <= len(text):
            raise SchemaError(where, f"span [{s['start']}, {s['end']}) outside text of length {len(text)}")
        if s["start"] < prev_end:
            raise SchemaError(where, "spans overlap or are out of order")
        players = tuple(s["players"])
        if any(b <= a for a, b in zip(players, players[1:])):
            raise SchemaError(where + "/players", "players must be strictly ascending")
        spans.append(MentionSpan(s["start"], s["end"], players))
        prev_end = s["end"]
    return tuple(spans)


def _annotated(raw: dict, path: str) -> AnnotatedText:
    return AnnotatedText(raw["text"], raw.get("translation"), _spans(raw.get("mentions", []), raw["text"], path))


def _event(raw: dict) -> Event:
    kind = raw["type"]
    if kind == "proposal":
        return Proposal(raw["leader"], tuple(sorted(raw["team"])), raw["final"])
    if kind == "team_vote":
        return TeamVote(tuple(sorted(raw["approvals"])), raw["approved"])
    if kind == "timeout":
        return Timeout(raw["leader"])
    if kind == "mission_tally":
        return MissionTally(raw["good"], raw["bad"])
    return Assassination(raw["target"], raw["early"])


def session_from_dict(doc: dict, *, replay_check: bool = True) -> Session:
    errors = _schema_errors(doc)
    if errors:
        raise errors[0]
    mode = Mode(doc["mode"])
    if mode is Mode.OBSERVER and doc["observed_player"] is None:
        raise SchemaError("/observed_player", "observer sessions need an observed player")
    if mode is Mode.PARTICIPANT and doc["observed_player"] is not None:
        raise SchemaError("/observed_player", "participant sessions must not set an observed player")
    try:
        assignment = RoleAssignment.from_mapping(doc["assignment"])
    except GameError as e:
        raise SchemaError("/assignment", str(e)) from None

    missions = []
    for mi, m in enumerate(doc["missions"]):
        rounds = []
        for ri, r in enumerate(m["rounds"]):
            base = f"/missions/{mi}/rounds/{ri}"
            utts = tuple(
                Utterance(
                    u["speaker"],
                    u["text"],
                    u.get("translation"),
                    _spans(u.get("mentions", []), u["text"], f"{base}/utterances/{ui}"),
                )
                for ui, u in enumerate(r["utterances"])
            )
            trace = _annotated(r["trace"], f"{base}/trace") if r["trace"] is not None else None
            rounds.append(RoundEvents(utts, tuple(_event(e) for e in r["events"]), trace))
        result = MissionTally(m["result"]["good"], m["result"]["bad"]) if m["result"] else None
        missions.append(MissionBlock(m["index"], tuple(rounds), result))

    outcome_raw = doc["outcome"]
    try:
        outcome = GameOutcome(Alignment(outcome_raw["winner"]), OutcomeReason(outcome_raw["reason"]))
    except ValueError as e:
        raise SchemaError("/outcome", str(e)) from None

    session = Session(
        mode=mode,
        subject=doc["subject"],
        observed_player=doc["observed_player"],
        assignment=assignment,
        missions=tuple(missions),
        reflection=_annotated(doc["reflection"], "/reflection"),
        outcome=outcome,
        id=doc.get("id", ""),
    )
    if not session.id:
        session = _with_id(session, hashlib.sha256(dump_session(session)).hexdigest()[:12])
    if replay_check:
        replay(session)
    return session


def _with_id(session: Session, sid: str) -> Session:
    return replace(session, id=sid)


def load_session(document: bytes | str) -> Session:
    """Parse and fully validate a session document (schema, invariants, replay)."""
    if isinstance(document, bytes):
        document = document.decode("utf-8")
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as e:
        raise SchemaError("/", f"not valid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise SchemaError("/", "top level must be an object")
    return session_from_dict(doc)


def _spans_json(spans) -> list[dict]:
    return [{"start": s.start, "end": s.end, "players": list(s.players)} for s in spans]


def _annotated_json(a: AnnotatedText) -> dict:
    return {"text": a.text, "translation": a.translation, "mentions": _spans_json(a.mentions)}


def _event_json(e: Event) -> dict:
    if isinstance(e, Proposal):
        return {"type": "proposal", "leader": e.leader, "team": list(e.team), "final": e.final}
    if isinstance(e, TeamVote):
        return {"type": "team_vote", "approvals": list(e.approvals), "approved": e.approved}
    if isinstance(e, Timeout):
        return {"type": "timeout", "leader": e.leader}
    if isinstance(e, MissionTally):
        return {"type": "mission_tally", "good": e.good, "bad": e.bad}
    return {"type": "assassination", "target": e.target, "early": e.early}


def session_to_dict(session: Session) -> dict:
    doc: dict[str, Any] = {}
    if session.id:
        doc["id"] = session.id
    doc.update(
        mode=session.mode.value,
        subject=session.subject,
        observed_player=session.observed_player,
        assignment={str(p): r.value for p, r in session.assignment.as_dict().items()},
        missions=[
            {
                "index": m.index,
                "rounds": [
                    {
                        "utterances": [
                            {
                                "speaker": u.speaker,
                                "text": u.text,
                                "translation": u.translation,
                                "mentions": _spans_json(u.mentions),
                            }
                            for u in r.utterances
                        ],
                        "events": [_event_json(e) for e in r.events],
                        "trace": _annotated_json(r.trace) if r.trace is not None else None,
                    }
                    for r in m.rounds
                ],
                "result": {"good": m.result.good, "bad": m.result.bad} if m.result else None,
            }
            for m in session.missions
        ],
        reflection=_annotated_json(session.reflection),
        outcome={"winner": session.outcome.winner.value, "reason": session.outcome.reason.value},
    )
    return doc


def dump_session(session: Session) -> bytes:
    """Canonical UTF-8 JSON (fixed key order, trailing newline)."""
    return (json.dumps(session_to_dict(session), ensure_ascii=False, indent=2) + "\n").encode("utf-8")


# --- replay ------------------------------------------------------------------


@dataclass
class ReplayLog:
    final_state: game.GameState
    team_votes: list[tuple[int, int, bool]] = field(default_factory=list)  # (mission, round, approved)
    timeouts: list[tuple[int, int]] = field(default_factory=list)
    mission_results: list[MissionResult] = field(default_factory=list)
    tallies: list[MissionTally] = field(default_factory=list)


def replay(session: Session) -> ReplayLog:
    """Drive every recorded event through the engine; raise ConsistencyError on disagreement."""
    first = session.missions[0].rounds[0].leader
    if first is None:
        raise ConsistencyError("first round has no leader")
    state = game.new_game(session.assignment, first)
    log = ReplayLog(final_state=state)

    def fail(where: str, msg: str) -> ConsistencyError:
        return ConsistencyError(f"mission {where}: {msg}")

    for block in session.missions:
        approved_rounds = 0
        for r_no, rnd in enumerate(block.rounds, start=1):
            where = f"{block.index} round {r_no}"
            if state.phase is Phase.FINISHED:
                raise fail(where, "events recorded after the game ended")
            if state.mission_index != block.index:
                raise fail(where, f"engine is on mission {state.mission_index}")
            team: tuple[int, ...] = ()
            round_leader = None
            try:
                for ev in rnd.events:
                    if isinstance(ev, Proposal):
                        if round_leader is None:
                            round_leader = ev.leader
                            state = game.propose_team(state, ev.team, leader=ev.leader)
                        elif ev.leader != round_leader:
                            raise fail(where, "leader changed within a proposal round")
                        team = ev.team
                    elif isinstance(ev, TeamVote):
                        state = game.apply_team_vote(state, team, ev.approvals)
                        approved = state.phase is Phase.MISSION_VOTING
                        if approved != ev.approved:
                            raise fail(where, f"recorded approved={ev.approved}, engine says {approved}")
                        log.team_votes.append((block.index, r_no, approved))
                        approved_rounds += approved
                    elif isinstance(ev, Timeout):
                        if round_leader is not None and ev.leader != round_leader:
                            raise fail(where, "timeout leader differs from proposer")
                        state = game.apply_proposal_timeout(state)
                        log.timeouts.append((block.index, r_no))
                    elif isinstance(ev, MissionTally):
                        members = state.team
                        if ev.good + ev.bad != len(members):
                            raise fail(where, f"tally {ev.good}+{ev.bad} != team size {len(members)}")
                        evil = [p for p in members if session.assignment[p].alignment is Alignment.EVIL]
                        if ev.bad > len(evil):
                            raise fail(where, f"{ev.bad} fail votes but only {len(evil)} evil members")
                        fails = set(evil[: ev.bad])
                        votes = {p: MissionVote.FAIL if p in fails else MissionVote.SUCCESS for p in members}
                        state = game.apply_mission_votes(state, votes)
                        log.mission_results.append(state.results[-1])
                        log.tallies.append(ev)
                        if block.result is not None and block.result != ev:
                            raise fail(where, "mission result disagrees with tally event")
                    elif isinstance(ev, Assassination):
                        state = game.assassinate(state, ev.target, early=ev.early)
            except GameError as e:
                raise fail(where, str(e)) from None
        if approved_rounds > 1:
            raise fail(str(block.index), "more than one approved proposal")
        if (block.result is not None) != (approved_rounds == 1):
            raise fail(str(block.index), "result present iff a proposal was approved")

    if state.phase is not Phase.FINISHED:
        raise ConsistencyError(f"game not finished after replay (phase {state.phase.value})")
    if state.outcome != session.outcome:
        raise ConsistencyError(f"recorded outcome {session.outcome} but engine reached {state.outcome}")
    log.final_state = state
    return log
