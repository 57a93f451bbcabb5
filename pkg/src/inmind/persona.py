"""Scripted-agent simulator producing fully annotated sessions.

Each agent keeps a suspicion score per opponent and updates it from public
events only. Utterances, strategy traces and the reflection are rendered from
bilingual sentence templates, so every player mention carries an exact span.
"""

from __future__ import annotations

import math
import random
import re
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from typing import Any, Mapping, Sequence

from . import game
from .errors import ConfigError
from .game import PLAYERS, Alignment, MissionVote, Phase, Role, RoleAssignment
from .session import Mode, Session, session_from_dict


class DeceptionStyle(str, Enum):
    QUIET = "quiet"
    MIMIC = "mimic"
    AGGRESSIVE = "aggressive"


@dataclass(frozen=True)
class PersonaParams:
    suspicion_gain: float = 0.2
    accusation_threshold: float = 0.55
    verbosity: int = 2
    claim_propensity: float = 0.3
    deception_style: DeceptionStyle = DeceptionStyle.MIMIC
    trace_mention_rate: float = 2.0

    def validate(self) -> None:
        for name in ("suspicion_gain", "accusation_threshold", "claim_propensity"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name}={v} outside [0, 1]")
        if self.verbosity not in (1, 2, 3):
            raise ConfigError(f"verbosity={self.verbosity} not in 1..3")
        if not self.trace_mention_rate >= 0:
            raise ConfigError(f"trace_mention_rate={self.trace_mention_rate} must be >= 0")

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "PersonaParams":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown persona keys {sorted(unknown)}")
        kw = dict(raw)
        if "deception_style" in kw:
            try:
                kw["deception_style"] = DeceptionStyle(kw["deception_style"])
            except ValueError:
                raise ConfigError(f"bad deception_style {kw['deception_style']!r}") from None
        p = cls(**kw)
        p.validate()
        return p

    def to_dict(self) -> dict:
        d = asdict(self)
        d["deception_style"] = self.deception_style.value
        return d


DEFAULT_OPPONENTS = (
    PersonaParams(0.2, 0.5, 2, 0.3, DeceptionStyle.MIMIC, 1.0),
    PersonaParams(0.3, 0.6, 1, 0.2, DeceptionStyle.QUIET, 1.0),
    PersonaParams(0.15, 0.45, 3, 0.4, DeceptionStyle.AGGRESSIVE, 1.0),
    PersonaParams(0.25, 0.7, 2, 0.1, DeceptionStyle.MIMIC, 1.0),
)


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    num_observer_sessions: int = 5
    num_participant_sessions: int = 25
    subject_persona: PersonaParams = PersonaParams()
    opponent_pool: tuple[PersonaParams, ...] = DEFAULT_OPPONENTS
    evil_fail_probability: float = 0.85
    timeout_probability: float = 0.03

    def validate(self) -> None:
        if self.num_observer_sessions < 1 or self.num_participant_sessions < 1:
            raise ConfigError("both observer and participant session counts must be >= 1")
        if not self.opponent_pool:
            raise ConfigError("opponent_pool must not be empty")
        for name in ("evil_fail_probability", "timeout_probability"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name}={v} outside [0, 1]")
        self.subject_persona.validate()
        for p in self.opponent_pool:
            p.validate()

    @property
    def total(self) -> int:
        return self.num_observer_sessions + self.num_participant_sessions

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "SimConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown simulation keys {sorted(unknown)}")
        kw = dict(raw)
        if "subject_persona" in kw:
            kw["subject_persona"] = PersonaParams.from_dict(kw["subject_persona"])
        if "opponent_pool" in kw:
            kw["opponent_pool"] = tuple(PersonaParams.from_dict(p) for p in kw["opponent_pool"])
        try:
            cfg = cls(**kw)
        except TypeError as e:
            raise ConfigError(str(e)) from None
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "num_observer_sessions": self.num_observer_sessions,
            "num_participant_sessions": self.num_participant_sessions,
            "subject_persona": self.subject_persona.to_dict(),
            "opponent_pool": [p.to_dict() for p in self.opponent_pool],
            "evil_fail_probability": self.evil_fail_probability,
            "timeout_probability": self.timeout_probability,
        }


# --- text construction ----------------------------------------------------------

_SLOT = re.compile(r"\{(\w+)\}")
_ZH_NUM = "零一二三四五六七八九十"


class _TextBuilder:
    """Accumulates a zh primary text with mention spans and an en translation."""

    def __init__(self):
        self.zh = ""
        self.en: list[str] = []
        self.spans: list[dict] = []

    def add(self, template: tuple[str, str], **slots: Sequence[int] | str) -> None:
        zh_t, en_t = template
        pos = 0
        for m in _SLOT.finditer(zh_t):
            self.zh += zh_t[pos : m.start()]
            value = slots[m.group(1)]
            if isinstance(value, str):
                self.zh += value
            else:
                players = sorted(value)
                digits = "".join(str(p) for p in players)
                self.spans.append({"start": len(self.zh), "end": len(self.zh) + len(digits), "players": players})
                self.zh += digits
            pos = m.end()
        self.zh += zh_t[pos:]
        self.en.append(en_t.format(**{k: _en_value(v) for k, v in slots.items()}))

    @property
    def empty(self) -> bool:
        return not self.zh

    def annotated(self) -> dict:
        return {"text": self.zh, "translation": " ".join(self.en), "mentions": self.spans}


def _en_value(v) -> str:
    if isinstance(v, str):
        return v
    ids = sorted(v)
    return str(ids[0]) if len(ids) == 1 else ", ".join(map(str, ids[:-1])) + " and " + str(ids[-1])


T_PROPOSE = ("我这轮带{team}，大家看看。", "I'll take {team} this round; have a look.")
T_ACCUSE = ("我觉得{p}号有问题，投票很奇怪。", "I think Player {p} is suspicious; their votes look odd.")
T_ACCUSE_HARD = ("{p}号肯定是坏人，别让这位上车。", "Player {p} is definitely Evil; keep them off the team.")
T_ECHO = ("同意前面说的，{p}号确实可疑。", "I agree with what was said; Player {p} is indeed suspicious.")
T_TRUST = ("{p}号我目前比较信任。", "I currently trust Player {p}.")
T_TEAM_OK = ("{team}这个车我能接受。", "I can accept the team {team}.")
T_TEAM_BAD = ("{team}这个车我不太放心。", "I'm not comfortable with the team {team}.")
T_FAILED = ("上一局炸了，{team}里面有坏人。", "The last mission failed, so there is Evil among {team}.")
T_FILLER = ("这一轮信息不多，我先听听。", "Not much information this round; I'll listen first.")
T_PASS = ("过。", "Pass.")
T_CLAIM = ("我是派西维尔，拇指是{pair}。", "I am Percival; my thumbs are {pair}.")

TR_SUSPECT = ("我怀疑{p}号是坏人。", "I suspect Player {p} is Evil.")
TR_GOOD = ("{p}号目前看是好人。", "Player {p} looks Good so far.")
TR_TEAM_YES = ("{team}这个车可以投同意。", "The team {team} deserves an approve.")
TR_TEAM_NO = ("{team}这个车要投反对。", "The team {team} needs a reject.")
TR_MATE = ("队友{p}号要保护好，别暴露。", "Protect teammate {p} and stay hidden.")
TR_MERLIN = ("{p}号像梅林，最后可以刀。", "Player {p} looks like Merlin; a knife candidate.")
TR_WATCH = ("这一轮信息不够，先观察。", "Not enough information this round; keep watching.")

RF_SWING = ("{when}，{p}号的表现让我改变了看法。", "In {when_en}, Player {p}'s behaviour changed my view.")
RF_EVIL = ("复盘来看，红方是{pair}。", "Looking back, the Red team was {pair}.")


def _zh_when(m: int, r: int) -> str:
    return f"第{_ZH_NUM[m]}局第{_ZH_NUM[r]}轮"


# --- agents ---------------------------------------------------------------------


class _Beliefs:
    """Suspicion per opponent, seeded from setup knowledge, driven by public events."""

    def __init__(self, seat: int, assignment: RoleAssignment, gain: float):
        self.seat = seat
        self.role = assignment[seat]
        self.gain = gain
        self.susp = {p: 0.5 for p in PLAYERS if p != seat}
        # what the public record alone supports; hidden knowledge needs this as cover
        self.public = dict(self.susp)
        self.fixed: set[int] = set()
        for p, label in game.visible_info(assignment, seat):
            if label == "evil":
                self.susp[p] = 1.0
            elif label == "ambiguous":
                self.susp[p] = 0.35
            elif label == "teammate":
                self.susp[p] = 0.0
                self.fixed.add(p)
        if self.role is Role.MERLIN:
            for p in self.susp:
                if self.susp[p] < 1.0:
                    self.susp[p] = 0.0
            self.fixed = set(self.susp)

    def bump(self, p: int, delta: float) -> None:
        if p in self.public:
            self.public[p] = min(1.0, max(0.0, self.public[p] + delta))
        if p in self.susp and p not in self.fixed:
            self.susp[p] = min(1.0, max(0.0, self.susp[p] + delta))

    def cover(self, p: int) -> float:
        """Suspicion an agent can voice: private belief, capped by the public record if hidden."""
        if self.role in (Role.MERLIN, Role.MORGANA, Role.ASSASSIN):
            return self.public[p]
        return self.susp[p]

    def on_vote(self, approvals: Sequence[int], approved: bool) -> None:
        if approved:
            for p in PLAYERS:
                if p not in approvals:
                    self.bump(p, self.gain)

    def on_mission(self, team: Sequence[int], failed: bool) -> None:
        for p in team:
            self.bump(p, 2 * self.gain if failed else -self.gain)

    def ranked(self, rng: random.Random, candidates=None) -> list[int]:
        """Most suspicious first; ties broken randomly."""
        pool = [p for p in (candidates if candidates is not None else self.susp) if p in self.susp]
        keys = {p: rng.random() for p in pool}
        return sorted(pool, key=lambda p: (-self.susp[p], keys[p]))

    def snapshot(self) -> dict[int, float]:
        return dict(self.susp)


@dataclass
class _Agent:
    seat: int
    role: Role
    persona: PersonaParams
    beliefs: _Beliefs
    claimed: bool = False
    accusations: int = 0

    @property
    def evil(self) -> bool:
        return self.role.alignment is Alignment.EVIL


@dataclass
class SimStats:
    """Side information that is not part of the session document."""

    accusations: dict[int, int] = field(default_factory=dict)
    trace_mentions: list[int] = field(default_factory=list)
    utterance_count: int = 0


def _poisson(rng: random.Random, lam: float) -> int:
    if lam <= 0:
        return 0
    limit, k, prod = math.exp(-lam), 0, rng.random()
    while prod > limit:
        k += 1
        prod *= rng.random()
    return k


class _Game:
    def __init__(self, config: SimConfig, index: int):
        self.cfg = config
        self.rng = random.Random(f"{config.seed}/{index}")
        rng = self.rng
        roles = [Role.MERLIN, Role.PERCIVAL, Role.LOYAL, Role.LOYAL, Role.MORGANA, Role.ASSASSIN]
        rng.shuffle(roles)
        self.assignment = RoleAssignment(tuple(roles))
        self.mode = Mode.OBSERVER if index < config.num_observer_sessions else Mode.PARTICIPANT
        self.seat = rng.choice(PLAYERS)
        self.agents: dict[int, _Agent] = {}
        for p in PLAYERS:
            if self.mode is Mode.PARTICIPANT and p == self.seat:
                persona = config.subject_persona
            else:
                persona = rng.choice(config.opponent_pool)
            self.agents[p] = _Agent(p, self.assignment[p], persona, _Beliefs(p, self.assignment, persona.suspicion_gain))
        # the subject always reasons with their own persona, even when only watching
        self.author = _Beliefs(self.seat, self.assignment, config.subject_persona.suspicion_gain)
        self.stats = SimStats(accusations={p: 0 for p in PLAYERS})
        self.swings: list[tuple[float, int, int, int]] = []  # (swing, mission, round, player)
        self.last_failed_team: tuple[int, ...] = ()
        self.state = game.new_game(self.assignment, rng.choice(PLAYERS))

    # -- decisions --------------------------------------------------------------

    def propose(self, leader: int, size: int) -> tuple[int, ...]:
        a = self.agents[leader]
        rng = self.rng
        others = [p for p in PLAYERS if p != leader]
        if a.evil:
            goods = [p for p in others if self.assignment[p].alignment is Alignment.GOOD]
            picks = list(reversed(a.beliefs.ranked(rng, goods)))[: size - 1]
        elif a.role is Role.MERLIN and rng.random() < 0.8:
            goods = [p for p in others if a.beliefs.susp[p] < 1.0]
            rng.shuffle(goods)
            picks = goods[: size - 1]
        else:
            picks = list(reversed(a.beliefs.ranked(rng, others)))[: size - 1]
        return tuple(sorted([leader, *picks]))

    def vote(self, voter: int, leader: int, team: Sequence[int]) -> bool:
        a = self.agents[voter]
        rng = self.rng
        forced = self.state.consecutive_rejections >= 4
        evil_on_team = any(self.assignment[p].alignment is Alignment.EVIL for p in team)
        if a.evil:
            if evil_on_team:
                return True
            return not forced and a.persona.deception_style is DeceptionStyle.MIMIC and rng.random() < 0.3
        if forced or voter == leader:
            return True
        if a.role is Role.MERLIN:
            return not evil_on_team if rng.random() < 0.85 else evil_on_team
        worst = max(a.beliefs.susp[p] for p in team if p != voter) if len(team) > 1 else 0.0
        return worst < 0.6

    def mission_votes(self, team: Sequence[int]) -> dict[int, MissionVote]:
        votes = {}
        failed = False
        for p in team:
            if self.agents[p].evil and not failed and self.rng.random() < self.cfg.evil_fail_probability:
                votes[p] = MissionVote.FAIL
                failed = True
            else:
                votes[p] = MissionVote.SUCCESS
        return votes

    def knife(self, merlin_hints: Mapping[int, int]) -> int:
        goods = [p for p in PLAYERS if self.assignment[p].alignment is Alignment.GOOD]
        if self.rng.random() < 0.55:
            return max(goods, key=lambda p: (merlin_hints.get(p, 0), -p))
        return self.rng.choice(goods)

    # -- speech -----------------------------------------------------------------

    def speak(self, speaker: int, leader: int, team: Sequence[int], accused: list[int]) -> dict:
        a = self.agents[speaker]
        rng = self.rng
        tb = _TextBuilder()
        n = a.persona.verbosity
        if a.evil and a.persona.deception_style is DeceptionStyle.QUIET:
            n = 1
        if speaker == leader:
            tb.add(T_PROPOSE, team=team)
            n -= 1
        if self.last_failed_team and rng.random() < 0.3 and n > 0:
            tb.add(T_FAILED, team=self.last_failed_team)
            n -= 1
        if (
            n > 0
            and not a.claimed
            and a.role in (Role.PERCIVAL, Role.MORGANA)
            and rng.random() < a.persona.claim_propensity
        ):
            if a.role is Role.PERCIVAL:
                pair = [p for p, _ in game.visible_info(self.assignment, speaker)]
            else:
                pair = rng.sample([p for p in PLAYERS if p != speaker and not self.agents[p].evil], 2)
            tb.add(T_CLAIM, pair=pair)
            a.claimed = True
            n -= 1
        used: set[str] = set()
        for _ in range(max(n, 0)):
            kind = self._opinion(a, team, accused, used)
            used.add(kind[0])
            tb.add(kind[1], **kind[2])
        if tb.empty:
            tb.add(T_PASS)
        return {"speaker": speaker, **tb.annotated()}

    def _opinion(self, a: _Agent, team, accused, used):
        rng = self.rng
        order = a.beliefs.ranked(rng)
        if self.mode is Mode.PARTICIPANT and a.seat == self.seat and "aloud" not in used and rng.random() < 0.08:
            # the subject sometimes voices private reasoning in their trace wording
            open_ = [p for p in order if p not in a.beliefs.fixed] or order
            if rng.random() < 0.5:
                return ("aloud", TR_SUSPECT, {"p": [open_[0]]})
            return ("aloud", TR_GOOD, {"p": [order[-1]]})
        if a.evil:
            goods = [p for p in order if not self.agents[p].evil]
            style = a.persona.deception_style
            if style is DeceptionStyle.AGGRESSIVE and "accuse" not in used:
                a.accusations += 1
                accused.append(goods[0])
                return ("accuse", T_ACCUSE_HARD, {"p": [goods[0]]})
            if style is DeceptionStyle.MIMIC and accused and "accuse" not in used:
                target = next(
                    (
                        p
                        for p in reversed(accused)
                        if p != a.seat
                        and not self.agents[p].evil
                        and a.beliefs.cover(p) >= a.persona.accusation_threshold
                    ),
                    None,
                )
                if target is not None:
                    a.accusations += 1
                    return ("accuse", T_ECHO, {"p": [target]})
            order = goods + [p for p in order if p not in goods]
        top = order[0]
        if "accuse" not in used and a.beliefs.cover(top) >= a.persona.accusation_threshold and not (
            a.evil and self.agents[top].evil
        ):
            a.accusations += 1
            accused.append(top)
            return ("accuse", T_ACCUSE, {"p": [top]})
        choice = rng.random()
        if "team" not in used and choice < 0.45:
            worst = max((a.beliefs.susp[p] for p in team if p != a.seat), default=0.0)
            return ("team", T_TEAM_OK if worst < 0.6 else T_TEAM_BAD, {"team": team})
        if "trust" not in used and choice < 0.8:
            return ("trust", T_TRUST, {"p": [order[-1]]})
        return ("filler", T_FILLER, {})

    # -- subject-authored texts ---------------------------------------------------

    def trace(self, team: Sequence[int], approve: bool) -> tuple[dict, int]:
        rng = self.rng
        b = self.author
        role = self.assignment[self.seat]
        tb = _TextBuilder()
        k = _poisson(rng, self.cfg.subject_persona.trace_mention_rate)
        order = b.ranked(rng)
        options = ["suspect", "good", "team"]
        if role.alignment is Alignment.EVIL:
            options += ["mate", "merlin"]
        for i in range(k):
            kind = options[i % len(options)] if i < len(options) else rng.choice(options)
            if kind == "suspect":
                pick = [p for p in order if p not in b.fixed] or order
                tb.add(TR_SUSPECT, p=[pick[min(i // len(options), len(pick) - 1)]])
            elif kind == "good":
                tb.add(TR_GOOD, p=[order[-1 - min(i // len(options), len(order) - 1)]])
            elif kind == "team":
                tb.add(TR_TEAM_YES if approve else TR_TEAM_NO, team=team)
            elif kind == "mate":
                mate = next(p for p, _ in game.visible_info(self.assignment, self.seat))
                tb.add(TR_MATE, p=[mate])
            else:
                goods = [p for p in PLAYERS if p != self.seat and self.assignment[p].alignment is Alignment.GOOD]
                tb.add(TR_MERLIN, p=[rng.choice(goods)])
        if tb.empty:
            tb.add(TR_WATCH)
        return tb.annotated(), len(tb.spans)

    def reflection(self) -> dict:
        rng = self.rng
        tb = _TextBuilder()
        n = rng.choice((2, 3))
        picked = sorted(sorted(self.swings, key=lambda s: (-s[0], s[1], s[2]))[:n], key=lambda s: (s[1], s[2]))
        for _, m, r, p in picked:
            tb.add(RF_SWING, when=_zh_when(m, r), when_en=f"mission {m} round {r}", p=[p])
        tb.add(RF_EVIL, pair=self.assignment.evil_players())
        return tb.annotated()

    # -- main loop ----------------------------------------------------------------

    def play(self) -> dict:
        rng = self.rng
        missions: list[dict] = []
        merlin_hints: dict[int, int] = {}
        while self.state.phase is not Phase.FINISHED:
            m = self.state.mission_index
            block = {"index": m, "rounds": [], "result": None}
            missions.append(block)
            r = 0
            while self.state.phase is not Phase.FINISHED and self.state.mission_index == m:
                r += 1
                before = self.author.snapshot()
                leader = self.state.leader
                size = game.required_team_size(m)
                team = self.propose(leader, size)
                events: list[dict] = [{"type": "proposal", "leader": leader, "team": list(team), "final": False}]
                self.state = game.propose_team(self.state, team)
                accused: list[int] = []
                utterances = []
                for offset in range(6):
                    speaker = (leader - 1 + offset) % 6 + 1
                    utterances.append(self.speak(speaker, leader, team, accused))
                self.stats.utterance_count += len(utterances)
                subject_approves = self.vote(self.seat, leader, team)
                if rng.random() < self.cfg.timeout_probability:
                    events.append({"type": "timeout", "leader": leader})
                    self.state = game.apply_proposal_timeout(self.state)
                else:
                    events.append({"type": "proposal", "leader": leader, "team": list(team), "final": True})
                    approvals = [p for p in PLAYERS if self.vote(p, leader, team)]
                    subject_approves = self.seat in approvals
                    self.state = game.apply_team_vote(self.state, team, approvals)
                    approved = self.state.phase is Phase.MISSION_VOTING
                    events.append({"type": "team_vote", "approvals": approvals, "approved": approved})
                    for p in PLAYERS:
                        if p not in approvals and any(self.assignment[q].alignment is Alignment.EVIL for q in team):
                            merlin_hints[p] = merlin_hints.get(p, 0) + 1
                    for a in self.agents.values():
                        a.beliefs.on_vote(approvals, approved)
                    self.author.on_vote(approvals, approved)
                    if approved:
                        votes = self.mission_votes(team)
                        bad = sum(v is MissionVote.FAIL for v in votes.values())
                        tally = {"good": len(team) - bad, "bad": bad}
                        events.append({"type": "mission_tally", **tally})
                        block["result"] = tally
                        self.state = game.apply_mission_votes(self.state, votes)
                        for a in self.agents.values():
                            a.beliefs.on_mission(team, bad > 0)
                        self.author.on_mission(team, bad > 0)
                        self.last_failed_team = team if bad else ()
                        if self.state.phase is Phase.ASSASSINATION:
                            target = self.knife(merlin_hints)
                            events.append({"type": "assassination", "target": target, "early": False})
                            self.state = game.assassinate(self.state, target)
                trace, mentions = self.trace(team, subject_approves)
                self.stats.trace_mentions.append(mentions)
                after = self.author.snapshot()
                deltas = {p: abs(after[p] - before[p]) for p in after}
                mover = max(sorted(deltas), key=lambda p: deltas[p])
                self.swings.append((sum(deltas.values()), m, r, mover))
                block["rounds"].append({"utterances": utterances, "events": events, "trace": trace})
        for p, a in self.agents.items():
            self.stats.accusations[p] = a.accusations
        outcome = self.state.outcome
        return {
            "mode": self.mode.value,
            "subject": self.seat,
            "observed_player": self.seat if self.mode is Mode.OBSERVER else None,
            "assignment": {str(p): r.value for p, r in self.assignment.as_dict().items()},
            "missions": missions,
            "reflection": self.reflection(),
            "outcome": {"winner": outcome.winner.value, "reason": outcome.reason.value},
        }


def simulate_with_stats(config: SimConfig, index: int) -> tuple[Session, SimStats]:
    config.validate()
    if not 0 <= index < config.total:
        raise ConfigError(f"session index {index} outside 0..{config.total - 1}")
    g = _Game(config, index)
    doc = g.play()
    doc = {"id": f"sim-{config.seed}-{index:03d}", **doc}
    return session_from_dict(doc), g.stats


def simulate_session(config: SimConfig, index: int) -> Session:
    return simulate_with_stats(config, index)[0]


@dataclass(frozen=True)
class Corpus:
    observer: tuple[Session, ...]
    participant: tuple[Session, ...]

    @property
    def sessions(self) -> tuple[Session, ...]:
        return self.observer + self.participant


def generate_corpus(config: SimConfig) -> Corpus:
    config.validate()
    sessions = [simulate_session(config, i) for i in range(config.total)]
    k = config.num_observer_sessions
    return Corpus(tuple(sessions[:k]), tuple(sessions[k:]))
