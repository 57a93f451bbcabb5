"""Deterministic text rendering of sessions for prompts."""

from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .errors import OutOfRange
from .game import PLAYERS, Alignment, Role, visible_info
from .masking import relabel
from .session import (
    SYSTEM,
    AnnotatedText,
    Assassination,
    Event,
    MissionTally,
    Proposal,
    Session,
    TeamVote,
    Timeout,
    Utterance,
)


class Perspective(str, Enum):
    FIRST = "first"
    THIRD = "third"


ROLE_NAMES = {
    "zh": {
        Role.MERLIN: "梅林",
        Role.PERCIVAL: "派西维尔",
        Role.LOYAL: "忠臣",
        Role.MORGANA: "莫甘娜",
        Role.ASSASSIN: "刺客",
    },
    "en": {
        Role.MERLIN: "Merlin",
        Role.PERCIVAL: "Percival",
        Role.LOYAL: "Loyal Servant",
        Role.MORGANA: "Morgana",
        Role.ASSASSIN: "Assassin",
    },
}

_ZH_ORDINAL = "一二三四五"
_EN_ORDINAL = ("first", "second", "third", "fourth", "fifth")


@dataclass(frozen=True)
class RenderOptions:
    include_traces: bool = True
    perspective: Perspective = Perspective.THIRD
    reveal_subject_role: bool = False
    up_to: tuple[int, int] | None = None
    start: tuple[int, int] | None = None
    permutation: tuple[int, ...] | None = None
    reveal_final_roles: bool = False
    include_assassination: bool = True
    lang: str = "zh"


def anonymization_permutation(seed: int | str) -> tuple[int, ...]:
    """Seeded bijection on 1..6; ``perm[p - 1]`` is the label shown for player ``p``."""
    ids = list(PLAYERS)
    random.Random(seed).shuffle(ids)
    return tuple(ids)


def invert(permutation: Sequence[int]) -> tuple[int, ...]:
    inv = [0] * 6
    for true_id, shown in enumerate(permutation, start=1):
        inv[shown - 1] = true_id
    return tuple(inv)


class _Renderer:
    def __init__(self, session: Session, opts: RenderOptions):
        if opts.lang not in ROLE_NAMES:
            raise ValueError(f"unsupported language {opts.lang!r}")
        self.s = session
        self.o = opts
        self.perm = opts.permutation or tuple(PLAYERS)
        self.zh = opts.lang == "zh"

    def pid(self, p: int) -> int:
        return self.perm[p - 1]

    def ids(self, players) -> list[int]:
        return sorted(self.pid(p) for p in players)

    def join(self, players) -> str:
        return ",".join(str(p) for p in self.ids(players))

    def en_join(self, players) -> str:
        ids = [str(p) for p in self.ids(players)]
        return ids[0] if len(ids) == 1 else ", ".join(ids[:-1]) + " and " + ids[-1]

    def role(self, r: Role) -> str:
        return ROLE_NAMES[self.o.lang][r]

    def speaker(self, speaker) -> str:
        if speaker == SYSTEM:
            return "[系统消息]" if self.zh else "[System]"
        n = self.pid(speaker)
        if self.o.perspective is Perspective.FIRST and speaker == self.s.subject:
            return f"[我（{n}号玩家）]" if self.zh else f"[Me (Player {n})]"
        return f"[{n}号玩家]" if self.zh else f"[Player {n}]"

    def text(self, body: AnnotatedText | Utterance) -> str:
        if isinstance(body, Utterance):
            body = body.annotated
        if self.o.permutation is not None:
            return relabel(body, self.perm).text
        if not self.zh and body.translation:
            return body.translation
        return body.text

    def event(self, ev: Event, mission: int) -> str:
        sysl = self.speaker(SYSTEM)
        if isinstance(ev, Proposal):
            which_zh, which_en = ("最终", "finally") if ev.final else ("初步", "initially")
            if self.zh:
                return f"{sysl} {self.pid(ev.leader)}号玩家是队长，他{which_zh}选择的队伍是:{self.join(ev.team)}。"
            return (
                f"{sysl} Player {self.pid(ev.leader)} is the captain, and the team {which_en} "
                f"selected is: {', '.join(map(str, self.ids(ev.team)))}."
            )
        if isinstance(ev, TeamVote):
            rejecters = [p for p in PLAYERS if p not in ev.approvals]
            if self.zh:
                parts = []
                if ev.approvals:
                    parts.append(f"{self.join(ev.approvals)}号玩家同意组队")
                if rejecters:
                    parts.append(f"{self.join(rejecters)}号玩家反对组队")
                parts.append("组队成功" if ev.approved else "组队失败")
                return f"{sysl} " + "，".join(parts) + "。"
            parts = []
            if ev.approvals:
                parts.append(f"Players {self.en_join(ev.approvals)} agree to form the team")
            if rejecters:
                parts.append(f"Players {self.en_join(rejecters)} oppose it")
            parts.append("the team formation is successful" if ev.approved else "the team formation fails")
            return f"{sysl} " + "; ".join(parts) + "."
        if isinstance(ev, Timeout):
            if self.zh:
                return f"{sysl} {self.pid(ev.leader)}号玩家超时未最终确认组队。"
            return f"{sysl} Player {self.pid(ev.leader)} failed to confirm the team within the time limit."
        if isinstance(ev, MissionTally):
            ok = ev.bad == 0
            if self.zh:
                verdict = "成功" if ok else "失败"
                return f"{sysl} 第{_ZH_ORDINAL[mission - 1]}局任务{verdict}，有{ev.good}张好票，{ev.bad}张坏票。"
            verdict = "is successful" if ok else "fails"
            good = f"{ev.good} good vote{'s' if ev.good != 1 else ''}"
            bad = f"{ev.bad} bad vote{'s' if ev.bad != 1 else ''}"
            return f"{sysl} The {_EN_ORDINAL[mission - 1]} mission {verdict}, with {good} and {bad}."
        if isinstance(ev, Assassination):
            t = self.pid(ev.target)
            if self.zh:
                return f"{sysl} {'红方提前刀人，' if ev.early else ''}刺客刺杀{t}号玩家。"
            return f"{sysl} {'Evil knifes early: ' if ev.early else ''}the Assassin targets Player {t}."
        raise TypeError(ev)

    def subject_info(self) -> str:
        s = self.s.subject
        n = self.pid(s)
        role = self.s.assignment[s]
        seen = sorted(visible_info(self.s.assignment, s))
        first = self.o.perspective is Perspective.FIRST
        if self.zh:
            head = "[我的信息] " if first else "[玩家信息] "
            who = f"我是{n}号玩家，身份是{self.role(role)}。" if first else f"{n}号玩家的身份是{self.role(role)}。"
            extra = ""
            if role is Role.MERLIN:
                extra = f"看到的坏人是{self.join(p for p, _ in seen)}号玩家。"
            elif role is Role.PERCIVAL:
                extra = f"看到的拇指（梅林与莫甘娜，无法区分）是{self.join(p for p, _ in seen)}号玩家。"
            elif role in (Role.MORGANA, Role.ASSASSIN):
                mate = seen[0][0]
                extra = f"队友{self.role(self.s.assignment[mate])}是{self.pid(mate)}号玩家。"
            return head + who + extra
        head = "[My Info] " if first else "[Subject Info] "
        who = f"I am Player {n}, the {self.role(role)}." if first else f"Player {n} is the {self.role(role)}."
        pronoun = "My" if first else "Their"
        extra = ""
        if role is Role.MERLIN:
            extra = f" {pronoun} view shows Evil players: {self.en_join(p for p, _ in seen)}."
        elif role is Role.PERCIVAL:
            extra = f" {pronoun} thumbs (Merlin and Morgana, indistinguishable): {self.en_join(p for p, _ in seen)}."
        elif role in (Role.MORGANA, Role.ASSASSIN):
            mate = seen[0][0]
            extra = f" {pronoun} teammate {self.role(self.s.assignment[mate])} is Player {self.pid(mate)}."
        return head + who + extra

    def final_info(self) -> list[str]:
        lines = ["[最终身份]" if self.zh else "[Final User Info]"]
        for shown in PLAYERS:
            true_id = invert(self.perm)[shown - 1]
            r = self.role(self.s.assignment[true_id])
            lines.append(f"{shown}号玩家：{r}" if self.zh else f"Player {shown}: {r}")
        winner = self.s.outcome.winner
        if self.zh:
            lines.append("[游戏结果] " + ("红方阵营获胜。" if winner is Alignment.EVIL else "蓝方阵营获胜。"))
        else:
            lines.append("[Game Result] " + ("The Red (Evil) team wins." if winner is Alignment.EVIL else "The Blue (Good) team wins."))
        return lines

    def render(self) -> str:
        o = self.o
        positions = [pos for pos, _ in self.s.rounds()]
        for bound in (o.up_to, o.start):
            if bound is not None and bound not in positions:
                raise OutOfRange(f"round {bound} not in session {self.s.id or '?'}")
        lines: list[str] = []
        if o.reveal_subject_role:
            lines.append(self.subject_info())
        current_mission = None
        for (m, r), rnd in self.s.rounds():
            if o.start is not None and (m, r) < o.start:
                continue
            if o.up_to is not None and (m, r) > o.up_to:
                break
            if m != current_mission:
                lines.append(f"== 第{m}个任务 ==" if self.zh else f"== Mission {m} ==")
                current_mission = m
            lines.append(f"-- 第{r}轮 --" if self.zh else f"-- Round {r} --")
            events = list(rnd.events)
            split = next((i + 1 for i, e in enumerate(events) if isinstance(e, Proposal)), 0)
            for ev in events[:split]:
                lines.append(self.event(ev, m))
            for u in rnd.utterances:
                lines.append(f"{self.speaker(u.speaker)} {self.text(u)}")
            for ev in events[split:]:
                if isinstance(ev, Assassination) and not o.include_assassination:
                    continue
                lines.append(self.event(ev, m))
            if o.include_traces and rnd.trace is not None:
                lines.append(f"{'[策略]' if self.zh else '[Strategy]'} {self.text(rnd.trace)}")
        if o.reveal_final_roles:
            lines.extend(self.final_info())
        return "\n".join(lines)


def render_transcript(session: Session, opts: RenderOptions = RenderOptions()) -> str:
    return _Renderer(session, opts).render()


def subject_info_line(session: Session, opts: RenderOptions) -> str:
    return _Renderer(session, opts).subject_info()
