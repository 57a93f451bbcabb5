"""Two-stage protocol: profile accumulation, then task construction and execution."""

from __future__ import annotations

import json
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Sequence

from .errors import BackendError, ParseError, ProfileBuildError, ProtocolError
from .masking import mask_text, segment
from .parsers import (
    RankedPrediction,
    ReplacementMap,
    RoleMap,
    parse_ranked,
    parse_replacements,
    parse_roles,
    split_sections,
)
from .prompts import NONE_TEXT, fill, load_template
from .render import Perspective, RenderOptions, anonymization_permutation, render_transcript
from .session import Mode, Session


class TaskKind(str, Enum):
    PLAYER_ID = "player_id"
    REFLECTION = "reflection"
    TRACE = "trace"
    ROLE = "role"


class RoleMode(str, Enum):
    A = "A"
    B = "B"
    C = "C"
    D = "D"

    @property
    def first_person(self) -> bool:
        return self in (RoleMode.A, RoleMode.B)

    @property
    def traces(self) -> bool:
        return self is RoleMode.A

    @property
    def role_known(self) -> bool:
        return self is not RoleMode.D


class ReflectionCondition(str, Enum):
    FULL = "full"
    NO_TRACES = "no_traces"


@dataclass(frozen=True)
class StrategyProfile:
    text: str
    source_sessions: tuple[str, ...]
    backend_id: str
    accumulation_steps: int

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "source_sessions": list(self.source_sessions),
            "backend_id": self.backend_id,
            "accumulation_steps": self.accumulation_steps,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "StrategyProfile":
        return cls(raw["text"], tuple(raw["source_sessions"]), raw["backend_id"], raw["accumulation_steps"])


@dataclass(frozen=True)
class ConditionFlags:
    condition: str
    traces_included: bool
    prior_trace: bool | None = None
    mode: RoleMode | None = None
    round_index: int | None = None
    permutation: tuple[int, ...] | None = None


@dataclass(frozen=True)
class RollingSummary:
    text: str
    covers_through: tuple[int, int] | None = None


@dataclass(frozen=True)
class TaskInstance:
    instance_id: str
    kind: TaskKind
    session_id: str
    system: str
    user_template: str
    target: Any
    flags: ConditionFlags
    lang: str = "zh"
    position: tuple[int, int] | None = None
    scored: bool = True

    @property
    def dynamic(self) -> bool:
        return self.kind in (TaskKind.TRACE, TaskKind.ROLE)

    @property
    def stream(self) -> str:
        """Instances sharing a stream run in order and thread one rolling summary."""
        return f"{self.session_id}__{self.kind.value}__{self.flags.condition}"

    def prompt(self, summary: str | None = None) -> tuple[str, str]:
        user = self.user_template
        if self.dynamic:
            text = summary if summary is not None else NONE_TEXT[self.lang]
            user = fill(user, data_conc=f"<summary>\n{text}\n</summary>")
        return self.system, user


def _game_data(body: str) -> str:
    return f"<game_data>\n{body}\n</game_data>"


_HEADINGS = {
    "zh": {"review": "[复盘]", "prior": "[上一轮策略]", "profile": "此前你已经帮我总结了我的推理风格和人物特点："},
    "en": {
        "review": "[Review]",
        "prior": "[Previous Round Strategy]",
        "profile": "Previously, you have summarized my reasoning style and persona:",
    },
}


# --- Stage 1 ---------------------------------------------------------------------------


def profile_segment(session: Session, lang: str = "zh") -> str:
    """Observer-session text fed to one accumulation step: transcript, traces and reflection."""
    opts = RenderOptions(
        include_traces=True, perspective=Perspective.FIRST, reveal_subject_role=True, lang=lang
    )
    reflection = session.reflection.text
    if lang == "en" and session.reflection.translation:
        reflection = session.reflection.translation
    return _game_data(render_transcript(session, opts)) + f"\n{_HEADINGS[lang]['review']} {reflection}"


def build_profile(backend, observer_sessions: Sequence[Session], lang: str = "zh") -> StrategyProfile:
    if not observer_sessions:
        raise ProtocolError("profile construction needs at least one observer session")
    for s in observer_sessions:
        if s.mode is not Mode.OBSERVER:
            raise ProtocolError(f"session {s.id} is not an observer session")
    tpl = load_template("profile", lang)
    summary = NONE_TEXT[lang]
    for step, session in enumerate(observer_sessions, start=1):
        system, user = tpl.fill(REFLECTION_SEGMENT=profile_segment(session, lang), ACCUMULATED_SUMMARY=summary)
        try:
            summary = backend.complete(system, user)
        except BackendError as e:
            raise ProfileBuildError(step, e) from e
    return StrategyProfile(
        text=summary,
        source_sessions=tuple(s.id for s in observer_sessions),
        backend_id=getattr(backend, "backend_id", type(backend).__name__),
        accumulation_steps=len(observer_sessions),
    )


# --- Stage 2 builders --------------------------------------------------------------------


def _require_participant(session: Session) -> None:
    if session.mode is not Mode.PARTICIPANT:
        raise ProtocolError(f"session {session.id} is not a participant session")


def build_player_id_task(
    profile: StrategyProfile, session: Session, seed: int | str, lang: str = "zh", permutation=None
) -> TaskInstance:
    _require_participant(session)
    if not session.traces():
        raise ProtocolError(f"session {session.id} has no strategy traces; player identification needs them")
    perm = tuple(permutation) if permutation is not None else anonymization_permutation(f"{seed}/{session.id}")
    if sorted(perm) != [1, 2, 3, 4, 5, 6]:
        raise ProtocolError(f"permutation {perm} is not a bijection on 1..6")
    opts = RenderOptions(
        include_traces=True,
        perspective=Perspective.THIRD,
        reveal_subject_role=False,
        permutation=perm,
        include_assassination=False,
        lang=lang,
    )
    system, user = load_template("player_id", lang).fill(
        final_summary=profile.text, new_game_prompt=_game_data(render_transcript(session, opts))
    )
    return TaskInstance(
        instance_id=f"{session.id}/player_id/{seed}",
        kind=TaskKind.PLAYER_ID,
        session_id=session.id,
        system=system,
        user_template=user,
        target=perm[session.subject - 1],
        flags=ConditionFlags(condition=str(seed), traces_included=True, permutation=perm),
        lang=lang,
    )


def build_reflection_tasks(
    profile: StrategyProfile, session: Session, condition: ReflectionCondition | str, lang: str = "zh"
) -> list[TaskInstance]:
    condition = ReflectionCondition(condition)
    with_traces = condition is ReflectionCondition.FULL
    opts = RenderOptions(
        include_traces=with_traces,
        perspective=Perspective.FIRST,
        reveal_subject_role=True,
        reveal_final_roles=True,
        lang=lang,
    )
    game_data = _game_data(render_transcript(session, opts))
    tpl = load_template("reflection", lang)
    out = []
    for k, seg in enumerate(segment(session.reflection), start=1):
        masked = mask_text(seg)
        system, user = tpl.fill(
            final_summary=profile.text, new_game_prompt=game_data, masked_msg=f"<review>{masked.template}</review>"
        )
        out.append(
            TaskInstance(
                instance_id=f"{session.id}/reflection/{condition.value}/{k}",
                kind=TaskKind.REFLECTION,
                session_id=session.id,
                system=system,
                user_template=user,
                target=ReplacementMap(dict(masked.answers)),
                flags=ConditionFlags(condition=condition.value, traces_included=with_traces, round_index=k),
                lang=lang,
            )
        )
    return out


def build_trace_tasks(
    profile: StrategyProfile, session: Session, prior_trace: bool, lang: str = "zh"
) -> list[TaskInstance]:
    traces = session.traces()
    if not traces:
        raise ProtocolError(f"session {session.id} has no strategy traces")
    tpl = load_template("trace", lang)
    condition = "prior" if prior_trace else "base"
    out = []
    previous = None
    for k, ((m, r), trace) in enumerate(traces, start=1):
        opts = RenderOptions(
            include_traces=False,
            perspective=Perspective.FIRST,
            reveal_subject_role=True,
            start=(m, r),
            up_to=(m, r),
            lang=lang,
        )
        masked = mask_text(trace)
        body = render_transcript(session, opts)
        body += f"\n<masked_strategy>\n{masked.template}\n</masked_strategy>"
        if prior_trace and previous is not None:
            body += f"\n{_HEADINGS[lang]['prior']} {previous.text}"
        system, user = tpl.system, fill(tpl.user, final_summary=profile.text, new_game_prompt=_game_data(body))
        out.append(
            TaskInstance(
                instance_id=f"{session.id}/trace/{condition}/m{m}r{r}",
                kind=TaskKind.TRACE,
                session_id=session.id,
                system=system,
                user_template=user,
                target=ReplacementMap(dict(masked.answers)),
                flags=ConditionFlags(
                    condition=condition, traces_included=False, prior_trace=prior_trace, round_index=k
                ),
                lang=lang,
                position=(m, r),
                scored=bool(masked.answers),
            )
        )
        previous = trace
    return out


def build_role_tasks(
    profile: StrategyProfile | None, session: Session, mode: RoleMode | str, lang: str = "zh"
) -> list[TaskInstance]:
    """One instance per mission: the model sees that mission's rounds and the rolling summary."""
    mode = RoleMode(mode)
    tpl = load_template("role", lang)
    out = []
    for k, block in enumerate(session.missions, start=1):
        last = (block.index, len(block.rounds))
        opts = RenderOptions(
            include_traces=mode.traces,
            perspective=Perspective.FIRST if mode.first_person else Perspective.THIRD,
            reveal_subject_role=mode.role_known,
            start=(block.index, 1),
            up_to=last,
            include_assassination=False,
            lang=lang,
        )
        user = fill(tpl.user, new_game_prompt=_game_data(render_transcript(session, opts)))
        if profile is not None:
            user = f"{_HEADINGS[lang]['profile']}\n{profile.text}\n\n{user}"
        out.append(
            TaskInstance(
                instance_id=f"{session.id}/role/{mode.value}/m{block.index}",
                kind=TaskKind.ROLE,
                session_id=session.id,
                system=tpl.system,
                user_template=user,
                target=session.assignment,
                flags=ConditionFlags(condition=mode.value, traces_included=mode.traces, mode=mode, round_index=k),
                lang=lang,
                position=last,
            )
        )
    return out


# --- execution ---------------------------------------------------------------------------

_RETRY_NOTE = {
    "zh": "\n\n注意：上一次输出无法解析（{reason}：{detail}）。请严格按照要求的格式重新输出。",
    "en": "\n\nNote: the previous output could not be parsed ({reason}: {detail}). Reply again in the exact required format.",
}


def parse_response(kind: TaskKind, text: str, *, normalize_digits: bool = False):
    if kind is TaskKind.PLAYER_ID:
        return parse_ranked(text)
    if kind is TaskKind.ROLE:
        return parse_roles(text)
    return parse_replacements(text, normalize_digits=normalize_digits)


@dataclass
class RunRecord:
    instance: TaskInstance
    response: str | None
    prediction: RankedPrediction | ReplacementMap | RoleMap | None
    error: str | None
    attempts: int
    summary: RollingSummary | None = None


class ExchangeLog:
    """Append-only JSONL exchange files, one per stream, keyed by (instance id, attempt)."""

    def __init__(self, directory: str | Path):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def path(self, stream: str) -> Path:
        return self.dir / (re.sub(r"[^A-Za-z0-9_.-]", "_", stream) + ".jsonl")

    def load(self, stream: str) -> dict[tuple[str, int], dict]:
        p = self.path(stream)
        out: dict[tuple[str, int], dict] = {}
        if not p.exists():
            return out
        for line in p.read_text("utf-8").splitlines():
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                # a torn final line from an interrupted run
                continue
            out[(rec["instance_id"], rec["attempt"])] = rec
        return out

    def append(self, stream: str, record: dict) -> None:
        line = json.dumps(record, ensure_ascii=False) + "\n"
        with self._lock, open(self.path(stream), "a", encoding="utf-8") as fh:
            fh.write(line)
            fh.flush()


def _run_stream(
    backend, instances: Sequence[TaskInstance], log: ExchangeLog | None, normalize_digits: bool
) -> list[RunRecord]:
    stream = instances[0].stream
    cached = log.load(stream) if log is not None else {}
    summary: RollingSummary | None = None
    out = []
    for inst in instances:
        system, user = inst.prompt(summary.text if summary else None)
        response = prediction = error = None
        attempts = 0
        for attempt in (1, 2):
            attempts = attempt
            hit = cached.get((inst.instance_id, attempt))
            # cached backend failures are retried so that a rerun can recover from them
            if hit is not None and hit.get("error") is None and hit["system"] == system and hit["user"] == user:
                response, failure = hit["response"], hit.get("error")
            else:
                failure = None
                try:
                    ex = backend.exchange(system, user)
                    response = ex.response
                    record = ex.to_dict()
                except BackendError as e:
                    failure = f"backend:{type(e).__name__}"
                    record = {"system": system, "user": user, "response": None, "detail": str(e)}
                if log is not None:
                    log.append(stream, {"instance_id": inst.instance_id, "attempt": attempt, "error": failure, **record})
            if failure is not None:
                error = failure
                break
            try:
                prediction = parse_response(inst.kind, response, normalize_digits=normalize_digits)
                error = None
                break
            except ParseError as e:
                error = f"parse:{e.reason}"
                user = user + _RETRY_NOTE[inst.lang].format(reason=e.reason, detail=str(e)[:200])
        if inst.dynamic and response is not None:
            content = split_sections(response).content
            if content is not None:
                summary = RollingSummary(content, inst.position)
        out.append(RunRecord(inst, response, prediction, error, attempts, summary))
    return out


def run_protocol(
    backend,
    instances: Iterable[TaskInstance],
    concurrency_limit: int = 1,
    exchange_log: ExchangeLog | None = None,
    normalize_digits: bool = False,
) -> list[RunRecord]:
    """Execute instances. Streams run concurrently; each stream runs strictly in order."""
    if concurrency_limit < 1:
        raise ProtocolError("concurrency limit must be >= 1")
    streams: dict[str, list[TaskInstance]] = {}
    for inst in instances:
        streams.setdefault(inst.stream, []).append(inst)
    groups = list(streams.values())
    with ThreadPoolExecutor(max_workers=concurrency_limit) as pool:
        results = list(pool.map(lambda g: _run_stream(backend, g, exchange_log, normalize_digits), groups))
    return [rec for group in results for rec in group]


def build_tasks(
    profile: StrategyProfile | None,
    sessions: Sequence[Session],
    tasks: Sequence[str],
    *,
    reflection_conditions: Sequence[str] = ("full",),
    trace_conditions: Sequence[str] = ("base",),
    role_modes: Sequence[str] = ("A",),
    seed: int = 0,
    lang: str = "zh",
) -> list[TaskInstance]:
    out: list[TaskInstance] = []
    for s in sessions:
        if s.mode is not Mode.PARTICIPANT:
            continue
        if "player_id" in tasks:
            out.append(build_player_id_task(_need(profile), s, seed, lang))
        if "reflection" in tasks:
            for c in reflection_conditions:
                out.extend(build_reflection_tasks(_need(profile), s, c, lang))
        if "trace" in tasks:
            for c in trace_conditions:
                if c not in ("base", "prior"):
                    raise ProtocolError(f"unknown trace condition {c!r}")
                out.extend(build_trace_tasks(_need(profile), s, c == "prior", lang))
        if "role" in tasks:
            for mode in role_modes:
                out.extend(build_role_tasks(profile, s, mode, lang))
    return out


def _need(profile: StrategyProfile | None) -> StrategyProfile:
    if profile is None:
        raise ProtocolError("this task needs a strategy profile")
    return profile
