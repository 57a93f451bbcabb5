"""Model backends: an HTTP chat-completion client and deterministic local mocks."""

from __future__ import annotations

import hashlib
import os
import random
import re
import threading
import time
from dataclasses import asdict, dataclass, fields
from typing import Any, Iterable, Mapping, Sequence

import httpx

from .errors import BackendTimeout, ConfigError, ExhaustedRetries, HttpStatusError, UnrecognizedPrompt
from .game import PLAYERS, ROLE_COMPOSITION
from .masking import MASK_TOKEN_RE
from .parsers import RankedPrediction, player_label, render_ranked, render_replacements, render_roles
from .prompts import MARKERS, PROFILE_MARKERS
from .render import RenderOptions, render_transcript
from .session import SYSTEM, Session

API_KEY_ENV = "INMIND_API_KEY"
MOCK_CONTENT_CHARS = 2000


@dataclass(frozen=True)
class BackendConfig:
    endpoint_url: str = "http://localhost:8000/v1/chat/completions"
    model_id: str = "default"
    temperature: float = 0.0
    max_output_tokens: int = 2048
    request_timeout: float = 120.0
    max_retries: int = 3
    concurrency_cap: int = 4
    backoff_base: float = 1.0

    def __post_init__(self):
        if self.concurrency_cap < 1:
            raise ConfigError("concurrency_cap must be >= 1")
        if not 0 <= self.max_retries <= 5:
            raise ConfigError("max_retries must be in 0..5")
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        if self.request_timeout <= 0:
            raise ConfigError("request_timeout must be positive")

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "BackendConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known - {"kind", "api_key"}
        if unknown:
            raise ConfigError(f"unknown backend keys {sorted(unknown)}")
        try:
            return cls(**{k: v for k, v in raw.items() if k in known})
        except TypeError as e:
            raise ConfigError(str(e)) from None

    def redacted(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ChatExchange:
    system: str
    user: str
    response: str
    latency: float
    token_counts: dict | None = None
    retries: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


class Backend:
    """Subclasses implement :meth:`_respond`; ``complete`` returns only the text."""

    backend_id = "backend"

    def exchange(self, system: str, user: str) -> ChatExchange:
        if not system or not user:
            raise ValueError("system and user texts must be non-empty")
        t0 = time.perf_counter()
        text, tokens, retries = self._respond(system, user)
        return ChatExchange(system, user, text, time.perf_counter() - t0, tokens, retries)

    def complete(self, system: str, user: str) -> str:
        return self.exchange(system, user).response

    def _respond(self, system: str, user: str) -> tuple[str, dict | None, int]:
        raise NotImplementedError


# --- HTTP ---------------------------------------------------------------------------


class HTTPBackend(Backend):
    """OpenAI-style chat-completion client with bounded concurrency and backoff."""

    RETRYABLE = {408, 409, 425, 429, 500, 502, 503, 504}

    def __init__(self, config: BackendConfig, api_key: str | None = None, client: httpx.Client | None = None):
        self.config = config
        self.backend_id = f"http:{config.model_id}"
        self._key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self._client = client or httpx.Client(timeout=config.request_timeout)
        self._slots = threading.BoundedSemaphore(config.concurrency_cap)

    def _respond(self, system: str, user: str):
        cfg = self.config
        body = {
            "model": cfg.model_id,
            "messages": [{"role": "system", "content": system}, {"role": "user", "content": user}],
            "temperature": cfg.temperature,
            "max_tokens": cfg.max_output_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self._key:
            headers["Authorization"] = f"Bearer {self._key}"
        last: Exception | None = None
        timeouts = 0
        for attempt in range(cfg.max_retries + 1):
            if attempt:
                time.sleep(cfg.backoff_base * 2 ** (attempt - 1))
            try:
                with self._slots:
                    resp = self._client.post(cfg.endpoint_url, json=body, headers=headers, timeout=cfg.request_timeout)
            except httpx.TimeoutException as e:
                last = BackendTimeout(f"request timed out after {cfg.request_timeout}s")
                last.__cause__ = e
                timeouts += 1
                continue
            except httpx.TransportError as e:
                last = e
                continue
            if resp.status_code in self.RETRYABLE:
                last = HttpStatusError(resp.status_code, resp.text)
                continue
            if resp.status_code >= 400:
                raise HttpStatusError(resp.status_code, resp.text)
            try:
                payload = resp.json()
                text = payload["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as e:
                raise HttpStatusError(resp.status_code, f"unexpected response shape: {e}") from None
            return text, payload.get("usage"), attempt
        if timeouts == cfg.max_retries + 1:
            raise last
        raise ExhaustedRetries(f"gave up after {cfg.max_retries + 1} attempts: {last}") from last

    def close(self) -> None:
        self._client.close()


# --- prompt inspection shared by mocks --------------------------------------------------

_GAME_DATA_RE = re.compile(r"<game_data>\n(.*?)\n</game_data>", re.DOTALL)
_REVIEW_RE = re.compile(r"<review>(.*?)</review>", re.DOTALL)
_MASKED_RE = re.compile(r"<masked_strategy>\n(.*?)\n</masked_strategy>", re.DOTALL)
_SUMMARY_RE = re.compile(r"<summary>\n(.*?)\n</summary>", re.DOTALL)


def detect_task(system: str, user: str) -> str:
    for kind in ("role", "trace"):
        if MARKERS[kind] in system:
            return kind
    if MARKERS["reflection"] in user:
        return "reflection"
    if MARKERS["player_id"] in user:
        return "player_id"
    if any(m in user for m in PROFILE_MARKERS):
        return "profile"
    raise UnrecognizedPrompt("prompt carries no known task markers")


def _lang(system: str) -> str:
    return "zh" if re.search(r"[一-鿿]", system) else "en"


def _first(regex: re.Pattern, text: str) -> str | None:
    m = regex.search(text)
    return m.group(1) if m else None


def _mask_specs(block: str) -> list[tuple[int, int]]:
    seen: dict[int, int] = {}
    for m in MASK_TOKEN_RE.finditer(block):
        seen.setdefault(int(m.group(1)), int(m.group(2)))
    return sorted(seen.items())


def _mock_content(user: str) -> str:
    prior = _first(_SUMMARY_RE, user) or ""
    data = _first(_GAME_DATA_RE, user) or ""
    return (prior + "\n" + data)[-MOCK_CONTENT_CHARS:]


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class EchoBackend(Backend):
    """Returns a short digest of the user text."""

    backend_id = "mock:echo"

    def _respond(self, system, user):
        return f"echo:{_digest(user)[:16]}", None, 0


class RandomBackend(Backend):
    """Uniformly random but well-formed answers; a pure function of (seed, prompt)."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.backend_id = f"mock:random:{seed}"

    def _respond(self, system, user):
        rng = random.Random(_digest(f"{self.seed}\x00{system}\x00{user}"))
        kind = detect_task(system, user)
        lang = _lang(system)
        if kind == "profile":
            return f"profile:{_digest(user)[:16]}", None, 0
        if kind == "player_id":
            picks = rng.sample(PLAYERS, 3)
            pred = RankedPrediction(player_label(picks[0]), tuple(player_label(p) for p in picks))
            return render_ranked(pred), None, 0
        if kind == "role":
            roles = list(ROLE_COMPOSITION.elements())
            rng.shuffle(roles)
            body = render_roles(dict(zip(PLAYERS, roles)), lang)
            return f"=== Content ===\n{_mock_content(user)}\n{body}", None, 0
        block = _first(_REVIEW_RE, user) if kind == "reflection" else _first(_MASKED_RE, user)
        if block is None:
            raise UnrecognizedPrompt(f"{kind} prompt has no masked block")
        rmap = {k: sorted(rng.sample(PLAYERS, n)) for k, n in _mask_specs(block) if 1 <= n <= 6}
        text = render_replacements(rmap)
        if kind == "trace":
            text = f"=== Content ===\n{_mock_content(user)}\n=== Replacements ===\n{text}"
        return text, None, 0


class OracleBackend(Backend):
    """Answers every task perfectly by looking prompts up against corpus ground truth."""

    backend_id = "mock:oracle"

    def __init__(self, sessions: Iterable[Session], langs: Sequence[str] = ("zh", "en")):
        from .protocol import (
            ReflectionCondition,
            RoleMode,
            StrategyProfile,
            build_reflection_tasks,
            build_role_tasks,
            build_trace_tasks,
        )
        from .session import Mode

        self.sessions = [s for s in sessions if s.mode is Mode.PARTICIPANT]
        self._truth: dict[tuple[str, str, str], Any] = {}
        dummy = StrategyProfile("", (), "", 0)
        for s in self.sessions:
            for lang in langs:
                built = []
                for cond in ReflectionCondition:
                    built += build_reflection_tasks(dummy, s, cond, lang)
                for prior in (False, True):
                    built += build_trace_tasks(dummy, s, prior, lang) if s.traces() else []
                for mode in RoleMode:
                    built += build_role_tasks(None, s, mode, lang)
                for inst in built:
                    _, user = inst.prompt()
                    self._truth[self._key(inst.kind.value, user)] = inst.target

    @staticmethod
    def _key(kind: str, user: str) -> tuple[str, str, str]:
        return kind, _first(_GAME_DATA_RE, user) or "", _first(_REVIEW_RE, user) or ""

    def _lookup(self, kind: str, user: str):
        try:
            return self._truth[self._key(kind, user)]
        except KeyError:
            raise UnrecognizedPrompt(f"{kind} prompt does not match any corpus instance") from None

    def _player_id(self, user: str) -> int:
        data = _first(_GAME_DATA_RE, user)
        if data is None:
            raise UnrecognizedPrompt("player identification prompt has no game data block")
        lang = "zh" if "号玩家" in data or "[系统消息]" in data else "en"
        label = re.compile(r"^\[(\d)号玩家\]" if lang == "zh" else r"^\[Player (\d)\]", re.MULTILINE)
        shown = [int(x) for x in label.findall(data)]
        for s in self.sessions:
            speakers = [u.speaker for u in s.utterances() if u.speaker != SYSTEM]
            if len(speakers) != len(shown):
                continue
            perm = self._align(speakers, shown)
            if perm is None:
                continue
            opts = RenderOptions(
                include_traces=True, permutation=perm, include_assassination=False, lang=lang
            )
            if render_transcript(s, opts) == data:
                return perm[s.subject - 1]
        raise UnrecognizedPrompt("no corpus session renders to this game data under any permutation")

    @staticmethod
    def _align(true_ids: Sequence[int], shown: Sequence[int]) -> tuple[int, ...] | None:
        fwd: dict[int, int] = {}
        for t, v in zip(true_ids, shown):
            if fwd.setdefault(t, v) != v:
                return None
        if len(set(fwd.values())) != len(fwd):
            return None
        free = [v for v in PLAYERS if v not in fwd.values()]
        return tuple(fwd[p] if p in fwd else free.pop(0) for p in PLAYERS)

    def _respond(self, system, user):
        kind = detect_task(system, user)
        lang = _lang(system)
        if kind == "profile":
            return f"profile:{_digest(user)[:16]}", None, 0
        if kind == "player_id":
            target = self._player_id(user)
            rest = [p for p in PLAYERS if p != target][:2]
            pred = RankedPrediction(player_label(target), tuple(player_label(p) for p in [target, *rest]))
            return render_ranked(pred), None, 0
        truth = self._lookup(kind, user)
        if kind == "role":
            body = render_roles(truth.as_dict(), lang)
            return f"=== Content ===\n{_mock_content(user)}\n{body}", None, 0
        text = render_replacements(truth)
        if kind == "trace":
            text = f"=== Content ===\n{_mock_content(user)}\n=== Replacements ===\n{text}"
        return text, None, 0


def make_backend(spec: str, *, sessions: Iterable[Session] = (), config: Mapping | None = None) -> Backend:
    """Build a backend from ``mock:oracle``, ``mock:random[:seed]``, ``mock:echo`` or ``http``."""
    if spec == "mock:echo":
        return EchoBackend()
    if spec == "mock:oracle":
        return OracleBackend(sessions)
    if spec.startswith("mock:random"):
        parts = spec.split(":")
        try:
            seed = int(parts[2]) if len(parts) > 2 else 0
        except ValueError:
            raise ConfigError(f"bad random seed in {spec!r}") from None
        return RandomBackend(seed)
    if spec == "http":
        config = config or {}
        return HTTPBackend(BackendConfig.from_dict(config), api_key=config.get("api_key"))
    raise ConfigError(f"unknown backend {spec!r}")


def describe_backend(spec: str, config: Mapping | None = None) -> dict:
    """Manifest entry for a backend; never includes credentials."""
    out: dict[str, Any] = {"spec": spec}
    if spec == "http":
        out["config"] = BackendConfig.from_dict(config or {}).redacted()
    return out


__all__ = [
    "API_KEY_ENV",
    "Backend",
    "BackendConfig",
    "ChatExchange",
    "EchoBackend",
    "HTTPBackend",
    "OracleBackend",
    "RandomBackend",
    "describe_backend",
    "detect_task",
    "make_backend",
]
