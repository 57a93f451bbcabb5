"""Embedding-similarity baseline for player identification.

Each candidate is scored by the cosine between the mean embedding of that
player's utterances and the mean embedding of all strategy traces.
"""

from __future__ import annotations

import hashlib
import json
import math
import subprocess
import threading
from dataclasses import dataclass
from typing import Callable, Mapping, Protocol, Sequence

import numpy as np

from .errors import ConfigError, EmptyInput, LengthMismatch, NoTraces
from .game import PLAYERS
from .session import SYSTEM, Session


class EmbeddingProvider(Protocol):
    name: str
    dimension: int

    def embed(self, text: str) -> np.ndarray: ...


def _is_cjk(ch: str) -> bool:
    return "一" <= ch <= "鿿" or "㐀" <= ch <= "䶿"


def tokenize(text: str) -> list[str]:
    """Whitespace tokens; tokens containing CJK characters become character bigrams."""
    out = []
    for tok in text.split():
        if any(_is_cjk(c) for c in tok):
            if len(tok) == 1:
                out.append(tok)
            out.extend(tok[i : i + 2] for i in range(len(tok) - 1))
        else:
            out.append(tok.lower())
    return out


def _bucket(token: str, dimension: int) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % dimension


class TokenHashProvider:
    """Feature-hashed token counts, L2-normalized. Entries are non-negative."""

    name = "token-hash"

    def __init__(self, dimension: int = 4096):
        if dimension < 1:
            raise ConfigError("dimension must be positive")
        self.dimension = dimension

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dimension)
        for tok in tokenize(text):
            vec[_bucket(tok, self.dimension)] += 1.0
        norm = np.linalg.norm(vec)
        return vec / norm if norm > 0 else vec


class SubprocessProvider:
    """External encoder speaking one JSON object per line over stdin/stdout.

    Request ``{"text": ...}``; response ``{"vector": [...]}``.
    """

    def __init__(self, command: Sequence[str], name: str = "subprocess"):
        self.name = name
        self._proc = subprocess.Popen(
            list(command), stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, encoding="utf-8"
        )
        self._lock = threading.Lock()
        self.dimension = len(self.embed("probe"))

    def embed(self, text: str) -> np.ndarray:
        with self._lock:
            assert self._proc.stdin and self._proc.stdout
            self._proc.stdin.write(json.dumps({"text": text}, ensure_ascii=False) + "\n")
            self._proc.stdin.flush()
            line = self._proc.stdout.readline()
        if not line:
            raise RuntimeError("embedding subprocess closed its output")
        return np.asarray(json.loads(line)["vector"], dtype=float)

    def close(self) -> None:
        self._proc.kill()
        self._proc.wait()


def provider_from_config(cfg: Mapping | None) -> EmbeddingProvider:
    """Build the provider named by the ``baseline.provider`` config key."""
    cfg = cfg or {}
    kind = cfg.get("provider", "token-hash")
    if kind == "token-hash":
        return TokenHashProvider(int(cfg.get("dimension", 4096)))
    if kind == "subprocess":
        cmd = cfg.get("command")
        if not cmd:
            raise ConfigError("baseline.command is required for the subprocess provider")
        return SubprocessProvider(cmd)
    raise ConfigError(f"unknown baseline provider {kind!r}")


def embed_pooled(provider: EmbeddingProvider, texts: Sequence[str]) -> np.ndarray:
    if not texts:
        raise EmptyInput("cannot pool an empty list of texts")
    return np.mean([provider.embed(t) for t in texts], axis=0)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(max(-1.0, min(1.0, np.dot(a, b) / (na * nb))))


@dataclass(frozen=True)
class BaselineRanking:
    scores: dict[int, float]
    ranking: tuple[int, ...]

    @property
    def top1(self) -> int:
        return self.ranking[0]


def rank_players(
    provider: EmbeddingProvider, session: Session, text_of: Callable | None = None
) -> BaselineRanking:
    text_of = text_of or (lambda t: t.text)
    traces = [text_of(t) for _, t in session.traces()]
    if not traces:
        raise NoTraces(f"session {session.id} has no strategy traces")
    trace_vec = embed_pooled(provider, traces)
    by_player: dict[int, list[str]] = {p: [] for p in PLAYERS}
    for u in session.utterances():
        if u.speaker != SYSTEM:
            by_player[u.speaker].append(u.text)
    scores = {}
    for p in PLAYERS:
        score = cosine(embed_pooled(provider, by_player[p]), trace_vec) if by_player[p] else 0.0
        scores[p] = score if math.isfinite(score) else 0.0
    ranking = tuple(sorted(PLAYERS, key=lambda p: (-scores[p], p)))
    return BaselineRanking(scores, ranking)


def bert_match(model_top1s: Sequence[str], baseline_top1s: Sequence[str]) -> float:
    """Fraction of positions where the model's top-1 equals the baseline's top-1."""
    if len(model_top1s) != len(baseline_top1s):
        raise LengthMismatch(f"{len(model_top1s)} model predictions vs {len(baseline_top1s)} baseline")
    if not model_top1s:
        return 0.0
    return sum(a == b for a, b in zip(model_top1s, baseline_top1s)) / len(model_top1s)
