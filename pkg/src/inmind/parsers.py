"""Parsers and canonical emitters for the three model response grammars."""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .errors import (
    BadLabel,
    DuplicateMask,
    DuplicatePlayer,
    MalformedLine,
    MissingPlayer,
    NoBlockFound,
    NonAscending,
    ReplacementDigitCountMismatch,
    Top1Mismatch,
    UnknownRole,
    WrongArity,
)
from .game import PLAYERS, ROLE_COMPOSITION, Role
from .masking import mask_token

# --- sections ---------------------------------------------------------------------

_SECTION_RE = re.compile(r"^[ \t]*===[ \t]*(Content|Replacements|Roles)[ \t]*===[ \t]*$", re.MULTILINE)


@dataclass(frozen=True)
class SectionedResponse:
    preamble: str
    content: str | None = None
    replacements: str | None = None
    roles: str | None = None
    order: tuple[str, ...] = ()
    warnings: tuple[str, ...] = ()


def split_sections(text: str) -> SectionedResponse:
    matches = list(_SECTION_RE.finditer(text))
    if not matches:
        return SectionedResponse(preamble=text)
    bodies: dict[str, str] = {}
    order: list[str] = []
    warnings: list[str] = []
    for i, m in enumerate(matches):
        name = m.group(1).lower()
        end = matches[i + 1].start() if i + 1 < len(matches) else len(text)
        if name in bodies:
            warnings.append(f"duplicate '=== {m.group(1)} ===' section; later one kept")
        else:
            order.append(name)
        bodies[name] = text[m.end() : end].strip()
    return SectionedResponse(
        preamble=text[: matches[0].start()].strip(),
        content=bodies.get("content"),
        replacements=bodies.get("replacements"),
        roles=bodies.get("roles"),
        order=tuple(order),
        warnings=tuple(warnings),
    )


# --- ranked prediction ----------------------------------------------------------------

_LABEL_RE = re.compile(r"^player([1-6])$")


@dataclass(frozen=True)
class RankedPrediction:
    top1: str
    top3: tuple[str, str, str]

    @property
    def top1_id(self) -> int:
        return label_id(self.top1)

    @property
    def top3_ids(self) -> tuple[int, ...]:
        return tuple(label_id(x) for x in self.top3)


def player_label(p: int) -> str:
    return f"player{p}"


def label_id(label: str) -> int:
    m = _LABEL_RE.match(label)
    if not m:
        raise BadLabel(f"not a player label: {label!r}")
    return int(m.group(1))


def _first_braced(text: str) -> str | None:
    start = text.find("{")
    while start != -1:
        depth, in_str, esc = 0, False, False
        for i in range(start, len(text)):
            ch = text[i]
            if in_str:
                if esc:
                    esc = False
                elif ch == "\\":
                    esc = True
                elif ch == '"':
                    in_str = False
            elif ch == '"':
                in_str = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    return text[start : i + 1]
        start = text.find("{", start + 1)
    return None


def _norm_label(raw) -> str:
    if not isinstance(raw, str):
        raise BadLabel(f"label must be a string, got {raw!r}")
    label = raw.strip().lower().replace(" ", "")
    if not _LABEL_RE.match(label):
        raise BadLabel(f"not a player label: {raw!r}")
    return label


def parse_ranked(text: str) -> RankedPrediction:
    block = _first_braced(text)
    if block is None:
        raise NoBlockFound("no braced block in response")
    try:
        obj = json.loads(block)
    except json.JSONDecodeError as e:
        raise NoBlockFound(f"braced block is not valid JSON: {e}") from None
    if not isinstance(obj, dict) or "top1" not in obj or "top3" not in obj:
        raise NoBlockFound("block lacks top1/top3 keys")
    top1 = _norm_label(obj["top1"])
    raw3 = obj["top3"]
    if not isinstance(raw3, list):
        raise WrongArity("top3 must be a list")
    top3 = [_norm_label(x) for x in raw3]
    if len(top3) != 3:
        raise WrongArity(f"top3 has {len(top3)} entries")
    if len(set(top3)) != 3:
        raise WrongArity(f"top3 repeats a player: {top3}")
    if top1 != top3[0]:
        raise Top1Mismatch(f"top1={top1} but top3 starts with {top3[0]}")
    return RankedPrediction(top1, (top3[0], top3[1], top3[2]))


def render_ranked(pred: RankedPrediction) -> str:
    return json.dumps({"top1": pred.top1, "top3": list(pred.top3)}, ensure_ascii=False, indent=4)


# --- replacements ---------------------------------------------------------------------

_REPL_RE = re.compile(r"^\[MASK_(\d+)\((\d+)digits?\)\]\s*=>\s*(\S+)$")


@dataclass(frozen=True)
class ReplacementMap:
    entries: dict[int, tuple[int, ...]] = field(default_factory=dict)

    def __eq__(self, other):
        return isinstance(other, ReplacementMap) and self.entries == other.entries

    def __hash__(self):
        return hash(tuple(sorted(self.entries.items())))


def parse_replacements(text: str, *, normalize_digits: bool = False) -> ReplacementMap:
    """Parse ``[MASK_k(Ndigits)] => digits`` lines.

    If the text has an ``=== Replacements ===`` section only that section is
    read. With ``normalize_digits`` unsorted digits are sorted instead of
    rejected.
    """
    sections = split_sections(text)
    body = sections.replacements if sections.replacements is not None else text
    entries: dict[int, tuple[int, ...]] = {}
    for line_no, raw in enumerate(body.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("```"):
            continue
        m = _REPL_RE.match(line)
        if not m:
            raise MalformedLine(line_no, raw)
        k, n, value = int(m.group(1)), int(m.group(2)), m.group(3)
        if not re.fullmatch(r"[1-6]+", value):
            raise MalformedLine(line_no, raw)
        digits = [int(c) for c in value]
        if len(digits) != n:
            raise ReplacementDigitCountMismatch(f"mask {k} declares {n} digit(s) but got {value}")
        if normalize_digits:
            digits.sort()
        if any(b <= a for a, b in zip(digits, digits[1:])):
            raise NonAscending(f"mask {k}: {value} is not strictly ascending")
        if k in entries:
            raise DuplicateMask(f"mask {k} appears twice")
        entries[k] = tuple(digits)
    return ReplacementMap(entries)


def render_replacements(rmap: ReplacementMap | Mapping[int, Sequence[int]]) -> str:
    entries = rmap.entries if isinstance(rmap, ReplacementMap) else rmap
    return "\n".join(
        f"{mask_token(k, len(v))} => {''.join(str(d) for d in sorted(v))}" for k, v in sorted(entries.items())
    )


# --- roles ------------------------------------------------------------------------------

ROLE_ALIASES: dict[str, Role] = {
    "梅林": Role.MERLIN,
    "merlin": Role.MERLIN,
    "莫甘娜": Role.MORGANA,
    "morgana": Role.MORGANA,
    "派西维尔": Role.PERCIVAL,
    "percival": Role.PERCIVAL,
    "刺客": Role.ASSASSIN,
    "刀客": Role.ASSASSIN,
    "assassin": Role.ASSASSIN,
    "忠臣": Role.LOYAL,
    "loyal servant": Role.LOYAL,
    "loyal servant of arthur": Role.LOYAL,
    "loyal": Role.LOYAL,
}

_ROLE_LINE_RE = re.compile(r"^(?:player|玩家)\s*(\d+)\s*(?:号)?\s*:\s*(.+)$", re.IGNORECASE)
_FULLWIDTH = str.maketrans({"：": ":", "【": "[", "】": "]", "［": "[", "］": "]", "（": "(", "）": ")"})


@dataclass(frozen=True)
class RoleMap:
    entries: dict[int, Role]

    @property
    def composition_ok(self) -> bool:
        return Counter(self.entries.values()) == ROLE_COMPOSITION

    def __eq__(self, other):
        return isinstance(other, RoleMap) and self.entries == other.entries

    def __hash__(self):
        return hash(tuple(sorted(self.entries.items())))


def _role_of(raw: str) -> Role:
    s = raw.strip().strip("[]").strip()
    s = re.sub(r"\s+", " ", s).lower()
    if s in ROLE_ALIASES:
        return ROLE_ALIASES[s]
    # bilingual forms such as "梅林 Merlin" or "[忠臣] Loyal Servant"
    parts = [p for p in re.split(r"[\s/()\[\]]+", s) if p]
    found = set()
    i = 0
    while i < len(parts):
        two = " ".join(parts[i : i + 2])
        if two in ROLE_ALIASES:
            found.add(ROLE_ALIASES[two])
            i += 2
        elif parts[i] in ROLE_ALIASES:
            found.add(ROLE_ALIASES[parts[i]])
            i += 1
        elif parts[i] in ("servant", "of", "arthur"):
            i += 1
        else:
            raise UnknownRole(f"unknown role {raw.strip()!r}")
    if len(found) != 1:
        raise UnknownRole(f"unknown role {raw.strip()!r}")
    return found.pop()


def parse_roles(text: str) -> RoleMap:
    """Read six ``Player N: [role]`` lines (``=== Roles ===`` section if present)."""
    sections = split_sections(text)
    body = sections.roles if sections.roles is not None else text
    entries: dict[int, Role] = {}
    for line_no, raw in enumerate(body.splitlines(), start=1):
        line = raw.translate(_FULLWIDTH).strip().lstrip("-*• ").strip()
        m = _ROLE_LINE_RE.match(line)
        if not m:
            continue
        player = int(m.group(1))
        if player not in PLAYERS:
            raise MalformedLine(line_no, raw)
        if player in entries:
            raise DuplicatePlayer(f"player {player} listed twice")
        entries[player] = _role_of(m.group(2))
    for p in PLAYERS:
        if p not in entries:
            raise MissingPlayer(p)
    return RoleMap(entries)


_ROLE_LABELS = {
    "en": {
        Role.MERLIN: "Merlin",
        Role.PERCIVAL: "Percival",
        Role.LOYAL: "Loyal Servant",
        Role.MORGANA: "Morgana",
        Role.ASSASSIN: "Assassin",
    },
    "zh": {
        Role.MERLIN: "梅林",
        Role.PERCIVAL: "派西维尔",
        Role.LOYAL: "忠臣",
        Role.MORGANA: "莫甘娜",
        Role.ASSASSIN: "刺客",
    },
}


def render_roles(rmap: RoleMap | Mapping[int, Role], lang: str = "en", header: bool = True) -> str:
    entries = rmap.entries if isinstance(rmap, RoleMap) else rmap
    lines = ["=== Roles ==="] if header else []
    lines += [f"Player {p}: [{_ROLE_LABELS[lang][entries[p]]}]" for p in sorted(entries)]
    return "\n".join(lines)
