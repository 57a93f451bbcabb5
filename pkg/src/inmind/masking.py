"""Player-id masking for reflection and trace texts.

Mask tokens look like ``[MASK_3(1digit)]`` or ``[MASK_1(3digits)]``; the
number in parentheses is how many player digits the answer has.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import DigitCountMismatch, MissingMask
from .session import AnnotatedText, MentionSpan

MASK_TOKEN_RE = re.compile(r"\[MASK_(\d+)\((\d+)digits?\)\]")

# Only the two unambiguous surface forms; bare digit clusters need annotation.
_MENTION_RE = re.compile(r"(?:Player\s*([1-6])(?![0-9]))|(?:(?<![0-9])([1-6])号)")

_SENTENCE_END = "。！？!?.;；\n"


def mask_token(index: int, n_digits: int) -> str:
    return f"[MASK_{index}({n_digits}digit{'s' if n_digits > 1 else ''})]"


@dataclass(frozen=True)
class MaskedText:
    template: str
    answers: dict[int, tuple[int, ...]]

    @property
    def indices(self) -> list[int]:
        return [int(m.group(1)) for m in MASK_TOKEN_RE.finditer(self.template)]

    def digit_counts(self) -> dict[int, int]:
        return {int(m.group(1)): int(m.group(2)) for m in MASK_TOKEN_RE.finditer(self.template)}


def mask_text(annotated: AnnotatedText) -> MaskedText:
    parts = []
    answers: dict[int, tuple[int, ...]] = {}
    pos = 0
    for k, span in enumerate(annotated.mentions, start=1):
        parts.append(annotated.text[pos : span.start])
        parts.append(mask_token(k, len(span.players)))
        answers[k] = tuple(span.players)
        pos = span.end
    parts.append(annotated.text[pos:])
    return MaskedText("".join(parts), answers)


def unmask(masked: MaskedText, fill: Mapping[int, Sequence[int]]) -> str:
    counts = masked.digit_counts()
    for k, n in counts.items():
        if k not in fill:
            raise MissingMask(f"no fill for mask {k}")
        if len(fill[k]) != n:
            raise DigitCountMismatch(f"mask {k} takes {n} digit(s), got {list(fill[k])}")

    def sub(m: re.Match) -> str:
        return "".join(str(d) for d in sorted(fill[int(m.group(1))]))

    return MASK_TOKEN_RE.sub(sub, masked.template)


def digit_rendering(annotated: AnnotatedText) -> str:
    """The text with each mention span rewritten as its ascending player digits."""
    out, pos = [], 0
    for span in annotated.mentions:
        out.append(annotated.text[pos : span.start])
        out.append("".join(str(p) for p in span.players))
        pos = span.end
    out.append(annotated.text[pos:])
    return "".join(out)


def relabel(annotated: AnnotatedText, permutation: Sequence[int]) -> AnnotatedText:
    """Rewrite every mention through ``permutation`` (``permutation[p-1]`` is p's new id)."""
    out, pos, spans = [], 0, []
    for span in annotated.mentions:
        out.append(annotated.text[pos : span.start])
        new_players = tuple(sorted(permutation[p - 1] for p in span.players))
        rendered = "".join(str(p) for p in new_players)
        start = sum(len(s) for s in out)
        out.append(rendered)
        spans.append(MentionSpan(start, start + len(rendered), new_players))
        pos = span.end
    out.append(annotated.text[pos:])
    return AnnotatedText("".join(out), None, tuple(spans))


def extract_mentions(text: str) -> tuple[MentionSpan, ...]:
    """Find ``Player N`` and ``N号`` mentions. Spans cover the digit only."""
    spans = []
    for m in _MENTION_RE.finditer(text):
        g = 1 if m.group(1) else 2
        spans.append(MentionSpan(m.start(g), m.end(g), (int(m.group(g)),)))
    return tuple(spans)


def segment(annotated: AnnotatedText) -> list[AnnotatedText]:
    """Split into sentences; keep those containing at least one mention.

    Offsets in the returned spans are relative to each segment.
    """
    text = annotated.text
    bounds, start = [], 0
    for i, ch in enumerate(text):
        if ch in _SENTENCE_END:
            bounds.append((start, i + 1))
            start = i + 1
    if start < len(text):
        bounds.append((start, len(text)))

    out = []
    for lo, hi in bounds:
        inside = [s for s in annotated.mentions if lo <= s.start and s.end <= hi]
        if not inside:
            continue
        # trim leading whitespace without disturbing offsets
        while lo < hi and text[lo].isspace():
            lo += 1
        out.append(
            AnnotatedText(
                text[lo:hi],
                None,
                tuple(MentionSpan(s.start - lo, s.end - lo, s.players) for s in inside),
            )
        )
    return out
