from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from inmind.errors import DigitCountMismatch, MissingMask
from inmind.masking import (
    MASK_TOKEN_RE,
    MaskedText,
    digit_rendering,
    extract_mentions,
    mask_text,
    relabel,
    segment,
    unmask,
)
from inmind.session import AnnotatedText, MentionSpan


def test_mask_two_mentions():
    text = "Player 1 deceived Player 5"
    spans = (MentionSpan(0, 8, (1,)), MentionSpan(18, 26, (5,)))
    masked = mask_text(AnnotatedText(text, None, spans))
    assert masked.template == "[MASK_1(1digit)] deceived [MASK_2(1digit)]"
    assert masked.answers == {1: (1,), 2: (5,)}


def test_mask_no_mentions_is_identity():
    masked = mask_text(AnnotatedText("nothing to hide"))
    assert masked.template == "nothing to hide"
    assert masked.answers == {}


def test_compound_mention():
    text = "126炸了"
    masked = mask_text(AnnotatedText(text, None, (MentionSpan(0, 3, (1, 2, 6)),)))
    assert masked.template == "[MASK_1(3digits)]炸了"
    assert masked.answers == {1: (1, 2, 6)}
    assert unmask(masked, masked.answers) == text


def test_unmask_examples():
    masked = MaskedText("[MASK_1(2digits)] are evil", {1: (3, 5)})
    assert unmask(masked, {1: (3, 5)}) == "35 are evil"
    with pytest.raises(MissingMask):
        unmask(masked, {})
    with pytest.raises(DigitCountMismatch):
        unmask(masked, {1: (3,)})


def test_extract_mentions_forms():
    spans = extract_mentions("Player 3 和 5号 都说了, 126 不算")
    assert [s.players for s in spans] == [(3,), (5,)]


def test_segment_keeps_only_sentences_with_mentions():
    text = "开局平稳。3号很可疑！没什么。"
    a = AnnotatedText(text, None, (MentionSpan(5, 6, (3,)),))
    segs = segment(a)
    assert len(segs) == 1
    assert segs[0].text == "3号很可疑！"
    assert segs[0].mentions == (MentionSpan(0, 1, (3,)),)


def test_relabel_moves_ids():
    a = AnnotatedText("2号和5号", None, (MentionSpan(0, 1, (2,)), MentionSpan(3, 4, (5,))))
    out = relabel(a, (1, 5, 3, 4, 2, 6))
    assert out.text == "5号和2号"
    assert [s.players for s in out.mentions] == [(5,), (2,)]


fillers = st.text(alphabet="abc 好人坏人，。", max_size=6)
players = st.lists(st.integers(1, 6), min_size=1, max_size=3, unique=True).map(lambda xs: tuple(sorted(xs)))


@st.composite
def annotated_texts(draw):
    parts = draw(st.lists(st.tuples(fillers, players), max_size=6))
    tail = draw(fillers)
    text, spans = "", []
    for filler, ps in parts:
        text += filler
        rendered = "".join(map(str, ps))
        spans.append(MentionSpan(len(text), len(text) + len(rendered), ps))
        text += rendered
    return AnnotatedText(text + tail, None, tuple(spans))


@given(annotated_texts())
def test_mask_unmask_round_trip(a):
    masked = mask_text(a)
    assert unmask(masked, masked.answers) == digit_rendering(a)
    assert masked.indices == list(range(1, len(a.mentions) + 1))
    for k, n in masked.digit_counts().items():
        assert n == len(masked.answers[k])


@given(annotated_texts())
def test_mask_tokens_are_well_formed(a):
    masked = mask_text(a)
    assert len(MASK_TOKEN_RE.findall(masked.template)) == len(a.mentions)
