from __future__ import annotations

import random
import sys
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from inmind.baseline import (
    TokenHashProvider,
    bert_match,
    cosine,
    embed_pooled,
    provider_from_config,
    rank_players,
    tokenize,
)
from inmind.errors import ConfigError, EmptyInput, LengthMismatch, NoTraces
from inmind.session import RoundEvents, Utterance

PROVIDER = TokenHashProvider()


def _with_utterances(session, per_round):
    missions = []
    it = iter(per_round)
    for block in session.missions:
        rounds = tuple(replace(r, utterances=tuple(next(it))) for r in block.rounds)
        missions.append(replace(block, rounds=rounds))
    return replace(session, missions=tuple(missions))


def _rounds(session) -> list[RoundEvents]:
    return [r for _, r in session.rounds()]


def test_tokenize_mixes_words_and_bigrams():
    assert tokenize("Player 3 好人") == ["player", "3", "好人"]
    assert tokenize("三号坏") == ["三号", "号坏"]


def test_pooling_examples():
    v = embed_pooled(PROVIDER, ["a b c"])
    assert np.allclose(embed_pooled(PROVIDER, ["a b c", "a b c"]), v)
    texts = ["x y", "我觉得", "Player 4 is odd"]
    assert np.allclose(embed_pooled(PROVIDER, texts), embed_pooled(PROVIDER, texts[::-1]))
    with pytest.raises(EmptyInput):
        embed_pooled(PROVIDER, [])


@given(st.text(max_size=50), st.text(max_size=50))
def test_cosine_bounds(a, b):
    c = cosine(PROVIDER.embed(a), PROVIDER.embed(b))
    assert 0.0 <= c <= 1.0


def test_trace_copier_ranks_first(recorded):
    traced = {pos for pos, _ in recorded.traces()}
    per_round = []
    for pos, rnd in recorded.rounds():
        utts = [u for u in rnd.utterances if u.speaker != 6]
        if pos in traced:
            utts.append(Utterance(6, rnd.trace.text))
        per_round.append(utts)
    session = _with_utterances(recorded, per_round)
    ranking = rank_players(PROVIDER, session)
    assert ranking.top1 == 6
    assert ranking.scores[6] == pytest.approx(1.0)


def test_identical_speakers_tie_break(recorded):
    per_round = [[Utterance(p, "同样的话 same words") for p in range(1, 7)] for _ in _rounds(recorded)]
    ranking = rank_players(PROVIDER, _with_utterances(recorded, per_round))
    assert len(set(ranking.scores.values())) == 1
    assert ranking.ranking == (1, 2, 3, 4, 5, 6)


def test_order_invariance(recorded):
    base = rank_players(PROVIDER, recorded)
    all_utts = [u for r in _rounds(recorded) for u in r.utterances]
    rng = random.Random(0)
    for _ in range(5):
        rng.shuffle(all_utts)
        n = len(_rounds(recorded))
        per_round = [all_utts[i::n] for i in range(n)]
        assert rank_players(PROVIDER, _with_utterances(recorded, per_round)).ranking == base.ranking


def test_duplicate_inflation_leaves_score(recorded):
    base = rank_players(PROVIDER, recorded)
    per_round = [list(r.utterances) + [u for u in r.utterances if u.speaker == 3] * 2 for r in _rounds(recorded)]
    inflated = rank_players(PROVIDER, _with_utterances(recorded, per_round))
    assert inflated.scores[3] == pytest.approx(base.scores[3])


def test_repeatable(recorded):
    runs = {rank_players(PROVIDER, recorded).ranking for _ in range(10)}
    assert len(runs) == 1


def test_no_traces(recorded):
    stripped = _with_utterances(recorded, [r.utterances for r in _rounds(recorded)])
    missions = tuple(replace(b, rounds=tuple(replace(r, trace=None) for r in b.rounds)) for b in stripped.missions)
    with pytest.raises(NoTraces):
        rank_players(PROVIDER, replace(stripped, missions=missions))


def test_bert_match():
    assert bert_match(["player1", "player2"], ["player1", "player2"]) == 1.0
    assert bert_match(["player1", "player2"], ["player3", "player4"]) == 0.0
    with pytest.raises(LengthMismatch):
        bert_match(["player1"], [])


def test_subprocess_provider():
    script = (
        "import json,sys\n"
        "for line in sys.stdin:\n"
        "    t = json.loads(line)['text']\n"
        "    print(json.dumps({'vector': [len(t), 1.0]}), flush=True)\n"
    )
    provider = provider_from_config({"provider": "subprocess", "command": [sys.executable, "-c", script]})
    try:
        assert provider.dimension == 2
        assert list(provider.embed("abc")) == [3.0, 1.0]
    finally:
        provider.close()


def test_unknown_provider():
    with pytest.raises(ConfigError):
        provider_from_config({"provider": "bert"})
