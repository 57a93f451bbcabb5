from __future__ import annotations

import hashlib

import pytest
from scipy import stats

from inmind.errors import ConfigError
from inmind.game import Alignment
from inmind.persona import PersonaParams, SimConfig, generate_corpus, simulate_session, simulate_with_stats
from inmind.session import dump_session, replay


def test_same_seed_same_bytes():
    cfg = SimConfig(seed=7)
    assert dump_session(simulate_session(cfg, 0)) == dump_session(simulate_session(cfg, 0))


def test_default_corpus_layout():
    corpus = generate_corpus(SimConfig(seed=1))
    assert len(corpus.observer) == 5
    assert len(corpus.participant) == 25
    assert all(s.observed_player is not None for s in corpus.observer)
    assert all(s.observed_player is None for s in corpus.participant)
    for s in corpus.sessions:
        replay(s)


def test_zero_observers_rejected():
    with pytest.raises(ConfigError):
        generate_corpus(SimConfig(num_observer_sessions=0))


def test_bad_probability_rejected():
    with pytest.raises(ConfigError):
        SimConfig.from_dict({"subject_persona": {"claim_propensity": 1.5}})
    with pytest.raises(ConfigError):
        SimConfig.from_dict({"evil_fail_probability": 1.5})


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        SimConfig.from_dict({"sed": 3})


def test_config_dict_round_trip():
    cfg = SimConfig(seed=4, subject_persona=PersonaParams(accusation_threshold=0.3))
    assert SimConfig.from_dict(cfg.to_dict()) == cfg


def _corpus_digest(seed: int) -> str:
    cfg = SimConfig(seed=seed, num_observer_sessions=1, num_participant_sessions=2)
    return hashlib.sha256(b"".join(dump_session(s) for s in generate_corpus(cfg).sessions)).hexdigest()


def test_seed_sensitivity():
    assert _corpus_digest(1) != _corpus_digest(2)


def test_trace_mentions_are_valid_players(small_corpus):
    for s in small_corpus.sessions:
        for _, trace in s.traces():
            for span in trace.mentions:
                assert set(span.players) <= {1, 2, 3, 4, 5, 6}
                assert trace.text[span.start : span.end] == "".join(map(str, span.players))


def test_evil_win_rate_in_band():
    """Observed rate at seed 7 over 100 sessions is 0.62."""
    cfg = SimConfig(seed=7, num_participant_sessions=95)
    wins = sum(simulate_session(cfg, i).outcome.winner is Alignment.EVIL for i in range(100))
    assert 20 <= wins <= 80


def _accusations(threshold: float, seed: int, n: int = 50) -> list[int]:
    cfg = SimConfig(
        seed=seed,
        num_observer_sessions=1,
        num_participant_sessions=n,
        subject_persona=PersonaParams(accusation_threshold=threshold),
    )
    out = []
    for i in range(1, n + 1):
        session, st = simulate_with_stats(cfg, i)
        out.append(st.accusations.get(session.subject, 0))
    return out


def test_accusation_threshold_is_detectable():
    low, high = _accusations(0.2, seed=11), _accusations(0.8, seed=11)
    result = stats.ttest_ind(low, high, alternative="greater")
    assert result.pvalue < 0.01
