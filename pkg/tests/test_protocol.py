from __future__ import annotations

import hashlib
from dataclasses import replace

import pytest

from inmind.backends import Backend, EchoBackend, OracleBackend
from inmind.errors import BackendTimeout, ProfileBuildError, ProtocolError
from inmind.protocol import (
    ExchangeLog,
    StrategyProfile,
    TaskKind,
    build_player_id_task,
    build_profile,
    build_reflection_tasks,
    build_role_tasks,
    build_tasks,
    build_trace_tasks,
    profile_segment,
    run_protocol,
)
from inmind.prompts import NONE_TEXT, load_template
from inmind.session import AnnotatedText

PROFILE = StrategyProfile("PROFILE-TEXT", ("obs",), "test", 1)


class Flaky(Backend):
    """Wraps another backend and fails selected calls."""

    def __init__(self, inner, fail_when):
        self.inner = inner
        self.fail_when = fail_when
        self.calls = 0

    def _respond(self, system, user):
        self.calls += 1
        if self.fail_when(system, user):
            raise BackendTimeout("scripted timeout")
        return self.inner._respond(system, user)


class Scripted(Backend):
    def __init__(self, responses):
        self.responses = list(responses)
        self.seen = []

    def _respond(self, system, user):
        self.seen.append(user)
        return self.responses.pop(0), None, 0


def _strip_traces(session):
    missions = tuple(replace(b, rounds=tuple(replace(r, trace=None) for r in b.rounds)) for b in session.missions)
    return replace(session, missions=missions)


# --- Stage 1 ------------------------------------------------------------------------


def test_profile_accumulates_over_observers(small_corpus):
    profile = build_profile(EchoBackend(), small_corpus.observer)
    assert profile.accumulation_steps == len(small_corpus.observer)
    assert profile.source_sessions == tuple(s.id for s in small_corpus.observer)
    assert build_profile(EchoBackend(), small_corpus.observer) == profile


def test_profile_single_session_echo(small_corpus):
    obs = small_corpus.observer[0]
    _, user = load_template("profile").fill(REFLECTION_SEGMENT=profile_segment(obs), ACCUMULATED_SUMMARY=NONE_TEXT["zh"])
    profile = build_profile(EchoBackend(), [obs])
    assert profile.text == "echo:" + hashlib.sha256(user.encode()).hexdigest()[:16]


def test_profile_preconditions(small_corpus):
    with pytest.raises(ProtocolError):
        build_profile(EchoBackend(), [])
    with pytest.raises(ProtocolError):
        build_profile(EchoBackend(), small_corpus.participant[:1])


def test_profile_backend_failure_names_step(small_corpus):
    backend = Flaky(EchoBackend(), lambda s, u: True)
    with pytest.raises(ProfileBuildError) as err:
        build_profile(backend, small_corpus.observer)
    assert err.value.step == 1


# --- Stage 2 builders ----------------------------------------------------------------


def test_player_id_targets(recorded):
    identity = build_player_id_task(PROFILE, recorded, 0, permutation=(1, 2, 3, 4, 5, 6))
    assert identity.target == 2
    swapped = build_player_id_task(PROFILE, recorded, 0, permutation=(1, 5, 3, 4, 2, 6))
    assert swapped.target == 5
    assert swapped.flags.permutation == (1, 5, 3, 4, 2, 6)


def test_player_id_needs_traces(recorded):
    with pytest.raises(ProtocolError):
        build_player_id_task(PROFILE, _strip_traces(recorded), 0)


def test_player_id_visibility(recorded):
    inst = build_player_id_task(PROFILE, recorded, 0, lang="en")
    _, user = inst.prompt()
    assert "PROFILE-TEXT" in user
    assert "[Strategy]" in user
    assert "[My Info]" not in user and "[Subject Info]" not in user
    assert "[Final User Info]" not in user


def test_reflection_conditions(recorded):
    full = build_reflection_tasks(PROFILE, recorded, "full", "en")
    bare = build_reflection_tasks(PROFILE, recorded, "no_traces", "en")
    assert [i.target for i in full] == [i.target for i in bare]
    assert len(full) > 0
    assert all("[Strategy]" in i.user_template for i in full)
    assert all("[Strategy]" not in i.user_template for i in bare)
    assert all("[Final User Info]" in i.user_template and "[My Info]" in i.user_template for i in full)


def test_reflection_target_passthrough(recorded):
    for inst in build_reflection_tasks(PROFILE, recorded, "full"):
        assert "<review>" in inst.user_template
        assert sorted(inst.target.entries) == list(range(1, len(inst.target.entries) + 1))


def test_reflection_without_mentions(recorded):
    quiet = replace(recorded, reflection=AnnotatedText("没什么好说的。"))
    assert build_reflection_tasks(PROFILE, quiet, "full") == []


def test_trace_tasks_enumerate_rounds(recorded):
    tasks = build_trace_tasks(PROFILE, recorded, prior_trace=False)
    assert [t.flags.round_index for t in tasks] == list(range(1, len(recorded.traces()) + 1))
    assert [t.position for t in tasks] == [pos for pos, _ in recorded.traces()]


def test_trace_prior_boundary(recorded):
    tasks = build_trace_tasks(PROFILE, recorded, prior_trace=True, lang="en")
    assert "[Previous Round Strategy]" not in tasks[0].user_template
    assert all("[Previous Round Strategy]" in t.user_template for t in tasks[1:])


def test_trace_incremental(recorded):
    """Instance k shows only round k's events; later rounds never leak in."""
    tasks = build_trace_tasks(PROFILE, recorded, prior_trace=False, lang="en")
    for t in tasks:
        m, r = t.position
        assert f"== Mission {m} ==" in t.user_template
        for later in range(m + 1, 6):
            assert f"== Mission {later} ==" not in t.user_template
        assert "[Strategy]" not in t.user_template


def test_role_modes(recorded):
    a = build_role_tasks(PROFILE, recorded, "A", "en")
    d = build_role_tasks(PROFILE, recorded, "D", "en")
    assert len(a) == len(recorded.missions)
    assert "[My Info] I am Player 2, the Assassin." in a[0].user_template
    assert any("[Strategy]" in t.user_template for t in a)
    assert all("[My Info]" not in t.user_template and "[Subject Info]" not in t.user_template for t in d)
    assert all("[Strategy]" not in t.user_template for t in d)
    b = build_role_tasks(None, recorded, "B", "en")
    c = build_role_tasks(None, recorded, "C", "en")
    assert "[My Info]" in b[0].user_template and "[Subject Info]" in c[0].user_template


def test_build_tasks_selection(small_corpus):
    tasks = build_tasks(PROFILE, small_corpus.sessions, ["player_id", "role"], role_modes=["A", "D"])
    kinds = {t.kind for t in tasks}
    assert kinds == {TaskKind.PLAYER_ID, TaskKind.ROLE}
    assert sum(t.kind is TaskKind.PLAYER_ID for t in tasks) == len(small_corpus.participant)
    with pytest.raises(ProtocolError):
        build_tasks(None, small_corpus.sessions, ["trace"])


# --- execution ------------------------------------------------------------------------


def test_oracle_run_parses_everything(small_corpus):
    tasks = build_tasks(
        PROFILE,
        small_corpus.sessions,
        ["player_id", "reflection", "trace", "role"],
        reflection_conditions=["full", "no_traces"],
        trace_conditions=["base", "prior"],
        role_modes=["A", "B", "C", "D"],
    )
    records = run_protocol(OracleBackend(small_corpus.sessions), tasks, concurrency_limit=4)
    assert len(records) == len(tasks)
    assert all(r.error is None and r.prediction is not None for r in records)


def test_rolling_summary_threads(recorded):
    tasks = build_trace_tasks(PROFILE, recorded, prior_trace=False)
    records = run_protocol(OracleBackend([recorded]), tasks)
    for rec in records:
        assert rec.summary.covers_through == rec.instance.position
    # the second prompt carries the first response's Content section
    first_summary = records[0].summary.text
    assert f"<summary>\n{first_summary}\n</summary>" in records[1].instance.prompt(first_summary)[1]


def test_timeout_isolated(recorded):
    tasks = build_trace_tasks(PROFILE, recorded, prior_trace=False, lang="en")
    target = tasks[2].position
    template = tasks[2].user_template
    game_data = template[template.index("<game_data>") : template.index("</game_data>")]
    backend = Flaky(OracleBackend([recorded]), lambda s, u: game_data in u)
    records = run_protocol(backend, tasks)
    failed = [r for r in records if r.error]
    assert [r.instance.position for r in failed] == [target]
    assert failed[0].error == "backend:BackendTimeout"
    assert all(r.prediction is not None for r in records if r.instance.position != target)


def test_parse_retry_then_success(recorded):
    inst = build_player_id_task(PROFILE, recorded, 0, permutation=(1, 2, 3, 4, 5, 6), lang="en")
    backend = Scripted(["not json", '{"top1":"player2","top3":["player2","player1","player3"]}'])
    [rec] = run_protocol(backend, [inst])
    assert rec.attempts == 2
    assert rec.error is None
    assert "previous output could not be parsed" in backend.seen[1]


def test_parse_failure_recorded(recorded):
    inst = build_player_id_task(PROFILE, recorded, 0, lang="en")
    [rec] = run_protocol(Scripted(["nope", "still nope"]), [inst])
    assert rec.prediction is None
    assert rec.error == "parse:no-block"


def test_exchange_log_resume(tmp_path, recorded):
    tasks = build_trace_tasks(PROFILE, recorded, prior_trace=True)
    oracle = OracleBackend([recorded])
    first = Flaky(oracle, lambda s, u: False)
    log = ExchangeLog(tmp_path)
    fresh = run_protocol(first, tasks, exchange_log=log)
    again = Flaky(oracle, lambda s, u: False)
    resumed = run_protocol(again, tasks, exchange_log=ExchangeLog(tmp_path))
    assert again.calls == 0
    assert [r.prediction for r in resumed] == [r.prediction for r in fresh]


def test_exchange_log_tolerates_torn_line(tmp_path, recorded):
    tasks = build_trace_tasks(PROFILE, recorded, prior_trace=False)
    log = ExchangeLog(tmp_path)
    run_protocol(OracleBackend([recorded]), tasks, exchange_log=log)
    path = log.path(tasks[0].stream)
    lines = path.read_text("utf-8").splitlines(keepends=True)
    path.write_text("".join(lines[:-1]) + lines[-1][: len(lines[-1]) // 2], "utf-8")
    backend = Flaky(OracleBackend([recorded]), lambda s, u: False)
    records = run_protocol(backend, tasks, exchange_log=ExchangeLog(tmp_path))
    assert backend.calls == 1
    assert all(r.error is None for r in records)
