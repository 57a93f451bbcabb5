from __future__ import annotations

import pytest

from inmind.backends import OracleBackend, RandomBackend
from inmind.baseline import TokenHashProvider
from inmind.errors import IoError
from inmind.protocol import StrategyProfile, build_tasks, run_protocol
from inmind.reporting import compute_rows, load_records, make_records, per_record_flags, write_records, write_reports

PROFILE = StrategyProfile("p", ("o",), "t", 1)


def _records(corpus, backend):
    tasks = build_tasks(
        PROFILE,
        corpus.sessions,
        ["player_id", "reflection", "trace", "role"],
        trace_conditions=["base", "prior"],
        role_modes=["A", "D"],
    )
    runs = run_protocol(backend, tasks)
    return make_records(runs, {s.id: s for s in corpus.sessions}, TokenHashProvider())


def _value(rows, task, condition, scheme, metric):
    [row] = [r for r in rows if (r.task, r.condition, r.scheme, r.metric) == (task, condition, scheme, metric)]
    return row.value


def test_oracle_rows_are_perfect(small_corpus):
    rows = compute_rows(_records(small_corpus, OracleBackend(small_corpus.sessions)))
    assert _value(rows, "player_id", "all", "-", "top1_acc") == 1.0
    assert _value(rows, "reflection", "full", "-", "exact_match") == 1.0
    assert _value(rows, "trace", "base", "-", "exact_match") == 1.0
    assert _value(rows, "trace", "prior-base", "-", "delta") == 0.0
    for mode in ("A", "D"):
        for scheme in ("strict", "relaxed", "all_exact"):
            assert _value(rows, "role", mode, scheme, "weighted_acc") == 1.0


def test_aggregate_is_mean_of_flags(small_corpus):
    records = _records(small_corpus, RandomBackend(1))
    rows = compute_rows(records)
    pid = [per_record_flags(r) for r in records if r["kind"] == "player_id"]
    assert _value(rows, "player_id", "all", "-", "top1_acc") == pytest.approx(sum(f["top1"] for f in pid) / len(pid))
    refl = [per_record_flags(r) for r in records if r["kind"] == "reflection"]
    assert _value(rows, "reflection", "full", "-", "exact_match") == pytest.approx(
        sum(f["exact"] for f in refl) / len(refl)
    )


def test_records_round_trip_and_reports(tmp_path, small_corpus):
    records = _records(small_corpus, RandomBackend(2))
    write_records(tmp_path / "records" / "records.jsonl", records)
    loaded = load_records(tmp_path / "records")
    assert loaded == records
    rows = compute_rows(loaded)
    a = write_reports(tmp_path / "a", rows, "mock:random:2", {"seed": 0})
    b = write_reports(tmp_path / "b", compute_rows(load_records(tmp_path / "records")), "mock:random:2", {"seed": 0})
    for key in a:
        assert a[key].read_bytes() == b[key].read_bytes()


def test_load_records_missing(tmp_path):
    with pytest.raises(IoError) as err:
        load_records(tmp_path / "nothing")
    assert str((tmp_path / "nothing").resolve()) in str(err.value)
