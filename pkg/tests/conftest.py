from __future__ import annotations

import json
import time
from pathlib import Path

import pytest

from inmind.persona import SimConfig, generate_corpus
from inmind.session import Session, load_session

FIXTURES = Path(__file__).parent / "fixtures"
ADVERSARIAL_PATH = FIXTURES / "adversarial.json"


def recorded_bytes() -> bytes:
    return (FIXTURES / "recorded_game.json").read_bytes()


def recorded_doc() -> dict:
    return json.loads(recorded_bytes())


@pytest.fixture(scope="session")
def recorded() -> Session:
    return load_session(recorded_bytes())


@pytest.fixture(scope="session")
def small_corpus():
    return generate_corpus(SimConfig(seed=3, num_observer_sessions=2, num_participant_sessions=5))


# --- acceptance reporting -------------------------------------------------------------

SUITE_BUDGET_SECONDS = 300.0
ACCEPTANCE: dict[str, tuple[bool | None, str]] = {}
_started: dict[str, float] = {}


def _verdict(ok: bool | None) -> str:
    return "SKIP" if ok is None else "PASS" if ok else "FAIL"


def record_criterion(number: int, ok: bool | None, detail: str) -> None:
    """Remember one acceptance result; ``ok=None`` marks a skipped criterion."""
    key = f"criterion {number}"
    ACCEPTANCE[key] = (ok, detail)
    print(f"{_verdict(ok)} {key}: {detail}")


def pytest_sessionstart(session):
    _started["t"] = time.perf_counter()


def pytest_terminal_summary(terminalreporter):
    elapsed = time.perf_counter() - _started.get("t", time.perf_counter())
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k.split()[1])):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{_verdict(ok)} {key}: {detail}")
    ok = elapsed < SUITE_BUDGET_SECONDS
    terminalreporter.write_line(
        f"{'PASS' if ok else 'FAIL'} suite runtime: {elapsed:.1f}s (budget {SUITE_BUDGET_SECONDS:.0f}s)"
    )


def pytest_sessionfinish(session, exitstatus):
    elapsed = time.perf_counter() - _started.get("t", time.perf_counter())
    if ACCEPTANCE and elapsed >= SUITE_BUDGET_SECONDS and exitstatus == 0:
        session.exitstatus = 1
