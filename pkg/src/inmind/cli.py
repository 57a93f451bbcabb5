"""``inmind`` command-line entry point.

A run directory has a fixed layout::

    RUN/manifest.json      settings that determine the run's outputs
    RUN/profile.json       the Stage-1 strategy profile
    RUN/corpus/{observer,participant}/*.json
    RUN/exchanges/*.jsonl  raw backend exchanges, used for resuming
    RUN/records/*.jsonl    one evaluation record per task instance
    RUN/reports/           CSV, JSON and markdown reports

Exit codes: 0 success, 1 I/O error, 2 config error, 3 backend exhaustion,
4 validation failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .backends import describe_backend, make_backend
from .baseline import provider_from_config
from .errors import (
    BackendTimeout,
    ConfigError,
    ConsistencyError,
    ExhaustedRetries,
    InMindError,
    IoError,
    ProfileBuildError,
    ProtocolError,
    SchemaError,
)
from .persona import SimConfig, generate_corpus
from .prompts import templates_digest
from .protocol import (
    ExchangeLog,
    ReflectionCondition,
    RoleMode,
    StrategyProfile,
    TaskKind,
    build_profile,
    build_tasks,
    run_protocol,
)
from .reporting import canonical_json, compute_rows, load_records, make_records, write_records, write_reports
from .session import Mode, Session, dump_session, load_session

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_BACKEND, EXIT_VALIDATION = 0, 1, 2, 3, 4

RUN_DEFAULTS: dict[str, Any] = {
    "tasks": ["player_id", "reflection", "trace", "role"],
    "conditions": ["full", "base"],
    "modes": ["A"],
    "seed": 0,
    "lang": "zh",
    "concurrency": 4,
    "weighting": "linear",
    "normalize_digits": False,
    "zero_violations": False,
    "build_profile": False,
    "corpus": None,
}
TRACE_CONDITIONS = ("base", "prior")


# --- helpers -------------------------------------------------------------------------


def _csv(value: str | None) -> list[str] | None:
    return None if value is None else [v.strip() for v in value.split(",") if v.strip()]


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        raw = json.loads(Path(path).read_text("utf-8"))
    except FileNotFoundError:
        raise IoError(f"config file not found: {Path(path).resolve()}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a JSON object")
    return raw


def run_settings(config: dict, args: argparse.Namespace) -> dict:
    """Merge defaults, the config's ``run`` section, then command-line flags."""
    settings = {**RUN_DEFAULTS, **config.get("run", {})}
    unknown = set(settings) - set(RUN_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown run settings {sorted(unknown)}")
    flags = {
        "tasks": _csv(getattr(args, "tasks", None)),
        "conditions": _csv(getattr(args, "conditions", None)),
        "modes": _csv(getattr(args, "modes", None)),
        "seed": getattr(args, "seed", None),
        "lang": getattr(args, "lang", None),
        "concurrency": getattr(args, "concurrency", None),
        "weighting": getattr(args, "weighting", None),
        "normalize_digits": getattr(args, "normalize_digits", None) or None,
        "zero_violations": getattr(args, "zero_violations", None) or None,
        "build_profile": getattr(args, "build_profile", None) or None,
        "corpus": getattr(args, "corpus", None),
    }
    settings.update({k: v for k, v in flags.items() if v is not None})
    for task in settings["tasks"]:
        if task not in {k.value for k in TaskKind}:
            raise ConfigError(f"unknown task {task!r}")
    for cond in settings["conditions"]:
        if cond.replace("-", "_") not in {c.value for c in ReflectionCondition} and cond not in TRACE_CONDITIONS:
            raise ConfigError(f"unknown condition {cond!r}")
    for mode in settings["modes"]:
        if mode not in {m.value for m in RoleMode}:
            raise ConfigError(f"unknown role mode {mode!r}")
    if settings["lang"] not in ("zh", "en"):
        raise ConfigError(f"unknown language {settings['lang']!r}")
    if settings["weighting"] not in ("uniform", "linear", "exp"):
        raise ConfigError(f"unknown weighting {settings['weighting']!r}")
    if int(settings["concurrency"]) < 1:
        raise ConfigError("concurrency must be >= 1")
    return settings


def backend_section(config: dict, args: argparse.Namespace) -> tuple[str, dict]:
    section = dict(config.get("backend", {}))
    spec = getattr(args, "backend", None) or section.pop("spec", None) or "mock:oracle"
    section.pop("spec", None)
    return spec, section


def load_corpus(directory: str | Path) -> list[Session]:
    directory = Path(directory)
    files = sorted(directory.rglob("*.json")) if directory.is_dir() else []
    if not files:
        raise IoError(f"no session files found in {directory.resolve()}")
    return [load_session(f.read_bytes()) for f in files]


def corpus_hash(directory: str | Path) -> str:
    directory = Path(directory)
    h = hashlib.sha256()
    for f in sorted(directory.rglob("*.json")):
        h.update(f.relative_to(directory).as_posix().encode() + b"\n")
        h.update(hashlib.sha256(f.read_bytes()).digest())
    return h.hexdigest()


def read_manifest(run: Path) -> dict:
    p = run / "manifest.json"
    return json.loads(p.read_text("utf-8")) if p.exists() else {}


def write_manifest(run: Path, manifest: dict) -> None:
    run.mkdir(parents=True, exist_ok=True)
    (run / "manifest.json").write_text(canonical_json(manifest), "utf-8")


def corpus_counts(sessions: Sequence[Session]) -> dict[str, int]:
    return {
        "sessions": len(sessions),
        "participant": sum(s.mode is Mode.PARTICIPANT for s in sessions),
        "observer": sum(s.mode is Mode.OBSERVER for s in sessions),
        "rounds": sum(1 for s in sessions for _ in s.rounds()),
        "player_turns": sum(1 for s in sessions for u in s.utterances() if u.speaker != "system"),
        "strategy_traces": sum(len(s.traces()) for s in sessions),
    }


def _say(msg: str) -> None:
    print(msg, flush=True)


# --- commands ------------------------------------------------------------------------


def cmd_simulate(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    sim = SimConfig.from_dict(config.get("simulation", {}))
    if args.seed is not None:
        sim = SimConfig.from_dict({**sim.to_dict(), "seed": args.seed})
    corpus = generate_corpus(sim)
    run = Path(args.out)
    for sub, sessions in (("observer", corpus.observer), ("participant", corpus.participant)):
        d = run / "corpus" / sub
        d.mkdir(parents=True, exist_ok=True)
        for s in sessions:
            (d / f"{s.id}.json").write_bytes(dump_session(s))
    manifest = read_manifest(run)
    manifest.update(
        {
            "tool_version": __version__,
            "simulation": sim.to_dict(),
            "corpus_hash": corpus_hash(run / "corpus"),
        }
    )
    write_manifest(run, manifest)
    c = corpus_counts(corpus.sessions)
    _say(
        f"{c['sessions']} sessions ({c['participant']} participant, {c['observer']} observer), "
        f"{c['rounds']} rounds, {c['player_turns']} player turns, {c['strategy_traces']} strategy traces"
    )
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    files: list[Path] = []
    for raw in args.paths:
        p = Path(raw)
        if p.is_dir():
            files += sorted(p.rglob("*.json"))
        elif p.exists():
            files.append(p)
        else:
            raise IoError(f"no such file or directory: {p.resolve()}")
    if not files:
        raise IoError("no session files to validate")
    failures = 0
    sessions = []
    for f in files:
        try:
            sessions.append(load_session(f.read_bytes()))
            _say(f"ok     {f}")
        except (SchemaError, ConsistencyError) as e:
            failures += 1
            _say(f"FAIL   {f}: {type(e).__name__}: {e}")
    if sessions:
        c = corpus_counts(sessions)
        _say(
            f"{c['sessions']} sessions ({c['participant']} participant / {c['observer']} observer), "
            f"{c['strategy_traces']} strategy traces, {c['player_turns']} player turns"
        )
    return EXIT_VALIDATION if failures else EXIT_OK


def _profile(run: Path, sessions: Sequence[Session], backend, lang: str) -> StrategyProfile:
    observers = [s for s in sessions if s.mode is Mode.OBSERVER]
    profile = build_profile(backend, observers, lang)
    (run / "profile.json").write_text(canonical_json(profile.to_dict()), "utf-8")
    return profile


def cmd_build_profile(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    settings = run_settings(config, args)
    run = Path(args.run)
    sessions = load_corpus(settings["corpus"] or run / "corpus")
    spec, section = backend_section(config, args)
    backend = make_backend(spec, sessions=sessions, config=section)
    profile = _profile(run, sessions, backend, settings["lang"])
    _say(f"profile built from {profile.accumulation_steps} observer sessions -> {run / 'profile.json'}")
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    settings = run_settings(config, args)
    run = Path(args.run)
    corpus_dir = Path(settings["corpus"]) if settings["corpus"] else run / "corpus"
    sessions = load_corpus(corpus_dir)
    spec, section = backend_section(config, args)
    backend = make_backend(spec, sessions=sessions, config=section)

    profile_path = run / "profile.json"
    needs_profile = any(t != "role" for t in settings["tasks"])
    if settings["build_profile"]:
        profile = _profile(run, sessions, backend, settings["lang"])
    elif profile_path.exists():
        profile = StrategyProfile.from_dict(json.loads(profile_path.read_text("utf-8")))
    elif needs_profile:
        raise ConfigError(f"no profile at {profile_path.resolve()}; run build-profile or pass --build-profile")
    else:
        profile = None

    conditions = settings["conditions"]
    refl = [c.replace("-", "_") for c in conditions if c not in TRACE_CONDITIONS] or ["full"]
    trace = [c for c in conditions if c in TRACE_CONDITIONS] or ["base"]
    instances = build_tasks(
        profile,
        sessions,
        settings["tasks"],
        reflection_conditions=refl,
        trace_conditions=trace,
        role_modes=settings["modes"],
        seed=settings["seed"],
        lang=settings["lang"],
    )
    results = run_protocol(
        backend,
        instances,
        concurrency_limit=int(settings["concurrency"]),
        exchange_log=ExchangeLog(run / "exchanges"),
        normalize_digits=bool(settings["normalize_digits"]),
    )
    provider = provider_from_config(config.get("baseline")) if "player_id" in settings["tasks"] else None
    records = make_records(results, {s.id: s for s in sessions}, provider)
    write_records(run / "records" / "records.jsonl", records)

    manifest = read_manifest(run)
    manifest.update(
        {
            "tool_version": __version__,
            "corpus_hash": corpus_hash(corpus_dir),
            "template_hash": templates_digest(),
            "backend": describe_backend(spec, section),
            "baseline": config.get("baseline", {"provider": "token-hash"}),
            "profile_hash": hashlib.sha256(profile.text.encode()).hexdigest() if profile else None,
            "seed": settings["seed"],
            "tasks": settings["tasks"],
            "conditions": {"reflection": refl, "trace": trace, "role_modes": settings["modes"]},
            "lang": settings["lang"],
            "weighting": settings["weighting"],
            "normalize_digits": bool(settings["normalize_digits"]),
            "zero_violations": bool(settings["zero_violations"]),
        }
    )
    write_manifest(run, manifest)

    errors = [r for r in records if r["error"]]
    _say(f"{len(records)} instances, {len(errors)} with errors -> {run / 'records'}")
    exhausted = [
        r for r in errors if r["error"] in (f"backend:{ExhaustedRetries.__name__}", f"backend:{BackendTimeout.__name__}")
    ]
    if exhausted:
        _say(f"{len(exhausted)} instances exhausted backend retries; rerun to resume them")
        return EXIT_BACKEND
    return EXIT_OK


def _rows_for(args: argparse.Namespace):
    run = Path(args.run) if args.run else None
    records_dir = Path(args.records) if args.records else (run / "records" if run else None)
    if records_dir is None:
        raise ConfigError("pass --run or --records")
    records = load_records(records_dir)
    manifest = read_manifest(run) if run else {}
    weighting = args.weighting or manifest.get("weighting", "linear")
    zero = args.zero_violations or manifest.get("zero_violations", False)
    rows = compute_rows(records, weighting=weighting, zero_violations=zero)
    backend = manifest.get("backend", {}).get("spec", "unknown")
    return run, rows, backend, manifest


def cmd_score(args: argparse.Namespace) -> int:
    _, rows, backend, _ = _rows_for(args)
    for r in rows:
        _say(f"{backend}\t{r.task}\t{r.condition}\t{r.scheme}\t{r.metric}\t{r.value:.4f}\t{r.n}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    run, rows, backend, manifest = _rows_for(args)
    out = Path(args.out) if args.out else (run / "reports" if run else Path("reports"))
    paths = write_reports(out, rows, backend, manifest)
    for p in paths.values():
        _say(str(p))
    return EXIT_OK


# --- parser --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="inmind", description="Subject-specific reasoning evaluation harness.")
    parser.add_argument("--version", action="version", version=f"inmind {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic corpus into RUN/corpus")
    p.add_argument("--config")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate", help="schema- and replay-check session files")
    p.add_argument("paths", nargs="+")
    p.set_defaults(func=cmd_validate)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config")
        p.add_argument("--run", required=True, help="run directory")
        p.add_argument("--corpus", help="corpus directory (default RUN/corpus)")
        p.add_argument("--backend", help="mock:oracle, mock:random[:seed], mock:echo or http")
        p.add_argument("--lang", choices=("zh", "en"))

    p = sub.add_parser("build-profile", help="accumulate the strategy profile from observer sessions")
    common(p)
    p.set_defaults(func=cmd_build_profile)

    p = sub.add_parser("run", help="build and execute task instances")
    common(p)
    p.add_argument("--tasks", help="comma list of player_id,reflection,trace,role")
    p.add_argument("--conditions", help="comma list of full,no-traces (reflection) and base,prior (trace)")
    p.add_argument("--modes", help="comma list of role modes A,B,C,D")
    p.add_argument("--seed", type=int)
    p.add_argument("--concurrency", type=int)
    p.add_argument("--build-profile", action="store_true")
    p.add_argument("--normalize-digits", action="store_true")
    p.set_defaults(func=cmd_run)

    for name, func, helptext in (
        ("score", cmd_score, "print aggregate metrics"),
        ("report", cmd_report, "write CSV, JSON and markdown reports"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--run")
        p.add_argument("--records", help="records directory (default RUN/records)")
        p.add_argument("--weighting", choices=("uniform", "linear", "exp"))
        p.add_argument("--zero-violations", action="store_true")
        if name == "report":
            p.add_argument("--out", help="report directory (default RUN/reports)")
        p.set_defaults(func=func)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ProtocolError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ProfileBuildError, ExhaustedRetries, BackendTimeout) as e:
        print(f"backend error: {e}", file=sys.stderr)
        return EXIT_BACKEND
    except (SchemaError, ConsistencyError) as e:
        print(f"validation error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except IoError as e:
        print(f"io error: {e}", file=sys.stderr)
        return EXIT_IO
    except InMindError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
