"""Evaluation records, aggregate report rows, and CSV/JSON/markdown emitters.

Everything here is a pure function of the persisted records and manifest, so
re-scoring a finished run reproduces its reports byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .baseline import EmbeddingProvider, rank_players
from .errors import IoError
from .game import Role, RoleAssignment
from .metrics import (
    Scheme,
    delta_prior_trace,
    exact_match,
    mean,
    role_round_score,
    score_exact_match,
    score_role_inference,
    score_topk,
)
from .parsers import RankedPrediction, ReplacementMap, RoleMap, player_label
from .protocol import RunRecord, TaskKind
from .session import Session


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, indent=2) + "\n"


def digest(obj: Any) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


# --- record (de)serialization --------------------------------------------------------


def _truth_json(kind: TaskKind, target) -> Any:
    if kind is TaskKind.PLAYER_ID:
        return target
    if kind is TaskKind.ROLE:
        return {str(p): r.value for p, r in target.as_dict().items()}
    return {str(k): list(v) for k, v in sorted(target.entries.items())}


def _prediction_json(kind: TaskKind, pred) -> Any:
    if pred is None:
        return None
    if kind is TaskKind.PLAYER_ID:
        return {"top1": pred.top1, "top3": list(pred.top3)}
    if kind is TaskKind.ROLE:
        return {str(p): r.value for p, r in sorted(pred.entries.items())}
    return {str(k): list(v) for k, v in sorted(pred.entries.items())}


def _truth_obj(kind: str, raw):
    if kind == TaskKind.PLAYER_ID.value:
        return int(raw)
    if kind == TaskKind.ROLE.value:
        return RoleAssignment.from_mapping({int(k): v for k, v in raw.items()})
    return ReplacementMap({int(k): tuple(v) for k, v in raw.items()})


def _prediction_obj(kind: str, raw):
    if raw is None:
        return None
    if kind == TaskKind.PLAYER_ID.value:
        return RankedPrediction(raw["top1"], tuple(raw["top3"]))
    if kind == TaskKind.ROLE.value:
        return RoleMap({int(k): Role(v) for k, v in raw.items()})
    return ReplacementMap({int(k): tuple(v) for k, v in raw.items()})


def make_records(
    run: Sequence[RunRecord],
    sessions: Mapping[str, Session],
    provider: EmbeddingProvider | None = None,
) -> list[dict]:
    baseline_cache: dict[str, int] = {}
    out = []
    for rec in run:
        inst = rec.instance
        row: dict[str, Any] = {
            "instance_id": inst.instance_id,
            "kind": inst.kind.value,
            "session_id": inst.session_id,
            "condition": inst.flags.condition,
            "round_index": inst.flags.round_index,
            "position": list(inst.position) if inst.position else None,
            "scored": inst.scored,
            "lang": inst.lang,
            "truth": _truth_json(inst.kind, inst.target),
            "prediction": _prediction_json(inst.kind, rec.prediction),
            "error": rec.error,
            "attempts": rec.attempts,
        }
        if inst.kind is TaskKind.PLAYER_ID:
            perm = inst.flags.permutation
            row["permutation"] = list(perm)
            if provider is not None:
                sid = inst.session_id
                if sid not in baseline_cache:
                    baseline_cache[sid] = rank_players(provider, sessions[sid]).top1
                row["baseline_top1"] = player_label(perm[baseline_cache[sid] - 1])
        out.append(row)
    return out


def write_records(path: str | Path, records: Iterable[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n" for r in records), "utf-8")


def load_records(directory: str | Path) -> list[dict]:
    directory = Path(directory)
    files = sorted(directory.glob("*.jsonl")) if directory.is_dir() else []
    records = []
    for f in files:
        records += [json.loads(line) for line in f.read_text("utf-8").splitlines() if line.strip()]
    if not records:
        raise IoError(f"no records found in {directory.resolve()}")
    return records


# --- aggregation ---------------------------------------------------------------------


@dataclass(frozen=True)
class ReportRow:
    task: str
    condition: str
    scheme: str
    metric: str
    value: float
    n: int

    def as_dict(self, backend: str) -> dict:
        return {
            "backend": backend,
            "task": self.task,
            "condition": self.condition,
            "scheme": self.scheme,
            "metric": self.metric,
            "value": round(self.value, 6),
            "n": self.n,
        }


def _by(records: Iterable[dict], *keys: str) -> dict[tuple, list[dict]]:
    groups: dict[tuple, list[dict]] = defaultdict(list)
    for r in records:
        groups[tuple(r[k] for k in keys)].append(r)
    return dict(sorted(groups.items(), key=lambda kv: tuple(str(x) for x in kv[0])))


def compute_rows(
    records: Sequence[dict], *, weighting: str = "linear", zero_violations: bool = False
) -> list[ReportRow]:
    rows: list[ReportRow] = []
    kinds = _by(records, "kind")

    pid = kinds.get(("player_id",), [])
    if pid:
        preds = [_prediction_obj("player_id", r["prediction"]) for r in pid]
        truths = [int(r["truth"]) for r in pid]
        topk = score_topk(preds, truths)
        rows += [
            ReportRow("player_id", "all", "-", "top1_acc", topk.top1, topk.n),
            ReportRow("player_id", "all", "-", "top3_acc", topk.top3, topk.n),
        ]
        with_base = [(p, r) for p, r in zip(preds, pid) if "baseline_top1" in r]
        if with_base:
            agree = [p is not None and p.top1 == r["baseline_top1"] for p, r in with_base]
            rows.append(ReportRow("player_id", "all", "-", "bert_match", mean(agree), len(agree)))
            base_hits = [r["baseline_top1"] == player_label(int(r["truth"])) for _, r in with_base]
            rows.append(ReportRow("player_id", "all", "-", "baseline_top1_acc", mean(base_hits), len(base_hits)))

    for kind in ("reflection", "trace"):
        per_cond: dict[str, dict[str, float]] = {}
        for (cond,), group in _by(kinds.get((kind,), []), "condition").items():
            group = [r for r in group if r["scored"]]
            if not group:
                continue
            em = score_exact_match(
                [_prediction_obj(kind, r["prediction"]) for r in group],
                [_truth_obj(kind, r["truth"]) for r in group],
            )
            rows.append(ReportRow(kind, cond, "-", "exact_match", em.accuracy, em.n))
            rows.append(ReportRow(kind, cond, "-", "per_mask_acc", em.per_mask_accuracy, em.n_masks))
            keys = {(r["session_id"], tuple(r["position"] or ()), r["round_index"]) for r in group}
            per_cond[cond] = {"acc": em.accuracy, "keys": keys, "n": em.n}
        if kind == "trace" and "base" in per_cond and "prior" in per_cond:
            b, p = per_cond["base"], per_cond["prior"]
            d = delta_prior_trace(b["acc"], p["acc"], b["keys"], p["keys"])
            rows.append(ReportRow("trace", "prior-base", "-", "delta", d, p["n"]))

    role = kinds.get(("role",), [])
    for (mode,), group in _by(role, "condition").items():
        sessions = _by(group, "session_id")
        for scheme in Scheme:
            scores = []
            for (_sid,), rounds in sessions.items():
                rounds = sorted(rounds, key=lambda r: r["round_index"])
                truth = _truth_obj("role", rounds[0]["truth"])
                preds = [_prediction_obj("role", r["prediction"]) for r in rounds]
                scores.append(
                    score_role_inference(preds, truth, scheme, weighting, zero_violations=zero_violations)
                )
            rows.append(ReportRow("role", mode, scheme.value, "weighted_acc", mean(scores), len(scores)))
        violations = sum(
            1
            for r in group
            if r["prediction"] is not None and not _prediction_obj("role", r["prediction"]).composition_ok
        )
        rows.append(ReportRow("role", mode, "-", "composition_violations", float(violations), len(group)))

    errors = defaultdict(int)
    for r in records:
        if r["error"]:
            errors[(r["kind"], r["error"])] += 1
    for (kind, err), count in sorted(errors.items()):
        rows.append(ReportRow(kind, "all", "-", f"errors[{err}]", float(count), count))
    return rows


# --- emitters ----------------------------------------------------------------------


def _fmt(v: float | None) -> str:
    return "-" if v is None else f"{v:.3f}"


def markdown_report(rows: Sequence[ReportRow], backend: str, manifest_digest: str) -> str:
    idx = {(r.task, r.condition, r.scheme, r.metric): r.value for r in rows}
    stamp = f"_manifest {manifest_digest[:16]}_"
    out = [f"# Evaluation report ({backend})", ""]

    if any(r.task == "player_id" for r in rows):
        out += [
            "## Player identification",
            stamp,
            "",
            "| Backend | Top-1 Acc. | Top-3 Acc. | BERT Match |",
            "|---|---|---|---|",
            f"| {backend} | {_fmt(idx.get(('player_id', 'all', '-', 'top1_acc')))} "
            f"| {_fmt(idx.get(('player_id', 'all', '-', 'top3_acc')))} "
            f"| {_fmt(idx.get(('player_id', 'all', '-', 'bert_match')))} |",
        ]
        if ("player_id", "all", "-", "baseline_top1_acc") in idx:
            out.append(f"| embedding baseline | {_fmt(idx[('player_id', 'all', '-', 'baseline_top1_acc')])} | - | - |")
        out.append("")

    if any(r.task == "reflection" for r in rows):
        out += [
            "## Reflection alignment (exact match)",
            stamp,
            "",
            "| Backend | Full Game Data | No Strategy Traces |",
            "|---|---|---|",
            f"| {backend} | {_fmt(idx.get(('reflection', 'full', '-', 'exact_match')))} "
            f"| {_fmt(idx.get(('reflection', 'no_traces', '-', 'exact_match')))} |",
            "",
        ]

    if any(r.task == "trace" for r in rows):
        delta = idx.get(("trace", "prior-base", "-", "delta"))
        out += [
            "## Trace attribution (exact match)",
            stamp,
            "",
            "| Backend | Base | + Prior Trace | Δ |",
            "|---|---|---|---|",
            f"| {backend} | {_fmt(idx.get(('trace', 'base', '-', 'exact_match')))} "
            f"| {_fmt(idx.get(('trace', 'prior', '-', 'exact_match')))} "
            f"| {'-' if delta is None else f'{delta:+.3f}'} |",
            "",
        ]

    modes = sorted({r.condition for r in rows if r.task == "role"})
    if modes:
        out += [
            "## Role inference (weighted accuracy)",
            stamp,
            "",
            "| Scheme | " + " | ".join(f"Mode {m}" for m in modes) + " |",
            "|---|" + "---|" * len(modes),
        ]
        for scheme in Scheme:
            cells = [_fmt(idx.get(("role", m, scheme.value, "weighted_acc"))) for m in modes]
            out.append(f"| {scheme.value} | " + " | ".join(cells) + " |")
        out.append("")
    return "\n".join(out)


def write_reports(
    out_dir: str | Path, rows: Sequence[ReportRow], backend: str, manifest: Mapping
) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    mdigest = digest(manifest)
    dict_rows = [r.as_dict(backend) for r in rows]

    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=[*dict_rows[0].keys(), "manifest"] if dict_rows else ["manifest"])
    writer.writeheader()
    for r in dict_rows:
        writer.writerow({**r, "manifest": mdigest})
    paths = {
        "csv": out_dir / "report.csv",
        "json": out_dir / "report.json",
        "md": out_dir / "report.md",
    }
    paths["csv"].write_text(buf.getvalue(), "utf-8")
    paths["json"].write_text(canonical_json({"manifest_digest": mdigest, "rows": dict_rows}), "utf-8")
    paths["md"].write_text(markdown_report(rows, backend, mdigest) + "\n", "utf-8")
    return paths


def per_record_flags(record: dict) -> dict:
    """Per-scheme correctness for a single record, for inspection and audits."""
    kind = record["kind"]
    pred = _prediction_obj(kind, record["prediction"])
    truth = _truth_obj(kind, record["truth"])
    if kind == "player_id":
        return {
            "top1": pred is not None and pred.top1_id == truth,
            "top3": pred is not None and truth in pred.top3_ids,
        }
    if kind == "role":
        return {s.value: role_round_score(pred, truth, s) for s in Scheme}
    m = exact_match(pred, truth)
    return {"exact": m.correct, "reason": m.reason}

