"""Estimate the random backend's chance floor on each task type.

Runs the seeded random mock backend against one instance per task type built
from a synthetic participant session and prints the empirical hit rates.

    python3 scripts/chance_floor.py --trials 6000
"""

from __future__ import annotations

import argparse

from inmind.backends import RandomBackend
from inmind.persona import SimConfig, generate_corpus
from inmind.protocol import (
    StrategyProfile,
    TaskKind,
    build_player_id_task,
    build_reflection_tasks,
    build_trace_tasks,
    parse_response,
)


def hit_rate(instance, kind: TaskKind, trials: int, hit) -> float:
    system, user = instance.prompt()
    return sum(hit(parse_response(kind, RandomBackend(s).complete(system, user))) for s in range(trials)) / trials


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=6000)
    ap.add_argument("--seed", type=int, default=0, help="corpus seed")
    args = ap.parse_args()

    session = generate_corpus(SimConfig(seed=args.seed, num_observer_sessions=1, num_participant_sessions=1)).participant[0]
    profile = StrategyProfile("profile", (), "chance-floor", 0)

    pid = build_player_id_task(profile, session, 0)
    print(f"player_id top1\t{hit_rate(pid, TaskKind.PLAYER_ID, args.trials, lambda p: p.top1_id == pid.target):.4f}\t(1/6)")
    print(f"player_id top3\t{hit_rate(pid, TaskKind.PLAYER_ID, args.trials, lambda p: pid.target in p.top3_ids):.4f}\t(1/2)")

    for name, kind, instances in (
        ("reflection", TaskKind.REFLECTION, build_reflection_tasks(profile, session, "full")),
        ("trace", TaskKind.TRACE, [t for t in build_trace_tasks(profile, session, prior_trace=False) if t.target.entries]),
    ):
        for inst in instances[:3]:
            digits = [len(v) for v in inst.target.entries.values()]
            rate = hit_rate(inst, kind, args.trials, lambda p, t=inst.target: p == t)
            print(f"{name} masks={digits}\t{rate:.4f}")


if __name__ == "__main__":
    main()
