"""Sweep the subject's trace-mention rate and report corpus-level calibration numbers.

For each rate this prints the Evil win rate, the mean number of player mentions
per strategy trace, and the embedding baseline's Top-1 on participant sessions.

    python3 scripts/calibrate_personas.py --sessions 60 --rates 0,1,2,4
"""

from __future__ import annotations

import argparse
from dataclasses import replace
from statistics import mean

from inmind.baseline import TokenHashProvider, rank_players
from inmind.game import Alignment
from inmind.persona import SimConfig, simulate_with_stats


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--sessions", type=int, default=60, help="participant sessions per rate")
    ap.add_argument("--rates", default="0,1,2,4", help="comma-separated trace_mention_rate values")
    args = ap.parse_args()

    provider = TokenHashProvider()
    print("rate\tevil_win\tmentions_per_trace\tbaseline_top1")
    for rate in (float(r) for r in args.rates.split(",")):
        base = SimConfig(seed=args.seed, num_observer_sessions=1, num_participant_sessions=args.sessions)
        cfg = replace(base, subject_persona=replace(base.subject_persona, trace_mention_rate=rate))
        evil, mentions, hits = 0, [], []
        for i in range(1, cfg.total):
            session, stats = simulate_with_stats(cfg, i)
            evil += session.outcome.winner is Alignment.EVIL
            mentions.extend(stats.trace_mentions)
            hits.append(rank_players(provider, session).top1 == session.subject)
        n = cfg.total - 1
        print(f"{rate:g}\t{evil / n:.3f}\t{mean(mentions) if mentions else 0.0:.2f}\t{sum(hits) / n:.3f}")


if __name__ == "__main__":
    main()
