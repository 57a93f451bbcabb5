"""Run the full pipeline (simulate, build profile, run all tasks, report) into one directory.

    python3 scripts/run_pipeline.py runs/demo --backend mock:oracle
    python3 scripts/run_pipeline.py runs/rand --backend mock:random:3 --lang en
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from inmind import cli


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("run", help="output run directory")
    ap.add_argument("--backend", default="mock:oracle")
    ap.add_argument("--config", help="optional JSON config with simulation/run/backend sections")
    ap.add_argument("--seed", default="0")
    ap.add_argument("--lang", default="zh", choices=["zh", "en"])
    args = ap.parse_args()

    config = ["--config", args.config] if args.config else []
    steps = [
        ["simulate", "--out", args.run, "--seed", args.seed, *config],
        [
            "run",
            "--run",
            args.run,
            "--backend",
            args.backend,
            "--lang",
            args.lang,
            "--build-profile",
            "--tasks",
            "player_id,reflection,trace,role",
            "--conditions",
            "full,no-traces,base,prior",
            "--modes",
            "A,B,C,D",
            *config,
        ],
        ["report", "--run", args.run],
    ]
    for argv in steps:
        code = cli.main(argv)
        if code != 0:
            return code
    print((Path(args.run) / "reports" / "report.md").read_text("utf-8"))
    return 0


if __name__ == "__main__":
    sys.exit(main())
