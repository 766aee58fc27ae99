"""Run gen -> stats -> filter -> hardness -> manifest -> plan -> report in one workdir.

Usage: python scripts/run_pipeline.py WORKDIR [--scenes N] [--size S] [--classes K] [--seed SEED]
"""

import argparse
import sys
from pathlib import Path

from maskcurate.cli import run


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("workdir", type=Path)
    ap.add_argument("--scenes", type=int, default=32)
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--classes", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n-max", type=int, default=20)
    args = ap.parse_args(argv)

    d = args.workdir
    synth, stats, hard = d / "synth", d / "stats.json", d / "hardness.csv"
    k = str(args.classes)
    steps = [
        ["gen", "--out", str(synth), "--scenes", str(args.scenes), "--size", str(args.size),
         "--classes", k, "--seed", str(args.seed)],
        ["stats", "--root", str(synth), "--classes", k, "--out", str(stats), "--deterministic"],
        ["filter", "--root", str(synth), "--stats", str(stats), "--out", str(d / "filtered")],
        ["hardness", "--root", str(synth), "--stats", str(stats), "--out", str(hard)],
        ["manifest", "--hardness", str(hard), "--n-max", str(args.n_max), "--seed", str(args.seed),
         "--out", str(d / "manifest.json")],
        ["plan", "--manifest", str(d / "manifest.json"), "--root", str(synth), "--mode", "joint",
         "--seed", str(args.seed), "--out", str(d / "plan_joint.jsonl")],
        ["plan", "--manifest", str(d / "manifest.json"), "--root", str(synth), "--mode", "pretrain",
         "--out", str(d / "plan_pretrain.jsonl")],
        ["report", "--stats", str(stats), "--hardness", str(hard),
         "--filter-report", str(d / "filtered" / "report.json"), "--n-max", str(args.n_max),
         "--out", str(d / "report")],
    ]
    for step in steps:
        print("maskcurate", " ".join(step))
        code = run(step)
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
