#!/usr/bin/env python3
"""Prepare MovieLens-1M and benchmark models on it with several seeds.

Needs the raw ml-1m files (ratings.dat, users.dat, movies.dat) under --raw
or $SWR_DATA_DIR/movielens.
"""
import argparse
import os
import sys
from pathlib import Path

from msrbench.bench import BenchPlan, run_bench
from msrbench.cli import main as cli


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--raw", default=os.path.join(os.environ.get("SWR_DATA_DIR", "data"), "movielens"))
    ap.add_argument("--processed", default="runs/movielens_processed")
    ap.add_argument("--models", default="single_tower,shared_bottom,mmoe,star")
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="runs/movielens_bench")
    args = ap.parse_args()

    if not (Path(args.processed) / "stats.json").exists():
        code = cli(["prepare", "--manifest", "movielens", "--raw", args.raw, "--out", args.processed])
        if code:
            sys.exit(code)
    plan = BenchPlan(dataset={"processed": args.processed}, models=args.models.split(","),
                     seeds=args.seeds, out=args.out)
    summary = run_bench(plan, jobs=args.jobs)
    print((Path(args.out) / "summary.txt").read_text(), end="")
    sys.exit(4 if summary["failed"] else 0)


if __name__ == "__main__":
    main()
