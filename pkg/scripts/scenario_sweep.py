#!/usr/bin/env python3
"""Scenario-count sweep: retrain every model on the k largest scenarios for several k.

Uses a skewed synthetic dataset unless --processed points at a prepared one.
Writes sweep.csv, sweep_tracked.csv and sweep.json under --out.
"""
import argparse

from msrbench.bench import SweepPlan, run_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--processed", help="prepared dataset directory")
    ap.add_argument("--rows", type=int, default=50_000)
    ap.add_argument("--ks", default="3,4,5")
    ap.add_argument("--models", default="all")
    ap.add_argument("--epochs", type=int, default=3)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="runs/sweep")
    args = ap.parse_args()

    ks = [int(k) for k in args.ks.split(",")]
    dataset = ({"processed": args.processed} if args.processed else
               {"synthetic": {"S": max(ks) + 2, "n_rows": args.rows, "seed": 0,
                              "weights": list(range(max(ks) + 2, 0, -1))}})
    plan = SweepPlan(dataset=dataset, ks=ks, models=args.models.split(","), out=args.out,
                     train={"batch_size": 1024, "max_epochs": args.epochs})
    res = run_sweep(plan, jobs=args.jobs)
    for k, kept in res["kept_scenarios"].items():
        print(f"k={k} keeps scenarios {kept}")
    print(open(f"{args.out}/sweep_tracked.csv").read(), end="")
    print(f"{res['failed']} failed runs")


if __name__ == "__main__":
    main()
