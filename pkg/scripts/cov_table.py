#!/usr/bin/env python3
"""Coefficient of variation of scenario sizes.

With no argument, prints it for the published per-scenario counts of three datasets;
otherwise for the comma-separated counts given.
"""
import sys

import numpy as np

from msrbench.data import scenario_stats

KNOWN = {
    "movielens": [210747, 395556, 393906],
    "amazon": [198502, 278677, 346355],
    "kuairand": [2407352, 7760237, 895385, 402366, 183403],
}


def main():
    table = {"args": [int(c) for c in sys.argv[1].split(",")]} if len(sys.argv) > 1 else KNOWN
    for name, counts in table.items():
        scen = np.repeat(np.arange(len(counts)), counts)
        print(f"{name:10s} COV {scenario_stats(scenario=scen, n_scenarios=len(counts)).cov:.4f}  counts {counts}")


if __name__ == "__main__":
    main()
