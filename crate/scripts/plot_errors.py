#!/usr/bin/env python3
"""Plot mean edge errors against sample count from `gridtopo experiment` CSVs.

    python3 scripts/plot_errors.py results.csv [more.csv ...] -o errors.png

Each input file becomes one line (mean with a one-standard-deviation band).
Rows with n = "exact" are drawn as a dashed horizontal reference.
"""

import argparse
import csv
import statistics
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def load(path):
    totals = defaultdict(list)
    label = path
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            totals[row["n"]].append(int(row["total"]))
            label = f'{row["grid"]} {row["model"]} {row["algo"]}'
    return label, totals


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("csv", nargs="+")
    parser.add_argument("-o", "--out", default="errors.png")
    args = parser.parse_args()

    fig, ax = plt.subplots(figsize=(6, 4))
    for path in args.csv:
        label, totals = load(path)
        finite = sorted((int(n), v) for n, v in totals.items() if n != "exact")
        if finite:
            ns = [n for n, _ in finite]
            means = [statistics.fmean(v) for _, v in finite]
            stds = [statistics.stdev(v) if len(v) > 1 else 0.0 for _, v in finite]
            line, = ax.plot(ns, means, marker="o", label=label)
            ax.fill_between(ns, [m - s for m, s in zip(means, stds)], [m + s for m, s in zip(means, stds)],
                            color=line.get_color(), alpha=0.15)
        if "exact" in totals:
            ax.axhline(statistics.fmean(totals["exact"]), linestyle="--", color="grey", linewidth=1)

    ax.set_xscale("log")
    ax.set_xlabel("samples n")
    ax.set_ylabel("mean edge errors (FP + FN)")
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
