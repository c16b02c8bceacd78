#!/usr/bin/env python3
"""Plot p(t) per mask from a trajectories.csv written by `wfpc simulate` or `wfpc witness`."""

import argparse
import csv
from collections import defaultdict

import matplotlib.pyplot as plt


def load(path):
    series = defaultdict(lambda: ([], []))
    with open(path, newline="") as f:
        rows = csv.DictReader(line for line in f if not line.startswith("#"))
        for row in rows:
            key = (row.get("experiment", ""), int(row["mask_id"]))
            series[key][0].append(float(row["t"]))
            series[key][1].append(float(row["p"]))
    return series


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("csv")
    parser.add_argument("-o", "--output", help="write the figure instead of showing it")
    parser.add_argument("--relative", action="store_true", help="plot p(t) - p(t0)")
    args = parser.parse_args()

    series = load(args.csv)
    experiments = sorted({k[0] for k in series})
    fig, axes = plt.subplots(1, len(experiments), squeeze=False, sharey=True, figsize=(6 * len(experiments), 4))
    for ax, experiment in zip(axes[0], experiments):
        for (exp, mask), (t, p) in sorted(series.items()):
            if exp != experiment:
                continue
            y = [v - p[0] for v in p] if args.relative else p
            ax.plot(t, y, lw=0.8, label=f"mask {mask}")
        ax.set_title(experiment or "simulate")
        ax.set_xlabel("t")
    axes[0][0].set_ylabel("p(t) - p(t0)" if args.relative else "p(t)")
    fig.tight_layout()
    if args.output:
        fig.savefig(args.output, dpi=150)
    else:
        plt.show()


if __name__ == "__main__":
    main()
