#!/usr/bin/env python3
"""Plot overhead.csv from `simf overhead` as one log-log series per clock and mechanism."""
import argparse
import csv
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("csv")
    ap.add_argument("-o", "--out", default="overhead.png")
    args = ap.parse_args()

    series = defaultdict(list)
    with open(args.csv, newline="") as f:
        for row in csv.DictReader(f):
            key = (int(row["clock_hz"]), row["mechanism"])
            series[key].append((int(row["flush_hz"]), float(row["overhead"])))

    fig, ax = plt.subplots(figsize=(6, 4))
    for (clock, mech), pts in sorted(series.items()):
        pts.sort()
        ax.plot([p[0] for p in pts], [100 * p[1] for p in pts], marker="o",
                linestyle="-" if mech == "norm" else "--", label=f"{mech} @ {clock / 1e6:g} MHz")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("flush frequency (Hz)")
    ax.set_ylabel("instruction overhead (%)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(args.out, dpi=120)


if __name__ == "__main__":
    main()
