#!/usr/bin/env python3
"""Scree plot from the scree.csv written by `farm factors`."""
import argparse
import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def read_scree(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(line for line in f if not line.startswith("#")))
    return [int(r["index"]) for r in rows], [float(r["eigenvalue"]) for r in rows]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("scree", help="scree.csv from farm factors")
    parser.add_argument("--out", default="scree.png")
    parser.add_argument("--top", type=int, default=30, help="number of eigenvalues to show")
    args = parser.parse_args()

    index, values = read_scree(args.scree)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(index[: args.top], values[: args.top], marker="o", markersize=3)
    ax.set_xlabel("component")
    ax.set_ylabel("eigenvalue")
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)


if __name__ == "__main__":
    main()
