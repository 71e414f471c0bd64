#!/usr/bin/env python3
"""Plot curve CSVs produced by the cirbubble CLI.

Usage: plot_curves.py CURVE.csv [CURVE.csv ...] [--column price|bubble|relative]

Each input file must carry the header D,intrinsic,price,bubble,relative.
Requires matplotlib; without it the script prints a table summary instead.
"""

import argparse
import csv
import sys


def load(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "D" not in rows[0]:
        sys.exit(f"{path}: not a curve file (missing D column)")
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("files", nargs="+")
    ap.add_argument("--column", default="price",
                    choices=["intrinsic", "price", "bubble", "relative"])
    ap.add_argument("--out", help="write the figure to this file instead of showing it")
    args = ap.parse_args()

    curves = {path: load(path) for path in args.files}

    try:
        import matplotlib

        if args.out:
            matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        for path, rows in curves.items():
            ys = [float(r[args.column]) for r in rows]
            print(f"{path}: {len(rows)} rows, {args.column} in "
                  f"[{min(ys):.6g}, {max(ys):.6g}]")
        print("matplotlib not available; printed summaries only", file=sys.stderr)
        return

    fig, ax = plt.subplots()
    for path, rows in curves.items():
        xs = [float(r["D"]) for r in rows]
        ys = [float(r[args.column]) for r in rows]
        ax.plot(xs, ys, label=path)
        if args.column == "price":
            ax.plot(xs, [float(r["intrinsic"]) for r in rows], linestyle="--",
                    label=f"{path} (intrinsic)")
    ax.set_xlabel("D")
    ax.set_ylabel(args.column)
    ax.legend()
    if args.out:
        fig.savefig(args.out, bbox_inches="tight")
    else:
        plt.show()


if __name__ == "__main__":
    main()
