#!/usr/bin/env python3
"""Verified fraction as a function of the perturbation radius.

Runs the verifier over a sweep of l-inf budgets for each bounding method and
tabulates how many instances get certified, falsified, or time out.  Either
point it at an existing model/dataset pair or let it train a fresh toy model
on synthetic rings.

    python scripts/eps_sweep.py --eps-max 0.1 --steps 5 --time-limit 1.0
"""

import argparse
import csv
import pathlib

import numpy as np

from pnverify.cli import run_verify
from pnverify.modelio import load_dataset_csv, load_model, synthetic_rings, toy_train


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--model", type=pathlib.Path, default=None, help="model file (default: train a toy net)")
    ap.add_argument("--data", type=pathlib.Path, default=None, help="CSV dataset (required with --model)")
    ap.add_argument("--n", type=int, default=20, help="ring points when training the default toy net")
    ap.add_argument("--dim", type=int, default=4)
    ap.add_argument("--eps-min", type=float, default=0.01)
    ap.add_argument("--eps-max", type=float, default=0.08)
    ap.add_argument("--steps", type=int, default=5)
    ap.add_argument("--methods", nargs="+", default=["ibp", "alpha"], choices=("ibp", "alpha", "alpha-nu"))
    ap.add_argument("--time-limit", type=float, default=2.0, help="seconds per (instance, class)")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=pathlib.Path, default=None, help="optional CSV output")
    args = ap.parse_args()

    if args.model is not None:
        if args.data is None:
            ap.error("--data is required when --model is given")
        net = load_model(args.model)
        ds = load_dataset_csv(args.data)
    else:
        ds = synthetic_rings(args.n, args.dim, band=0.12, seed=args.seed)
        net = toy_train(ds, (2, 8), epochs=1200, lr=0.3, seed=args.seed)

    rows = []
    print(f"{'eps':>8}{'method':>10}{'verified':>10}{'falsified':>11}{'timeout':>9}")
    for eps in np.linspace(args.eps_min, args.eps_max, args.steps):
        for method in args.methods:
            report = run_verify(net, ds, float(eps), bound=method, time_limit=args.time_limit, seed=args.seed)
            row = {
                "eps": float(eps),
                "method": method,
                "verified": report.count("verified"),
                "falsified": report.count("falsified"),
                "timeout": report.count("timeout"),
                "instances": report.total,
            }
            rows.append(row)
            print(f"{eps:>8.4f}{method:>10}{row['verified']:>10}{row['falsified']:>11}{row['timeout']:>9}")

    if args.out is not None:
        with open(args.out, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["eps", "method", "verified", "falsified", "timeout", "instances"])
            writer.writeheader()
            writer.writerows(rows)
        print(f"wrote {len(rows)} rows to {args.out}")


if __name__ == "__main__":
    main()
