#!/usr/bin/env python3
"""Train a tiny classifier on synthetic data and verify its robustness.

End-to-end demo of the pipeline: dataset -> CSV -> training -> model file ->
verification report.  Everything is seeded, so a rerun with the same
arguments reproduces the report byte for byte.

    python scripts/toy_experiment.py --dataset rings --dim 4 --eps 0.04
"""

import argparse
import pathlib

from pnverify.cli import run_verify
from pnverify.modelio import (
    save_dataset_csv,
    save_model,
    synthetic_blobs,
    synthetic_rings,
    toy_train,
    training_accuracy,
)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--dataset", choices=("blobs", "rings"), default="blobs")
    ap.add_argument("--n", type=int, default=20, help="points per class (blobs) / total (rings)")
    ap.add_argument("--dim", type=int, default=2)
    ap.add_argument("--spread", type=float, default=0.07, help="cluster spread (blobs)")
    ap.add_argument("--band", type=float, default=0.12, help="empty margin around the boundary (rings)")
    ap.add_argument("--degree", type=int, default=2)
    ap.add_argument("--hidden", type=int, default=8)
    ap.add_argument("--epochs", type=int, default=800)
    ap.add_argument("--lr", type=float, default=0.4)
    ap.add_argument("--eps", type=float, default=0.05)
    ap.add_argument("--bound", choices=("ibp", "alpha", "alpha-nu"), default="alpha")
    ap.add_argument("--time-limit", type=float, default=10.0, help="seconds per (instance, class)")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--outdir", type=pathlib.Path, default=pathlib.Path("toy_run"))
    args = ap.parse_args()

    if args.dataset == "blobs":
        centers = [[0.3] * args.dim, [0.7] * args.dim]
        ds = synthetic_blobs(args.n, centers=centers, spread=args.spread, seed=args.seed)
    else:
        ds = synthetic_rings(args.n, args.dim, band=args.band, seed=args.seed)
    net = toy_train(ds, (args.degree, args.hidden), epochs=args.epochs, lr=args.lr, seed=args.seed)

    args.outdir.mkdir(parents=True, exist_ok=True)
    save_dataset_csv(ds, args.outdir / "data.csv")
    save_model(net, args.outdir / "model.pnm")
    print(f"trained degree-{args.degree} net, training accuracy {training_accuracy(net, ds):.3f}")

    report = run_verify(net, ds, args.eps, bound=args.bound, time_limit=args.time_limit, seed=args.seed)
    (args.outdir / "report.jsonl").write_text(report.jsonl())
    print(f"verification at eps={args.eps} with bound={args.bound}:")
    for status in ("verified", "falsified", "timeout", "misclassified"):
        print(f"  {status:<14} {report.count(status)}/{report.total}")
    print(f"  verified accuracy    {report.verified_accuracy:.3f}")
    print(f"  upper-bound accuracy {report.upper_bound_accuracy:.3f}")
    print(f"wrote data.csv, model.pnm, report.jsonl to {args.outdir}/")


if __name__ == "__main__":
    main()
