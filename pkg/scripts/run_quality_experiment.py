#!/usr/bin/env python3
"""Desk-scale quality run: simulate a motif-cluster dataset, train a
single-replica model to convergence, and report learning curves plus
held-out test metrics.

Defaults reproduce the quality acceptance run (4000 sequences of length
500, 30-epoch cap) in a few minutes on one core.
"""

import argparse
import json
import os
import sys
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from dcnn.genome import SimConfig, default_tal1_pwm, generate_dataset, write_fasta
from dcnn.network import ModelConfig, save_checkpoint
from dcnn.pipeline import SplitSpec, split
from dcnn.training import (
    Dataset,
    TrainConfig,
    evaluate,
    train,
    write_curves_csv,
    write_report_json,
)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/quality", help="output directory")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--seq-length", type=int, default=500)
    parser.add_argument("--n-per-class", type=int, default=2000)
    parser.add_argument("--epochs", type=int, default=30)
    parser.add_argument("--batch", type=int, default=64)
    parser.add_argument("--precision", default="f32", choices=("f32", "f64"))
    args = parser.parse_args()

    os.makedirs(args.out, exist_ok=True)

    print(f"simulating {2 * args.n_per_class} sequences of length {args.seq_length} ...")
    sim = SimConfig(
        seq_length=args.seq_length,
        n_positive=args.n_per_class,
        n_negative=args.n_per_class,
        seed=args.seed,
    )
    records = generate_dataset(sim, default_tal1_pwm())
    write_fasta(records, os.path.join(args.out, "dataset.fasta"))

    train_recs, test_recs, val_recs = split(records, SplitSpec(seed=args.seed))
    dataset = Dataset(train=train_recs, validation=val_recs, test=test_recs)
    print(f"splits: {len(train_recs)} train / {len(test_recs)} test / {len(val_recs)} validation")

    model_config = ModelConfig(seq_length=args.seq_length)
    config = TrainConfig(
        n_replicas=1,
        epochs_max=args.epochs,
        batch_per_replica=args.batch,
        seed=args.seed,
        precision=args.precision,
    )
    t0 = time.perf_counter()
    params, report = train(config, model_config, dataset)
    elapsed = time.perf_counter() - t0

    print(f"\n{'epoch':>5} {'train':>8} {'val':>8} {'acc':>7} {'auROC':>7} {'auPRC':>7}")
    for row in report.epochs:
        print(
            f"{row.epoch:>5} {row.train_loss:>8.4f} {row.val_loss:>8.4f} "
            f"{row.val_accuracy:>7.4f} {row.val_auroc:>7.4f} {row.val_auprc:>7.4f}"
        )
    print(f"\nstopped after {len(report.epochs)} epochs ({report.stop_reason}), "
          f"{elapsed:.0f}s wall")

    final = evaluate(params, dataset.test, model_config, precision=args.precision)
    print(
        f"test: loss={final['loss']:.4f} accuracy={final['accuracy']:.4f} "
        f"auROC={final['auroc']:.4f} auPRC={final['auprc']:.4f}"
    )

    save_checkpoint(params, model_config, os.path.join(args.out, "model.ckpt"))
    write_report_json(report, os.path.join(args.out, "report.json"))
    write_curves_csv(report, os.path.join(args.out, "curves.csv"))
    with open(os.path.join(args.out, "test_metrics.json"), "w", encoding="utf-8") as fh:
        json.dump({k: final[k] for k in ("loss", "accuracy", "auroc", "auprc")}, fh, indent=2)
        fh.write("\n")
    print(f"artifacts in {args.out}/")


if __name__ == "__main__":
    main()
