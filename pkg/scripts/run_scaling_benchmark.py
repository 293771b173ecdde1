#!/usr/bin/env python3
"""Worker-count scaling sweep on a compute-bound configuration.

Trains the same fixed-epoch job at several worker counts (global batch
held constant, so every row does identical optimizer work) and prints
the timing table with the speedup column.  Useful output needs enough
physical cores to actually run replicas in parallel; on ≥4 cores the
4-worker row should land well under the 1-worker wall time.
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from dcnn.benchmark import (
    BenchmarkConfig,
    format_benchmark_table,
    run_benchmark,
    write_benchmark_csv,
)
from dcnn.genome import SimConfig, default_tal1_pwm, generate_dataset
from dcnn.network import ModelConfig
from dcnn.pipeline import SplitSpec, split
from dcnn.training import Dataset


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/scaling", help="output directory")
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--seq-length", type=int, default=1500)
    parser.add_argument("--n-per-class", type=int, default=1100)
    parser.add_argument("--workers", default="1,2,4",
                        help="comma-separated worker counts")
    parser.add_argument("--strategies", default="allreduce",
                        help="comma-separated strategies to sweep")
    parser.add_argument("--epochs", type=int, default=2)
    parser.add_argument("--global-batch", type=int, default=256)
    parser.add_argument("--backend", default="processes",
                        choices=("processes", "threads"))
    args = parser.parse_args()

    os.makedirs(args.out, exist_ok=True)
    worker_counts = tuple(int(w) for w in args.workers.split(","))

    print(f"simulating {2 * args.n_per_class} sequences of length {args.seq_length} ...")
    sim = SimConfig(
        seq_length=args.seq_length,
        n_positive=args.n_per_class,
        n_negative=args.n_per_class,
        seed=args.seed,
    )
    records = generate_dataset(sim, default_tal1_pwm())
    train_recs, test_recs, val_recs = split(records, SplitSpec(seed=args.seed))
    dataset = Dataset(train=train_recs, validation=val_recs, test=test_recs)
    steps = len(train_recs) // args.global_batch
    print(f"{len(train_recs)} train records -> {steps} steps/epoch x {args.epochs} epochs per row")

    config = BenchmarkConfig(
        worker_counts=worker_counts,
        strategies=tuple(args.strategies.split(",")),
        epochs=args.epochs,
        global_batch=args.global_batch,
        seed=args.seed,
        backend=args.backend,
    )

    def progress(row):
        status = row.error or f"{row.wall_seconds:.2f}s"
        print(f"  [{row.strategy} x{row.workers}] {status}", flush=True)

    rows = run_benchmark(
        config, ModelConfig(seq_length=args.seq_length), dataset, progress=progress
    )
    print()
    print(format_benchmark_table(rows))
    csv_path = os.path.join(args.out, "benchmark.csv")
    write_benchmark_csv(rows, csv_path)
    print(f"\nwrote {csv_path}")


if __name__ == "__main__":
    main()
