#!/usr/bin/env python3
"""Aggregation-strategy comparison at a fixed worker count.

Trains identical jobs under ring all-reduce, parameter server, and
gossip averaging, then compares validation trajectories, final test
quality, and transport volume.  All-reduce and the parameter server
walk the same lockstep trajectory (to floating-point reordering);
gossip is genuinely decentralized and only reaches consensus at the
final averaging.
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from dcnn.genome import SimConfig, default_tal1_pwm, generate_dataset
from dcnn.network import ModelConfig
from dcnn.pipeline import SplitSpec, split
from dcnn.training import Dataset, TrainConfig, evaluate, train


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--seq-length", type=int, default=500)
    parser.add_argument("--n-per-class", type=int, default=600)
    parser.add_argument("--workers", type=int, default=2)
    parser.add_argument("--epochs", type=int, default=6)
    parser.add_argument("--batch-per-replica", type=int, default=32)
    parser.add_argument("--gossip-period", type=int, default=1)
    parser.add_argument("--backend", default="processes",
                        choices=("processes", "threads"))
    args = parser.parse_args()

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
    model_config = ModelConfig(seq_length=args.seq_length)

    results = {}
    for strategy in ("allreduce", "ps", "gossip"):
        config = TrainConfig(
            n_replicas=args.workers,
            strategy=strategy,
            epochs_max=args.epochs,
            batch_per_replica=args.batch_per_replica,
            seed=args.seed,
            early_stopping=False,
            gossip_period=args.gossip_period,
            backend=args.backend,
        )
        params, report = train(config, model_config, dataset)
        final = evaluate(params, dataset.test, model_config)
        results[strategy] = (report, final)
        print(f"  {strategy}: {report.total_wall_seconds:.1f}s, "
              f"{report.total_messages} messages")

    print(f"\nvalidation loss by epoch ({args.workers} workers):")
    header = "epoch " + "".join(f"{s:>11}" for s in results)
    print(header)
    for epoch in range(args.epochs):
        cells = "".join(
            f"{results[s][0].epochs[epoch].val_loss:>11.4f}" for s in results
        )
        print(f"{epoch:>5} {cells}")

    print("\nfinal test metrics and transport volume:")
    print(f"{'strategy':>10} {'loss':>8} {'acc':>7} {'auROC':>7} "
          f"{'messages':>9} {'MiB':>7}")
    for strategy, (report, final) in results.items():
        print(
            f"{strategy:>10} {final['loss']:>8.4f} {final['accuracy']:>7.4f} "
            f"{final['auroc']:>7.4f} {report.total_messages:>9} "
            f"{report.total_bytes / 2**20:>7.2f}"
        )


if __name__ == "__main__":
    main()
