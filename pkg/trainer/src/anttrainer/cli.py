"""Command line entry points: the protocol worker and finalize mode."""

from __future__ import annotations

import argparse
import json
import sys

import torch


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="anttrainer")
    sub = parser.add_subparsers(dest="command", required=True)

    worker_parser = sub.add_parser("worker", help="serve the evaluation protocol on stdio")
    _dataset_flags(worker_parser)
    worker_parser.add_argument("--epochs", type=int, default=1)
    worker_parser.add_argument("--batch-size", type=int, default=64)
    worker_parser.add_argument("--lr", type=float, default=1e-3)
    worker_parser.add_argument("--cache-dir", default="anttrainer_cache")
    worker_parser.add_argument("--threads", type=int, default=0,
                               help="torch thread cap; 0 keeps the default")

    finalize_parser = sub.add_parser(
        "finalize",
        help="train a chosen architecture longer, with augmentation, and report test accuracy",
    )
    finalize_parser.add_argument("best_json", help="best.json from a search run, or a bare descriptor JSON file")
    _dataset_flags(finalize_parser)
    finalize_parser.add_argument("--epochs", type=int, default=50)
    finalize_parser.add_argument("--test-size", type=int, default=1000)
    finalize_parser.add_argument("--batch-size", type=int, default=64)
    finalize_parser.add_argument("--lr", type=float, default=1e-3)
    finalize_parser.add_argument("--no-augment", action="store_true")

    args = parser.parse_args(argv)
    if args.command == "worker":
        return _run_worker(args)
    return _run_finalize(args)


def _dataset_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dataset", choices=["mnist", "synthetic-digits"],
                        default="synthetic-digits")
    parser.add_argument("--train-size", type=int, default=10_000)
    parser.add_argument("--val-size", type=int, default=1_000)
    parser.add_argument("--data-dir", default="data")
    parser.add_argument("--seed", type=int, default=0)


def _run_worker(args) -> int:
    from .worker import Worker, WorkerConfig

    if args.threads:
        torch.set_num_threads(args.threads)
    config = WorkerConfig(
        dataset=args.dataset,
        train_size=args.train_size,
        val_size=args.val_size,
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        seed=args.seed,
        cache_dir=args.cache_dir,
        data_dir=args.data_dir,
    )
    return Worker(config).run()


def _run_finalize(args) -> int:
    from .data import load_split, load_test_set
    from .descriptor import parse_descriptor
    from .model import build_model
    from .training import accuracy, augment, train_and_score

    with open(args.best_json) as fh:
        payload = json.load(fh)
    raw = payload.get("descriptor", payload)  # accept best.json or bare descriptor
    descriptor = parse_descriptor(raw)

    torch.manual_seed(args.seed)
    train_x, train_y, val_x, val_y = load_split(
        args.dataset, args.train_size, args.val_size, args.seed, args.data_dir
    )
    test_x, test_y = load_test_set(args.dataset, args.test_size, args.seed, args.data_dir)

    if not args.no_augment:
        train_x = augment(train_x, args.seed)
    model = build_model(descriptor)
    report = train_and_score(
        model, train_x, train_y, val_x, val_y,
        epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
        seed=args.seed, keep_best_weights=True,
    )
    test_accuracy = accuracy(model, test_x, test_y)
    print(json.dumps(
        {
            "best_val_accuracy": report.best_val_accuracy,
            "test_accuracy": test_accuracy,
            "epochs": report.epochs,
        },
        indent=2,
    ))
    return 0


if __name__ == "__main__":
    sys.exit(main())
