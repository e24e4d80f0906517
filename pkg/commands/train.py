"""train: run the seeded training loop described by the configuration."""

import logging

from utils.experiment import train

logger = logging.getLogger(__name__)


def setup(subparsers):
    parser = subparsers.add_parser("train", help="Train a network and write checkpoint + metrics")
    parser.add_argument("--output", help="Output directory (overrides output.dir)")
    parser.set_defaults(handler=run)


def run(args, config) -> int:
    if args.output:
        config.set("output.dir", args.output)
    result = train(config)
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"metrics:    {result.metrics_path}")
    if result.final is not None:
        print(result.final.format())
    return 0
