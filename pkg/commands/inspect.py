"""inspect: human-readable summary of a checkpoint."""

import json

from utils.checkpoint import load_checkpoint
from utils.experiment import format_summary, inspect_summary


def setup(subparsers):
    parser = subparsers.add_parser("inspect", help="Summarize a checkpoint")
    parser.add_argument("checkpoint", help="Checkpoint file")
    parser.add_argument("--json", action="store_true", help="Print the summary as JSON")
    parser.set_defaults(handler=run)


def run(args, config) -> int:
    summary = inspect_summary(load_checkpoint(args.checkpoint))
    print(json.dumps(summary, indent=4, sort_keys=True) if args.json else format_summary(summary))
    return 0
