"""synth: write the configured synthetic dataset as event files plus a manifest."""

import logging

from utils.datasets import SpikeDataset, export_dataset
from utils.events import FORMAT_BINARY, FORMAT_TEXT

logger = logging.getLogger(__name__)


def setup(subparsers):
    parser = subparsers.add_parser("synth", help="Generate a synthetic event-file dataset")
    parser.add_argument("directory", help="Destination directory")
    parser.add_argument("--period", type=int, default=1000, help="Microseconds per step")
    parser.add_argument("--format", choices=(FORMAT_TEXT, FORMAT_BINARY), default=FORMAT_TEXT)
    parser.set_defaults(handler=run)


def run(args, config) -> int:
    section = dict(config.get("dataset"))
    section["source"] = "synthetic"
    dataset = SpikeDataset.from_config(section, seed=config.get("seed"))
    path = export_dataset(dataset, args.directory, args.period, args.format)
    print(f"manifest: {path}")
    return 0
