"""eval: accuracy and confusion counts of a checkpoint on the configured dataset."""

import logging

from core.error_handler import ValidationError
from utils.checkpoint import load_checkpoint
from utils.datasets import SPLIT_TEST, SPLIT_TRAIN, SpikeDataset
from utils.experiment import EVAL_MODES, evaluate, validate_config

logger = logging.getLogger(__name__)


def setup(subparsers):
    parser = subparsers.add_parser("eval", help="Evaluate a checkpoint")
    parser.add_argument("checkpoint", help="Checkpoint file written by train")
    parser.add_argument("--split", choices=(SPLIT_TRAIN, SPLIT_TEST, "all"), default=SPLIT_TEST)
    parser.add_argument("--mode", choices=EVAL_MODES, help="GLM read-out (overrides eval.mode)")
    parser.set_defaults(handler=run)


def run(args, config) -> int:
    if args.mode:
        config.set("eval.mode", args.mode)
    validate_config(config)
    checkpoint = load_checkpoint(args.checkpoint)
    dataset = SpikeDataset.from_config(config.get("dataset"), seed=config.get("seed"))
    if args.split != "all":
        dataset = dataset.subset(args.split)
    if not len(dataset):
        raise ValidationError(f"No examples in split '{args.split}'")

    result = evaluate(checkpoint.params, checkpoint.topology, checkpoint.hyper, checkpoint.model, dataset,
                      eval_mode=config.get("eval.mode"), seed=config.get("eval.seed"),
                      workers=config.get("eval.workers"))
    logger.info(f"Evaluated {args.checkpoint} on {len(dataset)} examples: accuracy {result.accuracy:.4f}")
    print(result.format())
    return 0
