#!/usr/bin/env python3
"""
Coarse-sampling robustness report.

Trains both models on the synthetic task twice: at native resolution, and with every
record rebinned 5x coarser and the hidden population halved. Prints and logs the
accuracy drop of each model. This is a report, not a pass/fail check.

Usage: python scripts/robustness_report.py [--seed 0] [--budget 5000] [--out runs/robustness]
"""
import argparse
import json
import logging
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

from core.utils import atomic_write_text
from utils.experiment import DEFAULT_HIDDEN, MODELS, default_config, train

logger = logging.getLogger("robustness_report")

COARSE_FACTOR = 5


def halve(hidden):
    if isinstance(hidden, list):
        return [max(1, h // 2) for h in hidden]
    return max(1, hidden // 2)


def run_model(model: str, seed: int, budget: int, out: Path) -> dict:
    results = {}
    for resolution, factor in (("native", 1), ("coarse", COARSE_FACTOR)):
        config = default_config()
        config.set("model", model)
        config.set("seed", seed)
        config.set("train.examples_budget", budget)
        config.set("train.eval_every", budget)
        config.set("dataset.rebin", factor)
        hidden = DEFAULT_HIDDEN[model]
        config.set("topology.hidden", hidden if factor == 1 else halve(hidden))
        config.set("output.dir", str(out / f"{model}_{resolution}"))
        result = train(config)
        results[resolution] = result.final.accuracy if result.final else 0.0
        logger.info(f"{model} {resolution}: test accuracy {results[resolution]:.4f}")
    results["drop"] = results["native"] - results["coarse"]
    return results


def main():
    parser = argparse.ArgumentParser(description="Accuracy drop under 5x coarser sampling")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--budget", type=int, default=5000)
    parser.add_argument("--out", default="runs/robustness")
    args = parser.parse_args()

    logging.basicConfig(level=logging.INFO, format='%(asctime)s %(levelname)s:%(name)s: %(message)s')
    out = Path(args.out)
    report = {model: run_model(model, args.seed, args.budget, out) for model in MODELS}

    print(f"{'model':6} {'native':>8} {'coarse':>8} {'drop':>8}")
    for model, row in report.items():
        print(f"{model:6} {row['native']:8.4f} {row['coarse']:8.4f} {row['drop']:8.4f}")
    atomic_write_text(str(out / "report.json"), json.dumps(report, indent=4, sort_keys=True) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
