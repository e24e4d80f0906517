"""plot: accuracy and loss/bound curves from a metrics log."""

import logging
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from core.error_handler import ValidationError
from utils.metrics import METRICS_FILE, load_metrics

logger = logging.getLogger(__name__)


def setup(subparsers):
    parser = subparsers.add_parser("plot", help="Render metrics.jsonl to PNG")
    parser.add_argument("metrics", nargs="+", help="Metrics files or run directories")
    parser.add_argument("--out", default="metrics.png", help="Output image")
    parser.set_defaults(handler=run)


def plot_runs(paths, out: str) -> str:
    fig, (ax_acc, ax_loss) = plt.subplots(1, 2, figsize=(11, 4))
    for path in paths:
        path = Path(path)
        if path.is_dir():
            path = path / METRICS_FILE
        records = load_metrics(path)
        if not records:
            raise ValidationError(f"No metrics records in {path}")
        seen = [r.examples_seen for r in records]
        label = path.parent.name or str(path)
        ax_acc.plot(seen, [r.test_accuracy for r in records], label=f"{label} test")
        ax_acc.plot(seen, [r.train_accuracy for r in records], linestyle="--", label=f"{label} train")
        ax_loss.plot(seen, [r.mean_loss_or_bound for r in records], label=label)

    ax_acc.set_xlabel("examples seen")
    ax_acc.set_ylabel("accuracy")
    ax_acc.set_ylim(0.0, 1.05)
    ax_acc.legend()
    ax_loss.set_xlabel("examples seen")
    ax_loss.set_ylabel("mean loss / bound")
    ax_loss.legend()
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def run(args, config) -> int:
    out = plot_runs(args.metrics, args.out)
    logger.info(f"Wrote {out}")
    print(out)
    return 0
