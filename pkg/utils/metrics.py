"""
Metrics log: one JSON object per line, appended after every evaluation.

Keys are written sorted so that two seeded runs produce byte-identical logs
(wall_time stays null unless explicitly requested).
"""

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Optional

from core.error_handler import ValidationError

logger = logging.getLogger(__name__)


METRICS_FILE = "metrics.jsonl"


@dataclass
class MetricsRecord:
    examples_seen: int
    train_accuracy: float
    test_accuracy: float
    mean_loss_or_bound: float
    wall_time: Optional[float] = None

    def __post_init__(self):
        for name in ("train_accuracy", "test_accuracy"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1], got {value!r}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def log_metrics(path: Path, record: MetricsRecord) -> None:
    """Append one record to the JSONL file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a", encoding="utf-8", newline="\n") as f:
        f.write(record.to_json() + "\n")


def load_metrics(path: Path) -> List[MetricsRecord]:
    """Read every record; malformed lines are logged and skipped."""
    path = Path(path)
    if not path.exists():
        return []
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for line_num, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(MetricsRecord(**json.loads(line)))
            except (json.JSONDecodeError, TypeError, ValidationError) as e:
                logger.warning(f"Skipping malformed metrics line {line_num} in {path}: {e}")
    return records
