"""
Labelled collections of exogenous spike records.

Two sources:
- synthetic: one jittered, noisy prototype pattern per class (desk-scale stand-in
  for event-camera recordings)
- manifest: a JSON document listing event files with labels and splits, each file
  turned into a record through load_events -> crop_and_bin -> flatten
"""

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from core.error_handler import ConfigError, ValidationError
from core.utils import atomic_write_text, make_rng
from utils.events import (
    DEFAULT_DURATION_CAP,
    POLARITY_BINARY,
    POLARITY_PER_SIGN,
    EventStream,
    crop_and_bin,
    flatten,
    load_events,
    rebin,
    save_events,
)
from utils.network import SpikeRecord

logger = logging.getLogger(__name__)


SPLIT_TRAIN = "train"
SPLIT_TEST = "test"
SYNTHETIC_PREFIX = "synthetic:"

DEFAULT_NOISE = 0.05
DEFAULT_ACTIVITY = 0.5


@dataclass
class ManifestEntry:
    ref: str
    label: int
    split: str = SPLIT_TRAIN


@dataclass
class DatasetManifest:
    """
    Example references with labels and split.

    binning holds crop/period/duration_cap/polarity/sensor/origin for event-file datasets.
    """
    examples: List[ManifestEntry]
    class_count: int
    seed: int = 0
    binning: Dict = field(default_factory=dict)
    root: str = "."

    def __post_init__(self):
        if self.class_count < 1:
            raise ValidationError(f"class_count must be positive, got {self.class_count}")
        for entry in self.examples:
            if not 0 <= entry.label < self.class_count:
                raise ValidationError(f"Label {entry.label} of '{entry.ref}' outside [0, {self.class_count})")
            if entry.split not in (SPLIT_TRAIN, SPLIT_TEST):
                raise ValidationError(f"Unknown split '{entry.split}' for '{entry.ref}'")

    def resolve(self, ref: str) -> str:
        return ref if os.path.isabs(ref) else os.path.join(self.root, ref)

    def as_dict(self) -> Dict:
        return {
            "class_count": self.class_count,
            "seed": self.seed,
            "binning": self.binning,
            "examples": [{"path": e.ref, "label": e.label, "split": e.split} for e in self.examples],
        }


def load_manifest(path: str) -> DatasetManifest:
    """
    Read a manifest; relative paths resolve against the manifest's directory.

    Raises:
        ConfigError: unreadable document or missing event files
    """
    if not os.path.exists(path):
        raise ConfigError(f"Manifest not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Manifest {path} is not valid JSON: {e}")
    try:
        entries = [ManifestEntry(str(item["path"]), int(item["label"]), item.get("split", SPLIT_TRAIN))
                   for item in data.get("examples", [])]
        manifest = DatasetManifest(entries, int(data["class_count"]), int(data.get("seed", 0)),
                                   dict(data.get("binning", {})), os.path.dirname(os.path.abspath(path)))
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"Malformed manifest {path}: {e}")
    missing = [e.ref for e in manifest.examples if not os.path.exists(manifest.resolve(e.ref))]
    if missing:
        raise ConfigError(f"Manifest {path} references missing files: {missing[:5]}")
    return manifest


def save_manifest(manifest: DatasetManifest, path: str) -> None:
    atomic_write_text(path, json.dumps(manifest.as_dict(), indent=4, sort_keys=True) + "\n")


def _prototype_channels(rng, classes: int, inputs: int, activity: float, disjoint: bool) -> List[np.ndarray]:
    if disjoint:
        return [np.sort(part) for part in np.array_split(rng.permutation(inputs), classes)]
    active = []
    for _ in range(classes):
        mask = rng.random(inputs) < activity
        if not mask.any():
            mask[rng.integers(inputs)] = True
        active.append(np.flatnonzero(mask))
    return active


def synthesize_patterns(
    classes: int,
    inputs: int,
    horizon: int,
    jitter: int,
    seed: int,
    train_examples: int = 1000,
    test_examples: int = 200,
    noise: float = DEFAULT_NOISE,
    activity: float = DEFAULT_ACTIVITY,
    disjoint: bool = False,
) -> Tuple[DatasetManifest, List[SpikeRecord], List[SpikeRecord]]:
    """
    Draw one prototype per class and jittered, noisy examples of it.

    Each active channel of a prototype carries one spike. In an example the spike is
    deleted with probability noise, otherwise shifted uniformly by up to +-jitter steps
    (kept inside the window); every inactive channel gets a spurious spike with
    probability noise.

    Returns:
        (manifest, examples, prototypes); examples[k] belongs to manifest.examples[k]

    Raises:
        ValidationError: fewer than 2 classes, or horizon <= 2 * jitter
    """
    if classes < 2:
        raise ValidationError(f"Need at least 2 classes, got {classes}")
    if inputs < 1:
        raise ValidationError(f"Need at least one input channel, got {inputs}")
    if jitter < 0 or horizon <= 2 * jitter:
        raise ValidationError(f"Horizon {horizon} too small for jitter {jitter}")
    if not 0.0 <= noise <= 1.0 or not 0.0 < activity <= 1.0:
        raise ValidationError(f"noise must be in [0, 1] and activity in (0, 1], got {noise}, {activity}")

    rng = make_rng(seed)
    active = _prototype_channels(rng, classes, inputs, activity, disjoint)
    prototypes, times = [], []
    for channels in active:
        spike_times = rng.integers(jitter, horizon - jitter, size=len(channels))
        spikes = np.zeros((inputs, horizon), dtype=np.uint8)
        spikes[channels, spike_times] = 1
        prototypes.append(SpikeRecord(spikes))
        times.append(spike_times)

    entries, examples = [], []
    for index in range(train_examples + test_examples):
        label = index % classes
        channels = active[label]
        spikes = np.zeros((inputs, horizon), dtype=np.uint8)
        kept = rng.random(len(channels)) >= noise
        shift = rng.integers(-jitter, jitter + 1, size=len(channels))
        shifted = np.clip(times[label] + shift, 0, horizon - 1)
        spikes[channels[kept], shifted[kept]] = 1
        inactive = np.setdiff1d(np.arange(inputs), channels)
        spurious = inactive[rng.random(len(inactive)) < noise]
        spikes[spurious, rng.integers(0, horizon, size=len(spurious))] = 1
        split = SPLIT_TRAIN if index < train_examples else SPLIT_TEST
        entries.append(ManifestEntry(f"{SYNTHETIC_PREFIX}{index}", label, split))
        examples.append(SpikeRecord(spikes))

    manifest = DatasetManifest(entries, classes, seed)
    logger.info(f"Synthesized {len(examples)} examples: {classes} classes, {inputs} inputs, T={horizon}")
    return manifest, examples, prototypes


@dataclass
class SpikeDataset:
    """In-memory exogenous records with labels and a train/test split."""
    records: List[SpikeRecord]
    labels: List[int]
    splits: List[str]
    class_count: int

    def __post_init__(self):
        if not (len(self.records) == len(self.labels) == len(self.splits)):
            raise ValidationError("records, labels and splits must have equal length")
        shapes = {(r.rows, r.horizon) for r in self.records}
        if len(shapes) > 1:
            raise ValidationError(f"All records must share one shape, got {sorted(shapes)}")

    def __len__(self) -> int:
        return len(self.records)

    @property
    def input_channels(self) -> int:
        return self.records[0].rows if self.records else 0

    @property
    def horizon(self) -> int:
        return self.records[0].horizon if self.records else 0

    def indices(self, split: str) -> List[int]:
        return [k for k, s in enumerate(self.splits) if s == split]

    def subset(self, split: str) -> "SpikeDataset":
        keep = self.indices(split)
        return SpikeDataset([self.records[k] for k in keep], [self.labels[k] for k in keep],
                            [split] * len(keep), self.class_count)

    def class_counts(self) -> np.ndarray:
        return np.bincount(np.asarray(self.labels, dtype=np.int64), minlength=self.class_count)

    def coarsen(self, factor: int) -> "SpikeDataset":
        """Every record rebinned by factor."""
        return SpikeDataset([rebin(r, factor) for r in self.records], list(self.labels),
                            list(self.splits), self.class_count)

    @classmethod
    def from_manifest(cls, manifest: DatasetManifest) -> "SpikeDataset":
        """Load, crop, bin and flatten every event file in the manifest."""
        binning = manifest.binning
        if "crop" not in binning or "period" not in binning:
            raise ConfigError("Event-file manifests need binning.crop and binning.period")
        sensor = tuple(binning["sensor"]) if binning.get("sensor") else None
        records = []
        for entry in manifest.examples:
            stream = load_events(manifest.resolve(entry.ref), sensor=sensor)
            frames = crop_and_bin(stream, tuple(binning["crop"]), int(binning["period"]),
                                  binning.get("duration_cap", DEFAULT_DURATION_CAP),
                                  binning.get("polarity", POLARITY_PER_SIGN), binning.get("origin"))
            records.append(flatten(frames))
        return cls(records, [e.label for e in manifest.examples], [e.split for e in manifest.examples],
                   manifest.class_count)

    @classmethod
    def from_config(cls, section: Dict, seed: Optional[int] = None) -> "SpikeDataset":
        """
        Build from the 'dataset' configuration section.

        {"source": "synthetic", "classes", "inputs", "horizon", "jitter", ...} or
        {"source": "manifest", "path": ...}; an optional "rebin" factor coarsens the result.
        """
        source = section.get("source", "synthetic")
        if source == "synthetic":
            manifest, examples, _ = synthesize_patterns(
                int(section.get("classes", 2)), int(section.get("inputs", 20)),
                int(section.get("horizon", 50)), int(section.get("jitter", 2)),
                int(section.get("seed", seed if seed is not None else 0)),
                train_examples=int(section.get("train_examples", 1000)),
                test_examples=int(section.get("test_examples", 200)),
                noise=float(section.get("noise", DEFAULT_NOISE)),
                activity=float(section.get("activity", DEFAULT_ACTIVITY)),
                disjoint=bool(section.get("disjoint", False)),
            )
            dataset = cls(examples, [e.label for e in manifest.examples],
                          [e.split for e in manifest.examples], manifest.class_count)
        elif source == "manifest":
            dataset = cls.from_manifest(load_manifest(section["path"]))
        else:
            raise ConfigError(f"Unknown dataset source '{source}'")
        factor = int(section.get("rebin", 1))
        return dataset.coarsen(factor) if factor != 1 else dataset


def record_to_events(record: SpikeRecord, period: int) -> EventStream:
    """Channel k becomes pixel (x=k, y=0); a spike at step t becomes a +1 event at t * period."""
    steps, channels = np.nonzero(record.spikes.T)
    return EventStream(steps.astype(np.int64) * period, channels.astype(np.int64),
                       np.zeros(len(steps), dtype=np.int64), np.ones(len(steps), dtype=np.int8),
                       (1, record.rows))


def export_dataset(dataset: SpikeDataset, directory: str, period: int = 1000, fmt: str = "text") -> str:
    """
    Write every record as an event file plus manifest.json; loading the manifest
    reproduces the records exactly.

    Returns:
        Path of the manifest
    """
    extension = ".bin" if fmt == "binary" else ".txt"
    os.makedirs(os.path.join(directory, "events"), exist_ok=True)
    entries = []
    for index, (record, label, split) in enumerate(zip(dataset.records, dataset.labels, dataset.splits)):
        ref = os.path.join("events", f"{index:05d}{extension}")
        save_events(record_to_events(record, period), os.path.join(directory, ref), fmt)
        entries.append(ManifestEntry(ref, label, split))
    binning = {
        "crop": [1, dataset.input_channels],
        "sensor": [1, dataset.input_channels],
        "period": period,
        "duration_cap": dataset.horizon * period,
        "polarity": POLARITY_BINARY,
        "origin": 0,
    }
    path = os.path.join(directory, "manifest.json")
    save_manifest(DatasetManifest(entries, dataset.class_count, binning=binning), path)
    logger.info(f"Exported {len(entries)} examples to {directory}")
    return path
