"""
Experiment driver shared by the CLI commands and the scripts.

A run is fully determined by its configuration and seed. Independent random streams
are derived from the seed (make_rng(seed, stream)):
    0 - which training example is presented next (drawn with replacement)
    1 - weight initialisation
    2 - hidden-neuron sampling during GLM training
Evaluation uses make_rng(eval.seed, example_index) per example, so its result does not
depend on the number of workers.
"""

import copy
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from core.config import Config
from core.error_handler import ConfigError, RuntimeFailure, ShapeError, ValidationError
from core.utils import make_rng
from utils.checkpoint import Checkpoint, save_checkpoint
from utils.datasets import SPLIT_TEST, SPLIT_TRAIN, SpikeDataset
from utils.encoding import SCHEME_RATE, EncoderSpec, decode_rates, make_target, rate_decode
from utils.learn_glm import CREDIT_MODES, GlmTrainState, train_step_glm
from utils.learn_srm import (
    ERROR_MODES,
    ErrorMode,
    FeedbackProjection,
    UpdateAccumulator,
    apply_updates,
    train_step_srm,
)
from utils.metrics import METRICS_FILE, MetricsRecord, log_metrics
from utils.network import HyperParams, Mode, Parameters, SpikeRecord, init_parameters, run_trajectory
from utils.surrogate import SURROGATE_VARIANTS, SurrogateKind
from utils.topology import GENERATOR_EXPLICIT, GENERATOR_FULLY_CONNECTED, GENERATOR_LAYERED, Topology, build_topology

logger = logging.getLogger(__name__)


MODEL_SRM = "srm"
MODEL_GLM = "glm"
MODELS = (MODEL_SRM, MODEL_GLM)

EVAL_SAMPLE = "sample"
EVAL_EXPECTED = "expected"
EVAL_MODES = (EVAL_SAMPLE, EVAL_EXPECTED)

STREAM_PRESENTATION = 0
STREAM_INIT = 1
STREAM_HIDDEN = 2

CHECKPOINT_FILE = "checkpoint.txt"
CONFIG_FILE = "config.json"

DEFAULT_HIDDEN = {MODEL_SRM: [16], MODEL_GLM: [4]}

# Used when the config leaves the key null. One input spike adds about 100 to sum_t p,
# and a neuron firing at rate r holds p near 113 * r (default taus). A GLM neuron
# starts at sigma(-2) ~ 0.12.
DEFAULT_LEARNING_RATE = {MODEL_SRM: 1e-4, MODEL_GLM: 3e-6}
DEFAULT_INIT_BIAS = {MODEL_SRM: 0.0, MODEL_GLM: -2.0}

DEFAULT_CONFIG = {
    "model": MODEL_SRM,
    "seed": 0,
    "topology": {
        "generator": None,
        "hidden": None,
        "skip_inputs": True,
    },
    "hyper": {
        "tau_mem": 20.0,
        "tau_syn": 5.0,
        "tau_ref": 10.0,
        "threshold": 1.0,
        "bandwidth": 1.0,
    },
    "train": {
        "learning_rate": None,
        "batch_size": 1,
        "examples_budget": 5000,
        "eval_every": 500,
        "learn_bias": None,
        "init_scale": None,
        "init_bias": None,
        "surrogate": {"variant": "sigmoid", "slope": 1.0},
        "error_mode": "readout_direct",
        "feedback_seed": 0,
        "baseline": {"enabled": True, "decay": 0.99},
        "samples_per_example": 1,
        "credit": "same_step",
    },
    "eval": {
        "mode": EVAL_SAMPLE,
        "seed": 1,
        "train_subset": 200,
        "workers": 1,
    },
    "target": {
        "window": None,
        "max_rate": 1.0,
    },
    "dataset": {
        "source": "synthetic",
        "classes": 2,
        "inputs": 20,
        "horizon": 50,
        "jitter": 2,
        "train_examples": 1000,
        "test_examples": 200,
        "noise": 0.05,
        "activity": 0.5,
        "disjoint": True,
        "rebin": 1,
    },
    "output": {
        "dir": "runs/default",
        "wall_time": False,
    },
}


def default_config() -> Config:
    return Config(copy.deepcopy(DEFAULT_CONFIG))


def model_default(config: Config, key: str, table: Dict[str, float]) -> float:
    """config[key], or the model's entry in table when the key is null."""
    value = config.get(key)
    return float(table[config.get("model")] if value is None else value)


def _check_target_count(max_rate: float, window: int) -> None:
    if math.floor(max_rate * window + 1e-9) < 1:
        raise ConfigError(f"target.max_rate {max_rate!r} over a {window}-step target window gives no "
                          f"target spike; raise target.max_rate or the window")


def _positive_int(config: Config, key: str) -> int:
    value = config.get(key)
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigError(f"{key} must be a positive integer, got {value!r}")
    return value


def validate_config(config: Config) -> Config:
    """
    Reject configurations that cannot run.

    Raises:
        ConfigError: naming the offending key and value
    """
    model = config.get("model")
    if model not in MODELS:
        raise ConfigError(f"model must be one of {MODELS}, got {model!r}")
    if not isinstance(config.get("seed"), int):
        raise ConfigError(f"seed must be an integer, got {config.get('seed')!r}")
    try:
        HyperParams.from_dict(config.get("hyper", {}))
        SurrogateKind(config.get("train.surrogate.variant"), float(config.get("train.surrogate.slope")))
    except (ValidationError, TypeError, ValueError) as e:
        raise ConfigError(str(e))

    for key in ("train.batch_size", "train.examples_budget", "train.eval_every",
                "train.samples_per_example", "eval.workers"):
        _positive_int(config, key)
    for key in ("train.learning_rate", "train.init_bias", "train.init_scale"):
        value = config.get(key)
        if value is not None and (isinstance(value, bool) or not isinstance(value, (int, float))
                                  or not math.isfinite(value)):
            raise ConfigError(f"{key} must be null or a finite number, got {value!r}")
    learning_rate = config.get("train.learning_rate")
    if learning_rate is not None and learning_rate < 0:
        raise ConfigError(f"train.learning_rate must be non-negative, got {learning_rate!r}")
    if config.get("train.surrogate.variant") not in SURROGATE_VARIANTS:
        raise ConfigError(f"Unknown surrogate variant {config.get('train.surrogate.variant')!r}")
    if config.get("train.error_mode") not in ERROR_MODES:
        raise ConfigError(f"train.error_mode must be one of {ERROR_MODES}, got {config.get('train.error_mode')!r}")
    if config.get("train.credit") not in CREDIT_MODES:
        raise ConfigError(f"train.credit must be one of {CREDIT_MODES}, got {config.get('train.credit')!r}")
    decay = config.get("train.baseline.decay")
    if not (isinstance(decay, (int, float)) and 0.0 <= decay < 1.0):
        raise ConfigError(f"train.baseline.decay must lie in [0, 1), got {decay!r}")
    if config.get("eval.mode") not in EVAL_MODES:
        raise ConfigError(f"eval.mode must be one of {EVAL_MODES}, got {config.get('eval.mode')!r}")
    max_rate = config.get("target.max_rate")
    if not (isinstance(max_rate, (int, float)) and 0.0 < max_rate <= 1.0):
        raise ConfigError(f"target.max_rate must lie in (0, 1], got {max_rate!r}")
    window = config.get("target.window")
    if window is not None and (isinstance(window, bool) or not isinstance(window, int) or window < 1):
        raise ConfigError(f"target.window must be null or a positive integer, got {window!r}")
    if window is not None:
        _check_target_count(max_rate, window)

    source = config.get("dataset.source")
    if source == "manifest":
        path = config.get("dataset.path")
        if not path or not os.path.exists(path):
            raise ConfigError(f"dataset.path does not exist: {path!r}")
    elif source != "synthetic":
        raise ConfigError(f"dataset.source must be 'synthetic' or 'manifest', got {source!r}")
    generator = config.get("topology.generator")
    if generator not in (None, GENERATOR_FULLY_CONNECTED, GENERATOR_LAYERED, GENERATOR_EXPLICIT):
        raise ConfigError(f"Unknown topology generator {generator!r}")
    return config


def resolve_topology(config: Config, dataset: SpikeDataset) -> Topology:
    """
    Build the network for a dataset: one visible neuron per class and one exogenous
    channel per input row. Explicit graphs must already match these sizes.

    Both models default to a layered graph. In a fully connected GLM the clamped visible
    spikes reach the other visible and the hidden neurons, which carry the label during
    training but not at evaluation.
    """
    model = config.get("model")
    section = dict(config.get("topology", {}))
    generator = section.get("generator") or GENERATOR_LAYERED
    if generator == GENERATOR_EXPLICIT:
        topology = build_topology(section)
        check_dimensions(topology, dataset)
        return topology
    hidden = section.get("hidden")
    if hidden is None:
        hidden = DEFAULT_HIDDEN[model]
    if generator == GENERATOR_FULLY_CONNECTED and isinstance(hidden, list):
        hidden = sum(hidden)
    spec = {
        "generator": generator,
        "visible": dataset.class_count,
        "hidden": hidden,
        "exogenous": dataset.input_channels,
        "skip_inputs": section.get("skip_inputs", False),
    }
    return build_topology(spec)


def check_dimensions(topology: Topology, dataset: SpikeDataset) -> None:
    if topology.exogenous_count != dataset.input_channels:
        raise ShapeError(f"Network has {topology.exogenous_count} exogenous channels, "
                         f"dataset has {dataset.input_channels} input channels")
    if len(topology.visible) != dataset.class_count:
        raise ShapeError(f"Network has {len(topology.visible)} visible neurons, "
                         f"dataset has {dataset.class_count} classes")


def target_records(config: Config, classes: int, horizon: int) -> List[SpikeRecord]:
    """
    One visible target per class. With target.window = w < T the pattern occupies the
    last w steps and the earlier steps stay silent.
    """
    window = config.get("target.window") or horizon
    if window > horizon:
        raise ConfigError(f"target.window {window} exceeds the example horizon {horizon}")
    max_rate = float(config.get("target.max_rate"))
    _check_target_count(max_rate, window)
    spec = EncoderSpec(SCHEME_RATE, window=window, max_rate=max_rate, deterministic=True)
    targets = []
    for label in range(classes):
        spikes = np.zeros((classes, horizon), dtype=np.uint8)
        spikes[:, horizon - window:] = make_target(label, classes, spec).spikes
        targets.append(SpikeRecord(spikes))
    return targets


@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray
    predictions: List[int] = field(default_factory=list)

    def format(self) -> str:
        lines = [f"accuracy = {self.accuracy:.4f}", "confusion (rows: true class, cols: predicted):"]
        lines += ["  " + " ".join(f"{int(v):6d}" for v in row) for row in self.confusion]
        return "\n".join(lines)


def predict(
    record: SpikeRecord,
    params: Parameters,
    topology: Topology,
    hyper: HyperParams,
    model: str,
    eval_mode: str = EVAL_SAMPLE,
    rng=None,
) -> int:
    """Class decoded from the visible neurons' response to one exogenous record."""
    visible = topology.visible_index
    if model == MODEL_SRM:
        trajectory = run_trajectory(params, topology, hyper, record, Mode.DETERMINISTIC)
        return rate_decode(SpikeRecord(trajectory.outputs[visible].astype(np.uint8)))
    if eval_mode == EVAL_EXPECTED:
        trajectory = run_trajectory(params, topology, hyper, record, Mode.EXPECTED)
        return decode_rates(trajectory.outputs[visible])
    trajectory = run_trajectory(params, topology, hyper, record, Mode.STOCHASTIC, rng=rng)
    return rate_decode(SpikeRecord(trajectory.outputs[visible].astype(np.uint8)))


def evaluate(
    params: Parameters,
    topology: Topology,
    hyper: HyperParams,
    model: str,
    dataset: SpikeDataset,
    eval_mode: str = EVAL_SAMPLE,
    seed: int = 1,
    workers: int = 1,
) -> EvalResult:
    """
    Accuracy and confusion counts over every example of the dataset.

    Raises:
        ValidationError: empty dataset
        ShapeError: network and dataset dimensions differ
    """
    if not len(dataset):
        raise ValidationError("Cannot evaluate on an empty dataset")
    check_dimensions(topology, dataset)

    def run(index: int) -> int:
        return predict(dataset.records[index], params, topology, hyper, model, eval_mode, make_rng(seed, index))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            predictions = list(pool.map(run, range(len(dataset))))
    else:
        predictions = [run(k) for k in range(len(dataset))]

    confusion = np.zeros((dataset.class_count, dataset.class_count), dtype=np.int64)
    for label, predicted in zip(dataset.labels, predictions):
        confusion[label, predicted] += 1
    accuracy = float(np.trace(confusion)) / len(dataset)
    return EvalResult(accuracy, confusion, predictions)


@dataclass
class Experiment:
    config: Config
    dataset: SpikeDataset
    topology: Topology
    hyper: HyperParams
    targets: List[SpikeRecord]

    @property
    def model(self) -> str:
        return self.config.get("model")


def build_experiment(config: Config, dataset: Optional[SpikeDataset] = None) -> Experiment:
    validate_config(config)
    if dataset is None:
        dataset = SpikeDataset.from_config(config.get("dataset"), seed=config.get("seed"))
    if not dataset.indices(SPLIT_TRAIN):
        raise ValidationError("Dataset has no training examples")
    topology = resolve_topology(config, dataset)
    hyper = HyperParams.from_dict(config.get("hyper"))
    targets = target_records(config, dataset.class_count, dataset.horizon)
    logger.info(f"Experiment: model={config.get('model')}, neurons={topology.neuron_count} "
                f"(visible {len(topology.visible)}, hidden {len(topology.hidden)}), "
                f"edges={topology.edge_count}, inputs={topology.exogenous_count}, T={dataset.horizon}")
    return Experiment(config, dataset, topology, hyper, targets)


@dataclass
class TrainResult:
    params: Parameters
    records: List[MetricsRecord]
    output_dir: Path
    final: Optional[EvalResult] = None

    @property
    def checkpoint_path(self) -> Path:
        return self.output_dir / CHECKPOINT_FILE

    @property
    def metrics_path(self) -> Path:
        return self.output_dir / METRICS_FILE


def train(config: Config, dataset: Optional[SpikeDataset] = None) -> TrainResult:
    """
    Present examples_budget training examples (drawn with replacement), evaluate every
    eval_every examples, and write metrics.jsonl, config.json and the final checkpoint
    into output.dir.
    """
    experiment = build_experiment(config, dataset)
    topology, hyper, data = experiment.topology, experiment.hyper, experiment.dataset
    model = experiment.model
    seed = config.get("seed")

    budget = config.get("train.examples_budget")
    eval_every = config.get("train.eval_every")
    batch_size = config.get("train.batch_size")
    learning_rate = model_default(config, "train.learning_rate", DEFAULT_LEARNING_RATE)
    learn_bias = config.get("train.learn_bias")
    learn_bias = (model == MODEL_GLM) if learn_bias is None else bool(learn_bias)

    output_dir = Path(config.get("output.dir"))
    output_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = output_dir / METRICS_FILE
    if metrics_path.exists():
        metrics_path.unlink()
    config.save(str(output_dir / CONFIG_FILE))

    presentation = make_rng(seed, STREAM_PRESENTATION)
    params = init_parameters(topology, make_rng(seed, STREAM_INIT), config.get("train.init_scale"),
                             bias=model_default(config, "train.init_bias", DEFAULT_INIT_BIAS))
    hidden_rng = make_rng(seed, STREAM_HIDDEN)

    kind = SurrogateKind(config.get("train.surrogate.variant"), float(config.get("train.surrogate.slope")))
    projection = None
    if model == MODEL_SRM:
        projection = FeedbackProjection.build(
            ErrorMode(config.get("train.error_mode"), int(config.get("train.feedback_seed"))), topology)
    acc = UpdateAccumulator.zeros(topology)
    glm_state = GlmTrainState(acc, baseline_decay=float(config.get("train.baseline.decay")),
                              enabled=bool(config.get("train.baseline.enabled")))

    train_index = data.indices(SPLIT_TRAIN)
    train_eval = data.subset(SPLIT_TRAIN)
    subset = config.get("eval.train_subset")
    if subset:
        train_eval = SpikeDataset(train_eval.records[:subset], train_eval.labels[:subset],
                                  train_eval.splits[:subset], train_eval.class_count)
    test_eval = data.subset(SPLIT_TEST)
    eval_kwargs = dict(eval_mode=config.get("eval.mode"), seed=config.get("eval.seed"),
                       workers=config.get("eval.workers"))

    records: List[MetricsRecord] = []
    window_losses: List[float] = []
    started = time.perf_counter()

    for seen in range(1, budget + 1):
        k = train_index[int(presentation.integers(len(train_index)))]
        example = (data.records[k], experiment.targets[data.labels[k]])
        if model == MODEL_SRM:
            loss, acc = train_step_srm(params, topology, hyper, example, projection, kind, acc,
                                       learn_bias=learn_bias)
        else:
            loss, glm_state = train_step_glm(params, topology, hyper, example, glm_state, hidden_rng,
                                             credit=config.get("train.credit"),
                                             samples_per_example=config.get("train.samples_per_example"),
                                             learn_bias=learn_bias)
        window_losses.append(loss)
        if not math.isfinite(loss):
            raise RuntimeFailure(f"Training diverged at example {seen}: loss {loss}")

        if acc.count == batch_size:
            params = apply_updates(params, acc, learning_rate, batch_size)

        if seen % eval_every == 0:
            train_acc = evaluate(params, topology, hyper, model, train_eval, **eval_kwargs).accuracy if len(train_eval) else 0.0
            test_acc = evaluate(params, topology, hyper, model, test_eval, **eval_kwargs).accuracy if len(test_eval) else 0.0
            wall = time.perf_counter() - started if config.get("output.wall_time") else None
            record = MetricsRecord(seen, train_acc, test_acc, float(np.mean(window_losses)), wall)
            log_metrics(metrics_path, record)
            records.append(record)
            window_losses = []
            logger.info(f"[{model}] examples={seen} train_acc={train_acc:.3f} test_acc={test_acc:.3f} "
                        f"{'loss' if model == MODEL_SRM else 'bound'}={record.mean_loss_or_bound:.4f}")

    if acc.count:
        params = apply_updates(params, acc, learning_rate, acc.count)

    meta = {"examples_seen": str(budget), "seed": str(seed), "horizon": str(data.horizon)}
    save_checkpoint(str(output_dir / CHECKPOINT_FILE), Checkpoint(model, topology, hyper, params, meta))
    final = evaluate(params, topology, hyper, model, test_eval, **eval_kwargs) if len(test_eval) else None
    return TrainResult(params, records, output_dir, final)


def inspect_summary(checkpoint: Checkpoint) -> Dict:
    """Counts, weight statistics and hyperparameters of a checkpoint."""
    topology, params = checkpoint.topology, checkpoint.params
    weights = params.weights if params.weights.size else np.zeros(1)
    return {
        "model": checkpoint.model,
        "neurons": topology.neuron_count,
        "visible": len(topology.visible),
        "hidden": len(topology.hidden),
        "exogenous": topology.exogenous_count,
        "edges": topology.edge_count,
        "weight_min": float(weights.min()),
        "weight_max": float(weights.max()),
        "weight_mean": float(weights.mean()),
        "weight_abs_max": float(np.abs(weights).max()),
        "bias_min": float(params.biases.min()),
        "bias_max": float(params.biases.max()),
        "hyper": checkpoint.hyper.as_dict(),
        "meta": dict(checkpoint.meta),
    }


def format_summary(summary: Dict) -> str:
    lines = [
        f"model:      {summary['model']}",
        f"neurons:    {summary['neurons']} (visible {summary['visible']}, hidden {summary['hidden']})",
        f"exogenous:  {summary['exogenous']}",
        f"edges:      {summary['edges']}",
        f"weights:    min {summary['weight_min']!r}  max {summary['weight_max']!r}  mean {summary['weight_mean']!r}",
        f"biases:     min {summary['bias_min']!r}  max {summary['bias_max']!r}",
        "hyper:      " + ", ".join(f"{k}={v!r}" for k, v in summary["hyper"].items()),
    ]
    if summary["meta"]:
        lines.append("meta:       " + ", ".join(f"{k}={v}" for k, v in sorted(summary["meta"].items())))
    return "\n".join(lines)
