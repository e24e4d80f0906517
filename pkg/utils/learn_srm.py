"""
Surrogate-gradient training of deterministic SRM networks.

Per step t every weight receives the three-factor contribution

    dw_ij,t = e_i,t * surrogate'(u_i,t - threshold) * p_j,t

where e_i,t is the error signal of neuron i. Credit through earlier steps (t' < t)
is ignored; there is no backward pass through time. Accumulators hold loss
gradients and apply_updates descends: w <- w - lr * grad / batch.
"""

import hashlib
import logging
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from scipy.special import expit

from core.error_handler import ShapeError, ValidationError
from core.utils import make_rng
from utils.network import (
    HyperParams,
    Mode,
    NetworkState,
    Parameters,
    SpikeRecord,
    run_trajectory,
)
from utils.surrogate import SurrogateKind, local_loss, output_error, surrogate_derivative
from utils.topology import Topology

logger = logging.getLogger(__name__)


ERROR_READOUT_DIRECT = "readout_direct"
ERROR_RANDOM_FEEDBACK = "random_feedback"
ERROR_LOCAL_LAYER = "local_layer"
ERROR_MODES = (ERROR_READOUT_DIRECT, ERROR_RANDOM_FEEDBACK, ERROR_LOCAL_LAYER)
DEFAULT_FEEDBACK_SEED = 0


@dataclass(frozen=True)
class ErrorMode:
    variant: str = ERROR_READOUT_DIRECT
    feedback_seed: int = DEFAULT_FEEDBACK_SEED

    def __post_init__(self):
        if self.variant not in ERROR_MODES:
            raise ValidationError(f"Unknown error mode '{self.variant}', expected one of {ERROR_MODES}")


@dataclass
class UpdateAccumulator:
    """Summed loss gradients since the last optimizer step."""
    grads: np.ndarray
    bias_grads: np.ndarray
    count: int = 0

    @classmethod
    def zeros(cls, topology: Topology) -> "UpdateAccumulator":
        return cls(np.zeros(topology.edge_count), np.zeros(topology.neuron_count), 0)

    def add(self, grads: np.ndarray, bias_grads: np.ndarray) -> None:
        self.grads += grads
        self.bias_grads += bias_grads
        self.count += 1

    def merge(self, other: "UpdateAccumulator") -> None:
        """Sum another worker's accumulator into this one."""
        self.grads += other.grads
        self.bias_grads += other.bias_grads
        self.count += other.count

    def reset(self) -> None:
        self.grads[:] = 0.0
        self.bias_grads[:] = 0.0
        self.count = 0


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.ascontiguousarray(array, dtype=float)
    array.setflags(write=False)
    return array


class FeedbackProjection:
    """
    Fixed random matrices carrying visible errors to hidden neurons.

    random_feedback: one matrix B (|H| x |X|), entries uniform in [-1, 1] / sqrt(|X|).
    local_layer: one readout R_l (|X| x n_l) per hidden layer, uniform in [-1, 1] / sqrt(n_l).
    Matrices are drawn once from feedback_seed and are read-only afterwards.
    """

    def __init__(self, mode: ErrorMode, topology: Topology, matrix: Optional[np.ndarray] = None,
                 readouts: Optional[Tuple[np.ndarray, ...]] = None):
        self.mode = mode
        self.topology = topology
        self.matrix = None
        self.readouts = ()
        visible, hidden = len(topology.visible), len(topology.hidden)

        if mode.variant == ERROR_RANDOM_FEEDBACK:
            if matrix is None:
                rng = make_rng(mode.feedback_seed)
                matrix = rng.uniform(-1.0, 1.0, size=(hidden, visible)) / np.sqrt(max(visible, 1))
            if np.shape(matrix) != (hidden, visible):
                raise ShapeError(f"Feedback matrix must be {hidden}x{visible}, got {np.shape(matrix)}")
            self.matrix = _frozen(matrix)

        elif mode.variant == ERROR_LOCAL_LAYER:
            if hidden and not topology.layers:
                raise ValidationError("local_layer error mode requires a layered topology")
            if readouts is None:
                rng = make_rng(mode.feedback_seed)
                readouts = tuple(rng.uniform(-1.0, 1.0, size=(visible, len(layer))) / np.sqrt(len(layer))
                                 for layer in topology.layers)
            self.readouts = tuple(_frozen(r) for r in readouts)

    @classmethod
    def build(cls, mode: ErrorMode, topology: Topology) -> "FeedbackProjection":
        return cls(mode, topology)

    def digest(self) -> str:
        """Hash of every fixed matrix (immutability checks)."""
        h = hashlib.sha256()
        for array in ([self.matrix] if self.matrix is not None else []) + list(self.readouts):
            h.update(array.tobytes())
        return h.hexdigest()


def as_projection(mode: Union[ErrorMode, FeedbackProjection], topology: Topology) -> FeedbackProjection:
    if isinstance(mode, FeedbackProjection):
        if mode.topology != topology:
            raise ValidationError("Feedback projection was built for a different topology")
        return mode
    return FeedbackProjection.build(mode, topology)


def error_signals(
    mode: Union[ErrorMode, FeedbackProjection],
    visible_errors: np.ndarray,
    topology: Topology,
    projected_errors: Optional[np.ndarray] = None,
    targets: Optional[np.ndarray] = None,
    smoothed: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Per-neuron error e_i for one step (vectors) or a whole run (|X| x T matrices).

    Args:
        mode: ErrorMode or a prebuilt FeedbackProjection
        visible_errors: dL/dx of each visible neuron (rows in topology.visible order)
        projected_errors: Error sent through B in random_feedback (defaults to visible_errors)
        targets: Visible targets (local_layer)
        smoothed: Smoothed outputs of all neurons (local_layer)

    Returns:
        e over all neurons; hidden rows follow the error mode
    """
    projection = as_projection(mode, topology)
    visible_errors = np.asarray(visible_errors, dtype=float)
    if visible_errors.shape[0] != len(topology.visible):
        raise ShapeError(f"Expected {len(topology.visible)} visible errors, got {visible_errors.shape[0]}")

    e = np.zeros((topology.neuron_count,) + visible_errors.shape[1:])
    e[topology.visible_index] = visible_errors
    variant = projection.mode.variant

    if variant == ERROR_RANDOM_FEEDBACK and len(topology.hidden):
        source = visible_errors if projected_errors is None else np.asarray(projected_errors, dtype=float)
        e[topology.hidden_index] = projection.matrix @ source

    elif variant == ERROR_LOCAL_LAYER and topology.layers:
        if targets is None or smoothed is None:
            raise ValidationError("local_layer error mode needs targets and smoothed outputs")
        targets = np.asarray(targets, dtype=float)
        smoothed = np.asarray(smoothed, dtype=float)
        for layer, readout in zip(topology.layers, projection.readouts):
            index = np.array(layer, dtype=np.int64)
            prediction = expit(readout @ smoothed[index])
            e[index] = readout.T @ (prediction - targets)

    return e


def sg_contribution(e, u, threshold: float, kind: SurrogateKind, pre_trace):
    """Three-factor contribution e * surrogate'(u) * pre."""
    return e * surrogate_derivative(u, threshold, kind) * pre_trace


def edge_gradients(post: np.ndarray, pre_traces: np.ndarray, topology: Topology) -> np.ndarray:
    """sum_t post[i, t] * p[j, t] for every edge (j, i)."""
    if not topology.edge_count:
        return np.zeros(0)
    per_pair = post @ pre_traces.T
    return per_pair[topology.edge_dst, topology.edge_src]


def train_step_srm(
    params: Parameters,
    topology: Topology,
    hyper: HyperParams,
    example: Tuple[Optional[SpikeRecord], SpikeRecord],
    mode: Union[ErrorMode, FeedbackProjection],
    kind: SurrogateKind,
    acc: UpdateAccumulator,
    learn_bias: bool = False,
    relaxed: bool = False,
    state: Optional[NetworkState] = None,
) -> Tuple[float, UpdateAccumulator]:
    """
    Forward-simulate one example and accumulate the three-factor gradients.

    Args:
        example: (exogenous record, visible target record)
        mode: ErrorMode, or a prebuilt FeedbackProjection to reuse its matrices
        kind: Surrogate used for the post factor (its slope also smooths the outputs)
        acc: Accumulator updated in place
        learn_bias: Accumulate bias gradients (pre factor 1)
        relaxed: Replace the threshold by the sigmoid in the forward pass too
        state: Optional initial state

    Returns:
        (summed local loss, acc)
    """
    exogenous, target = example
    if target.rows != len(topology.visible):
        raise ShapeError(f"Target has {target.rows} rows, topology has {len(topology.visible)} visible neurons")

    forward = Mode.RELAXED if relaxed else Mode.DETERMINISTIC
    trajectory = run_trajectory(params, topology, hyper, exogenous, forward, state=state,
                                horizon=target.horizon, relax_slope=kind.slope)
    u = trajectory.potentials
    visible = topology.visible_index
    targets = target.spikes.astype(float)

    loss, d_output = local_loss(targets, u[visible], hyper.threshold, kind.slope)
    projection = as_projection(mode, topology)
    smoothed = expit(kind.slope * (u - hyper.threshold))
    e = error_signals(projection, d_output, topology,
                      projected_errors=output_error(targets, u[visible], hyper.threshold, kind.slope),
                      targets=targets, smoothed=smoothed)

    post = sg_contribution(e, u, hyper.threshold, kind, 1.0)
    grads = edge_gradients(post, trajectory.pre_traces, topology)
    bias_grads = post.sum(axis=1) if learn_bias else np.zeros(topology.neuron_count)
    acc.add(grads, bias_grads)

    total = float(np.sum(loss))
    logger.debug(f"SRM step: loss={total:.4f}, max|grad|={np.abs(grads).max(initial=0.0):.4g}")
    return total, acc


def apply_updates(params: Parameters, acc: UpdateAccumulator, learning_rate: float, batch_size: int) -> Parameters:
    """
    w <- w - lr * grad / batch_size (same for biases); zeroes the accumulator.

    Raises:
        ValidationError: acc.count differs from batch_size
    """
    if acc.count != batch_size:
        raise ValidationError(f"Accumulator holds {acc.count} examples, expected a batch of {batch_size}")
    if learning_rate < 0:
        raise ValidationError(f"Learning rate must be non-negative, got {learning_rate}")
    updated = Parameters(params.weights - learning_rate * acc.grads / batch_size,
                         params.biases - learning_rate * acc.bias_grads / batch_size)
    acc.reset()
    return updated
