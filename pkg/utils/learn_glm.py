"""
Maximum-likelihood training of GLM networks through the upper bound

    B = E_{p(h || x)} [ sum_t e_bar_t ],   e_bar_t = sum_{i in X} l(x_it, sigma(bandwidth * u_it))

Visible in-edges follow the two-factor rule (x - sigma) * pre; hidden in-edges follow
the score-function rule (e_bar - baseline) * (h - sigma) * pre, driven by one sampled
hidden trajectory per draw.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.special import expit

from core.error_handler import ShapeError, ValidationError
from core.utils import make_rng
from utils.glm import TrajectorySample, bound_sample, nll_local
from utils.learn_srm import UpdateAccumulator, edge_gradients
from utils.network import HyperParams, NetworkState, Parameters, SpikeRecord
from utils.topology import Topology

logger = logging.getLogger(__name__)


CREDIT_SAME_STEP = "same_step"
CREDIT_REWARD_TO_GO = "reward_to_go"
CREDIT_MODES = (CREDIT_SAME_STEP, CREDIT_REWARD_TO_GO)
DEFAULT_BASELINE_DECAY = 0.99


@dataclass
class GlmTrainState:
    """
    Accumulator plus the running baseline of e_bar_t.

    The baseline is an exponential moving average updated once per e_bar_t value,
    after the example's gradients are taken. It stays 0 when disabled.
    """
    acc: UpdateAccumulator
    baseline: float = 0.0
    baseline_decay: float = DEFAULT_BASELINE_DECAY
    enabled: bool = True
    examples_seen: int = field(default=0)

    def __post_init__(self):
        if not 0.0 <= self.baseline_decay < 1.0:
            raise ValidationError(f"Baseline decay must lie in [0, 1), got {self.baseline_decay!r}")
        if not np.isfinite(self.baseline):
            raise ValidationError("Baseline must be finite")
        if not self.enabled:
            self.baseline = 0.0

    @classmethod
    def for_topology(cls, topology: Topology, **kwargs) -> "GlmTrainState":
        return cls(UpdateAccumulator.zeros(topology), **kwargs)

    def update_baseline(self, errors) -> None:
        if not self.enabled:
            return
        for value in np.ravel(errors):
            self.baseline = self.baseline_decay * self.baseline + (1.0 - self.baseline_decay) * float(value)


def _firing_rate(u, bandwidth: float):
    # unclamped: the log floor must not leave a residual error at saturation
    if not bandwidth > 0:
        raise ValidationError(f"Bandwidth must be positive, got {bandwidth!r}")
    return expit(bandwidth * np.asarray(u, dtype=float))


def visible_contribution(x, u, bandwidth: float, pre_trace):
    """Two-factor term (x - sigma(bandwidth * u)) * pre."""
    return (np.asarray(x, dtype=float) - _firing_rate(u, bandwidth)) * pre_trace


def global_error(x_t, u_t, bandwidth: float) -> float:
    """e_bar_t: summed visible cross-entropy at one step."""
    return float(np.sum(nll_local(np.asarray(x_t), np.asarray(u_t, dtype=float), bandwidth)))


def hidden_contribution(e_bar, h, u, bandwidth: float, pre_trace, baseline: float = 0.0):
    """Three-factor term (e_bar - baseline) * (h - sigma(bandwidth * u)) * pre."""
    return (e_bar - baseline) * (np.asarray(h, dtype=float) - _firing_rate(u, bandwidth)) * pre_trace


def credit_signal(bound_terms: np.ndarray, credit: str = CREDIT_SAME_STEP) -> np.ndarray:
    """
    Global error paired with the hidden score at each step.

    same_step pairs step t with e_bar_t; reward_to_go pairs it with sum_{t' >= t} e_bar_t',
    which gives an unbiased estimate of the bound gradient for any horizon.
    """
    if credit == CREDIT_SAME_STEP:
        return np.asarray(bound_terms, dtype=float)
    if credit == CREDIT_REWARD_TO_GO:
        return np.cumsum(np.asarray(bound_terms, dtype=float)[::-1])[::-1]
    raise ValidationError(f"Unknown credit assignment '{credit}', expected one of {CREDIT_MODES}")


def sample_gradients(
    sample: TrajectorySample,
    topology: Topology,
    hyper: HyperParams,
    baseline: float = 0.0,
    credit: str = CREDIT_SAME_STEP,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Loss gradients (edge, bias) carried by one hidden trajectory.

    Visible rows get -bandwidth * visible_contribution, hidden rows get
    +bandwidth * hidden_contribution; the bias uses the same post factor with pre 1.
    """
    trajectory = sample.trajectory
    spikes = sample.record.spikes.astype(float)
    u = trajectory.potentials
    visible, hidden = topology.visible_index, topology.hidden_index

    post = np.zeros_like(u)
    post[visible] = -hyper.bandwidth * visible_contribution(spikes[visible], u[visible], hyper.bandwidth, 1.0)
    if len(hidden):
        signal = credit_signal(sample.bound_terms, credit)
        post[hidden] = hyper.bandwidth * hidden_contribution(signal, spikes[hidden], u[hidden],
                                                             hyper.bandwidth, 1.0, baseline)
    return edge_gradients(post, trajectory.pre_traces, topology), post.sum(axis=1)


def train_step_glm(
    params: Parameters,
    topology: Topology,
    hyper: HyperParams,
    example: Tuple[Optional[SpikeRecord], SpikeRecord],
    state: GlmTrainState,
    rng=None,
    credit: str = CREDIT_SAME_STEP,
    samples_per_example: int = 1,
    learn_bias: bool = True,
    initial_state: Optional[NetworkState] = None,
) -> Tuple[float, GlmTrainState]:
    """
    Clamp the visible neurons to the target, sample the hidden ones and accumulate.

    Args:
        example: (exogenous record, visible target record)
        state: Training state (accumulator and baseline), updated in place
        rng: Seed or Generator for hidden sampling
        credit: same_step or reward_to_go
        samples_per_example: Hidden draws averaged per example
        learn_bias: Accumulate bias gradients
        initial_state: Optional initial network state

    Returns:
        (mean sampled bound value sum_t e_bar_t, state)
    """
    exogenous, target = example
    if target.rows != len(topology.visible):
        raise ShapeError(f"Target has {target.rows} rows, topology has {len(topology.visible)} visible neurons")
    if samples_per_example < 1:
        raise ValidationError(f"samples_per_example must be >= 1, got {samples_per_example}")
    credit_signal(np.zeros(0), credit)

    rng = make_rng(rng)
    grads = np.zeros(topology.edge_count)
    bias_grads = np.zeros(topology.neuron_count)
    bound_total = 0.0
    errors = []
    for _ in range(samples_per_example):
        sample = bound_sample(target, params, topology, hyper, rng, exogenous, initial_state)
        g, b = sample_gradients(sample, topology, hyper, state.baseline, credit)
        grads += g / samples_per_example
        bias_grads += b / samples_per_example
        bound_total += sample.bound_value
        errors.append(sample.bound_terms)

    if not learn_bias:
        bias_grads[:] = 0.0
    state.acc.add(grads, bias_grads)
    for terms in errors:
        state.update_baseline(terms)
    state.examples_seen += 1

    bound_value = bound_total / samples_per_example
    logger.debug(f"GLM step: bound={bound_value:.4f}, baseline={state.baseline:.4f}")
    return bound_value, state
