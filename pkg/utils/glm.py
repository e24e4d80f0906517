"""
Probabilistic (GLM) spiking: spike probabilities, cross-entropy likelihoods and the
Jensen upper bound on the marginal negative log-likelihood of the visible neurons.

Pure functions given an rng. The enumeration oracles (marginal_nll_exact,
bound_exact, enumerate_hidden) visit all 2^(|H|T) hidden trajectories and refuse
to run past MAX_ENUMERATED_BITS.
"""

import itertools
from dataclasses import dataclass
from typing import Iterator, Optional, Tuple

import numpy as np
from scipy.special import expit, logsumexp

from core.error_handler import EnumerationLimitError, ShapeError, ValidationError
from core.utils import make_rng
from utils.network import (
    HyperParams,
    Mode,
    NetworkState,
    Parameters,
    SpikeRecord,
    Trajectory,
    replay,
    run_trajectory,
)
from utils.topology import Topology


PROBABILITY_FLOOR = 1e-12
MAX_ENUMERATED_BITS = 20


@dataclass
class LikelihoodBreakdown:
    """Per-(neuron, step) cross-entropy terms and their total."""
    per_term: np.ndarray
    total: float

    def rows(self, index) -> np.ndarray:
        return self.per_term[index]


@dataclass
class TrajectorySample:
    """
    One hidden trajectory drawn from p(h || x) with the visible neurons clamped.

    bound_terms[t] is the visible cross-entropy sum at step t (the global error e_bar_t).
    """
    record: SpikeRecord
    log_prob_hidden: float
    bound_terms: np.ndarray
    trajectory: Trajectory

    @property
    def bound_value(self) -> float:
        return float(self.bound_terms.sum())


def _check_bandwidth(bandwidth: float) -> None:
    if not bandwidth > 0:
        raise ValidationError(f"Bandwidth must be positive, got {bandwidth!r}")


def spike_probability(u, bandwidth: float):
    """
    sigma(bandwidth * u), kept inside [1e-12, 1 - 1e-12].

    Args:
        u: Membrane potential (scalar or array)
        bandwidth: Positive sharpness

    Returns:
        Probability of a spike (same shape as u)
    """
    _check_bandwidth(bandwidth)
    prob = np.clip(expit(bandwidth * np.asarray(u, dtype=float)), PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR)
    return float(prob) if np.ndim(prob) == 0 else prob


def sample_spike(prob, rng=None):
    """Bernoulli draw(s); one independent draw per entry of prob."""
    rng = make_rng(rng)
    prob = np.asarray(prob, dtype=float)
    draws = (rng.random(prob.shape) < prob).astype(np.uint8)
    return int(draws) if draws.ndim == 0 else draws


def nll_local(spike, u, bandwidth: float = 1.0):
    """
    Cross-entropy l(s, sigma(bandwidth * u)) through a stable softplus.

    l(1, sigma(v)) = log(1 + e^-v), l(0, sigma(v)) = log(1 + e^v).
    """
    _check_bandwidth(bandwidth)
    sign = 2.0 * np.asarray(spike, dtype=float) - 1.0
    value = np.logaddexp(0.0, -sign * bandwidth * np.asarray(u, dtype=float))
    return float(value) if np.ndim(value) == 0 else value


def _check_visible(visible: SpikeRecord, topology: Topology) -> None:
    if visible.rows != len(topology.visible):
        raise ShapeError(f"Visible record has {visible.rows} rows, topology has {len(topology.visible)} visible neurons")


def sequence_nll_complete(
    record: SpikeRecord,
    params: Parameters,
    topology: Topology,
    hyper: HyperParams,
    exogenous: Optional[SpikeRecord] = None,
    state: Optional[NetworkState] = None,
) -> LikelihoodBreakdown:
    """
    -log p(s_<=T) = sum_t sum_i l(s_it, sigma(u_it)) with every spike given.

    Raises:
        ShapeError: record does not cover all neurons, or exogenous horizon differs
    """
    trajectory = replay(record, params, topology, hyper, exogenous, state)
    per_term = np.asarray(nll_local(record.spikes, trajectory.potentials, hyper.bandwidth)).reshape(record.spikes.shape)
    return LikelihoodBreakdown(per_term, float(per_term.sum()))


def _enumeration_guard(topology: Topology, horizon: int) -> int:
    bits = len(topology.hidden) * horizon
    if bits > MAX_ENUMERATED_BITS:
        raise EnumerationLimitError(f"|H|*T = {bits} exceeds the enumeration limit of {MAX_ENUMERATED_BITS}")
    return bits


def enumerate_hidden(
    visible: SpikeRecord,
    params: Parameters,
    topology: Topology,
    hyper: HyperParams,
    exogenous: Optional[SpikeRecord] = None,
    state: Optional[NetworkState] = None,
) -> Iterator[Tuple[SpikeRecord, LikelihoodBreakdown]]:
    """Yield (full record, complete-data breakdown) for every hidden trajectory."""
    _check_visible(visible, topology)
    horizon = visible.horizon
    bits = _enumeration_guard(topology, horizon)
    hidden_count = len(topology.hidden)
    spikes = np.zeros((topology.neuron_count, horizon), dtype=np.uint8)
    spikes[topology.visible_index] = visible.spikes
    for assignment in itertools.product((0, 1), repeat=bits):
        if hidden_count:
            spikes[topology.hidden_index] = np.array(assignment, dtype=np.uint8).reshape(hidden_count, horizon)
        record = SpikeRecord(spikes.copy())
        yield record, sequence_nll_complete(record, params, topology, hyper, exogenous, state)


def marginal_nll_exact(
    visible: SpikeRecord,
    params: Parameters,
    topology: Topology,
    hyper: HyperParams,
    exogenous: Optional[SpikeRecord] = None,
    state: Optional[NetworkState] = None,
) -> float:
    """
    -log sum_h p(x, h) by exhaustive enumeration (testing oracle).

    Raises:
        EnumerationLimitError: |H| * T > 20
    """
    totals = [b.total for _, b in enumerate_hidden(visible, params, topology, hyper, exogenous, state)]
    return float(-logsumexp(-np.array(totals)))


def bound_exact(
    visible: SpikeRecord,
    params: Parameters,
    topology: Topology,
    hyper: HyperParams,
    exogenous: Optional[SpikeRecord] = None,
    state: Optional[NetworkState] = None,
) -> float:
    """E_{p(h || x)}[sum_t e_bar_t] by exhaustive enumeration (testing oracle)."""
    hidden, visible_rows = topology.hidden_index, topology.visible_index
    expectation = 0.0
    for _, breakdown in enumerate_hidden(visible, params, topology, hyper, exogenous, state):
        weight = np.exp(-breakdown.per_term[hidden].sum())
        expectation += weight * breakdown.per_term[visible_rows].sum()
    return float(expectation)


def score_trajectory(trajectory: Trajectory, topology: Topology, hyper: HyperParams) -> TrajectorySample:
    """Visible cross-entropy per step and log p(h || x) of a binary trajectory."""
    record = trajectory.record
    if record is None:
        raise ValidationError(f"Cannot score a {trajectory.mode.value} trajectory; spikes must be binary")
    per_term = np.asarray(nll_local(record.spikes, trajectory.potentials, hyper.bandwidth)).reshape(record.spikes.shape)
    bound_terms = per_term[topology.visible_index].sum(axis=0)
    log_prob_hidden = -float(per_term[topology.hidden_index].sum())
    return TrajectorySample(record, log_prob_hidden, bound_terms, trajectory)


def bound_sample(
    visible: SpikeRecord,
    params: Parameters,
    topology: Topology,
    hyper: HyperParams,
    rng=None,
    exogenous: Optional[SpikeRecord] = None,
    state: Optional[NetworkState] = None,
) -> TrajectorySample:
    """
    Clamp the visible neurons, sample hidden ones, and score the visible outputs.

    Returns:
        TrajectorySample with per-step visible cross-entropy and log p(h || x)
    """
    _check_visible(visible, topology)
    trajectory = run_trajectory(params, topology, hyper, exogenous, Mode.STOCHASTIC,
                                clamp=visible, rng=make_rng(rng), state=state, horizon=visible.horizon)
    return score_trajectory(trajectory, topology, hyper)
