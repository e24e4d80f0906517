"""
Discrete-time spike response model: filter traces, membrane potential, spiking.

Per step t the network
1. advances the pre-synaptic traces with the spikes of step t-1
   (q <- a*q + s, p <- b*p + q_old, r <- c*r + s_own; a, b, c = exp(-1/tau)),
2. computes u_i = sum_j w_ij p_j - r_i + gamma_i,
3. emits outputs according to the simulation mode.

The recursions are the source of truth; the closed-form double-exponential kernel is
only their documentation. All synapses leaving a source share one filter, so p and q
are stored per source (neurons first, then exogenous channels).
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from core.error_handler import ShapeError, TopologyError, ValidationError
from core.utils import make_rng
from utils.topology import Topology

logger = logging.getLogger(__name__)


# Defaults (configuration, not contract)
DEFAULT_TAU_MEM = 20.0
DEFAULT_TAU_SYN = 5.0
DEFAULT_TAU_REF = 10.0
DEFAULT_THRESHOLD = 1.0
DEFAULT_BANDWIDTH = 1.0


class Mode(Enum):
    """How a neuron turns its membrane potential into an output."""
    DETERMINISTIC = "deterministic"  # threshold crossing
    STOCHASTIC = "stochastic"        # Bernoulli(sigma(bandwidth * u))
    RELAXED = "relaxed"              # sigma(slope * (u - threshold)), real valued
    EXPECTED = "expected"            # sigma(bandwidth * u), real valued

    @classmethod
    def parse(cls, value) -> "Mode":
        if isinstance(value, Mode):
            return value
        try:
            return cls(value)
        except ValueError:
            raise ValidationError(f"Unknown simulation mode '{value}'")

    @property
    def binary(self) -> bool:
        return self in (Mode.DETERMINISTIC, Mode.STOCHASTIC)


@dataclass(frozen=True)
class HyperParams:
    tau_mem: float = DEFAULT_TAU_MEM
    tau_syn: float = DEFAULT_TAU_SYN
    tau_ref: float = DEFAULT_TAU_REF
    threshold: float = DEFAULT_THRESHOLD
    bandwidth: float = DEFAULT_BANDWIDTH

    def __post_init__(self):
        for name in ("tau_mem", "tau_syn", "tau_ref", "bandwidth"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ValidationError(f"Hyperparameter {name} must be a positive finite number, got {value!r}")
        if not math.isfinite(self.threshold):
            raise ValidationError(f"Threshold must be finite, got {self.threshold!r}")

    @property
    def syn_decay(self) -> float:
        return math.exp(-1.0 / self.tau_syn)

    @property
    def mem_decay(self) -> float:
        return math.exp(-1.0 / self.tau_mem)

    @property
    def ref_decay(self) -> float:
        return math.exp(-1.0 / self.tau_ref)

    @classmethod
    def from_dict(cls, data: dict) -> "HyperParams":
        known = {k: float(v) for k, v in (data or {}).items() if k in cls.__dataclass_fields__}
        return cls(**known)

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}


@dataclass
class Parameters:
    """Edge weights aligned with topology.edges, and one bias per neuron."""
    weights: np.ndarray
    biases: np.ndarray

    def check(self, topology: Topology) -> "Parameters":
        if self.weights.shape != (topology.edge_count,):
            raise ShapeError(f"Expected {topology.edge_count} weights, got shape {self.weights.shape}")
        if self.biases.shape != (topology.neuron_count,):
            raise ShapeError(f"Expected {topology.neuron_count} biases, got shape {self.biases.shape}")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.biases))):
            raise ValidationError("Parameters must be finite")
        return self

    def weight(self, topology: Topology, source: int, neuron: int) -> float:
        try:
            return float(self.weights[topology.edge_index[(source, neuron)]])
        except KeyError:
            raise TopologyError(f"No edge {topology.source_label(source)}->{neuron}")

    def copy(self) -> "Parameters":
        return Parameters(self.weights.copy(), self.biases.copy())


def init_parameters(topology: Topology, rng=None, scale: Optional[float] = None, bias: float = 0.0) -> Parameters:
    """
    Uniform weights in [-c, c] with c = 1/sqrt(mean in-degree); every bias set to `bias`.

    Args:
        topology: Network graph
        rng: Seed or numpy Generator
        scale: Optional override for c
        bias: Initial bias of every neuron
    """
    rng = make_rng(rng)
    if scale is None:
        degree = topology.mean_in_degree()
        scale = 1.0 / math.sqrt(degree) if degree > 0 else 1.0
    weights = rng.uniform(-scale, scale, size=topology.edge_count)
    return Parameters(weights, np.full(topology.neuron_count, float(bias)))


@dataclass
class SpikeRecord:
    """Binary spike matrix: rows are neurons (or channels), columns are steps 1..T."""
    spikes: np.ndarray

    def __post_init__(self):
        spikes = np.asarray(self.spikes)
        if spikes.ndim != 2:
            raise ShapeError(f"A spike record is a 2-D matrix, got shape {spikes.shape}")
        if spikes.size and not np.all((spikes == 0) | (spikes == 1)):
            raise ValidationError("Spike records hold only 0/1 entries")
        self.spikes = spikes.astype(np.uint8, copy=False)

    @property
    def horizon(self) -> int:
        return self.spikes.shape[1]

    @property
    def rows(self) -> int:
        return self.spikes.shape[0]

    @classmethod
    def zeros(cls, rows: int, horizon: int) -> "SpikeRecord":
        return cls(np.zeros((rows, horizon), dtype=np.uint8))

    def counts(self) -> np.ndarray:
        return self.spikes.sum(axis=1, dtype=np.int64)

    def __eq__(self, other):
        return isinstance(other, SpikeRecord) and np.array_equal(self.spikes, other.spikes)


@dataclass
class NetworkState:
    """
    Filter state at the current step.

    syn_p, syn_q and last_spikes run over sources (neurons, then exogenous channels);
    ref_r and potential over neurons.
    """
    syn_p: np.ndarray
    syn_q: np.ndarray
    ref_r: np.ndarray
    potential: np.ndarray
    last_spikes: np.ndarray

    @classmethod
    def zeros(cls, topology: Topology) -> "NetworkState":
        s, n = topology.source_count, topology.neuron_count
        return cls(np.zeros(s), np.zeros(s), np.zeros(n), np.zeros(n), np.zeros(s))

    def copy(self) -> "NetworkState":
        return NetworkState(self.syn_p.copy(), self.syn_q.copy(), self.ref_r.copy(),
                            self.potential.copy(), self.last_spikes.copy())

    def edge_traces(self, topology: Topology) -> np.ndarray:
        """p per edge, aligned with topology.edges."""
        return self.syn_p[topology.edge_src]


@dataclass
class Trajectory:
    """
    Result of run_trajectory.

    outputs: N x T emitted values (0/1 in binary modes)
    potentials: N x T membrane potentials u_{i,t}
    pre_traces: S x T synaptic traces p_{j,t} seen at step t
    """
    outputs: np.ndarray
    potentials: np.ndarray
    pre_traces: np.ndarray
    final_state: NetworkState
    mode: Mode = Mode.DETERMINISTIC

    @property
    def horizon(self) -> int:
        return self.outputs.shape[1]

    @property
    def record(self) -> Optional[SpikeRecord]:
        if not self.mode.binary:
            return None
        return SpikeRecord(self.outputs.astype(np.uint8))


def step_traces(state: NetworkState, prev_spikes: np.ndarray, hyper: HyperParams) -> NetworkState:
    """
    Advance p, q and r by one step.

    Args:
        state: State at step t-1
        prev_spikes: Outputs of all sources at step t-1 (neurons then exogenous)
        hyper: Time constants

    Returns:
        New NetworkState with traces for step t (potential and last_spikes carried over)

    Raises:
        ShapeError: prev_spikes length differs from the number of sources
    """
    prev_spikes = np.asarray(prev_spikes, dtype=float)
    if prev_spikes.shape != state.syn_q.shape:
        raise ShapeError(f"prev_spikes has shape {prev_spikes.shape}, expected {state.syn_q.shape}")
    n = state.ref_r.shape[0]
    # p reads the previous q
    syn_p = hyper.mem_decay * state.syn_p + state.syn_q
    syn_q = hyper.syn_decay * state.syn_q + prev_spikes
    ref_r = hyper.ref_decay * state.ref_r + prev_spikes[:n]
    return NetworkState(syn_p, syn_q, ref_r, state.potential.copy(), state.last_spikes.copy())


def membrane_potentials(state: NetworkState, params: Parameters, topology: Topology) -> np.ndarray:
    """u for every neuron: sum_j w_ij p_j - r_i + gamma_i."""
    drive = params.weights * state.syn_p[topology.edge_src]
    synaptic = np.bincount(topology.edge_dst, weights=drive, minlength=topology.neuron_count)
    return synaptic - state.ref_r + params.biases


def membrane_potential(state: NetworkState, params: Parameters, topology: Topology, neuron: int) -> float:
    """u_{i,t} of a single neuron."""
    if not 0 <= neuron < topology.neuron_count:
        raise TopologyError(f"Unknown neuron index {neuron}")
    u = params.biases[neuron] - state.ref_r[neuron]
    for j in topology.parents[neuron]:
        u += params.weights[topology.edge_index[(j, neuron)]] * state.syn_p[j]
    return float(u)


def srm_spike(u, threshold: float):
    """Heaviside with Theta(0) = 1: spike iff u >= threshold."""
    if np.ndim(u) == 0:
        return int(u >= threshold)
    return (np.asarray(u) >= threshold).astype(np.uint8)


def step_network(
    state: NetworkState,
    params: Parameters,
    topology: Topology,
    hyper: HyperParams,
    exogenous_t: Optional[np.ndarray] = None,
    mode=Mode.DETERMINISTIC,
    rng=None,
    override: Optional[Tuple[np.ndarray, np.ndarray]] = None,
    relax_slope: float = 1.0,
) -> Tuple[NetworkState, np.ndarray]:
    """
    Advance the network by one step.

    Args:
        state: State after step t-1
        exogenous_t: Exogenous inputs of step t (stored for use at t+1)
        mode: Mode or its string value
        rng: Generator for stochastic mode
        override: (neuron indices, values) written over the emitted outputs after u is computed
        relax_slope: Sigmoid slope for relaxed mode

    Returns:
        (state after step t, outputs of step t)
    """
    mode = Mode.parse(mode)
    if exogenous_t is None:
        exogenous_t = np.zeros(topology.exogenous_count)
    exogenous_t = np.asarray(exogenous_t, dtype=float)
    if exogenous_t.shape != (topology.exogenous_count,):
        raise ShapeError(f"Exogenous input has shape {exogenous_t.shape}, expected ({topology.exogenous_count},)")

    traced = step_traces(state, state.last_spikes, hyper)
    u = membrane_potentials(traced, params, topology)

    if mode is Mode.DETERMINISTIC:
        outputs = (u >= hyper.threshold).astype(float)
    elif mode is Mode.STOCHASTIC:
        # Import here to avoid circular dependency
        from utils.glm import sample_spike, spike_probability
        outputs = sample_spike(spike_probability(u, hyper.bandwidth), make_rng(rng)).astype(float)
    elif mode is Mode.RELAXED:
        from scipy.special import expit
        outputs = expit(relax_slope * (u - hyper.threshold))
    else:
        from scipy.special import expit
        outputs = expit(hyper.bandwidth * u)

    if override is not None:
        indices, values = override
        outputs[indices] = values

    traced.potential = u
    traced.last_spikes = np.concatenate([outputs, exogenous_t])
    return traced, outputs


def run_trajectory(
    params: Parameters,
    topology: Topology,
    hyper: HyperParams,
    exogenous: Optional[SpikeRecord] = None,
    mode=Mode.DETERMINISTIC,
    clamp: Optional[SpikeRecord] = None,
    rng=None,
    state: Optional[NetworkState] = None,
    horizon: Optional[int] = None,
    relax_slope: float = 1.0,
) -> Trajectory:
    """
    Run step_network for t = 1..T.

    When clamp is given, visible outputs are replaced by the clamped data after u is
    computed (teacher forcing), so hidden neurons are sampled from p(h || x).

    Args:
        exogenous: Exogenous inputs (E x T); may be omitted when horizon is given
        clamp: Visible data (|X| x T), rows in topology.visible order
        state: Initial state (zero state by default)
        horizon: T when no exogenous record is supplied

    Raises:
        ShapeError: exogenous/clamp shapes or horizons do not match
    """
    mode = Mode.parse(mode)
    rng = make_rng(rng) if mode is Mode.STOCHASTIC else rng
    if exogenous is not None:
        if exogenous.rows != topology.exogenous_count:
            raise ShapeError(f"Exogenous record has {exogenous.rows} rows, topology expects {topology.exogenous_count}")
        if horizon is not None and horizon != exogenous.horizon:
            raise ShapeError(f"Horizon {horizon} differs from exogenous horizon {exogenous.horizon}")
        horizon = exogenous.horizon
    elif horizon is None:
        horizon = clamp.horizon if clamp is not None else 0
    if clamp is not None:
        if clamp.rows != len(topology.visible):
            raise ShapeError(f"Clamp has {clamp.rows} rows, topology has {len(topology.visible)} visible neurons")
        if clamp.horizon != horizon:
            raise ShapeError(f"Clamp horizon {clamp.horizon} differs from trajectory horizon {horizon}")

    return _run(params, topology, hyper, exogenous, horizon, mode, rng, state,
                topology.visible_index if clamp is not None else None,
                clamp.spikes if clamp is not None else None, relax_slope)


def replay(
    record: SpikeRecord,
    params: Parameters,
    topology: Topology,
    hyper: HyperParams,
    exogenous: Optional[SpikeRecord] = None,
    state: Optional[NetworkState] = None,
) -> Trajectory:
    """Recompute potentials along a fully given spike record (all neurons forced)."""
    if record.rows != topology.neuron_count:
        raise ShapeError(f"Record has {record.rows} rows, topology has {topology.neuron_count} neurons")
    if exogenous is not None and (exogenous.rows != topology.exogenous_count or exogenous.horizon != record.horizon):
        raise ShapeError("Exogenous record does not match the replayed record")
    return _run(params, topology, hyper, exogenous, record.horizon, Mode.DETERMINISTIC, None, state,
                np.arange(topology.neuron_count), record.spikes, 1.0)


def _run(params, topology, hyper, exogenous, horizon, mode, rng, state, forced_index, forced, relax_slope):
    state = NetworkState.zeros(topology) if state is None else state.copy()
    n, s = topology.neuron_count, topology.source_count
    outputs = np.zeros((n, horizon))
    potentials = np.zeros((n, horizon))
    pre_traces = np.zeros((s, horizon))

    for t in range(horizon):
        exogenous_t = exogenous.spikes[:, t] if exogenous is not None else None
        override = (forced_index, forced[:, t]) if forced is not None else None
        state, out = step_network(state, params, topology, hyper, exogenous_t, mode, rng,
                                  override=override, relax_slope=relax_slope)
        outputs[:, t] = out
        potentials[:, t] = state.potential
        pre_traces[:, t] = state.syn_p

    return Trajectory(outputs, potentials, pre_traces, state, mode)
