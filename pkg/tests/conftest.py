import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from core.utils import make_rng
from utils.network import HyperParams, NetworkState, Parameters, SpikeRecord, init_parameters
from utils.topology import Topology, fully_connected


def random_state(topology: Topology, rng) -> NetworkState:
    """Non-zero traces and last spikes, so that step 1 already sees pre-synaptic activity."""
    state = NetworkState.zeros(topology)
    state.syn_p[:] = rng.uniform(0.0, 1.5, topology.source_count)
    state.syn_q[:] = rng.uniform(0.0, 1.0, topology.source_count)
    state.ref_r[:] = rng.uniform(0.0, 0.5, topology.neuron_count)
    state.last_spikes[:] = rng.integers(0, 2, topology.source_count)
    return state


def random_glm_instance(rng, visible: int, hidden: int, exogenous: int, horizon: int):
    """Tiny fully connected GLM with random weights, biases, state, inputs and visible data."""
    topology = fully_connected(visible, hidden, exogenous)
    params = init_parameters(topology, rng, scale=1.5)
    params = Parameters(params.weights, rng.normal(0.0, 1.0, topology.neuron_count))
    hyper = HyperParams(tau_mem=float(rng.uniform(2, 10)), tau_syn=float(rng.uniform(1, 5)),
                        tau_ref=float(rng.uniform(2, 10)), bandwidth=float(rng.uniform(0.5, 2.0)))
    data = SpikeRecord(rng.integers(0, 2, (visible, horizon)))
    inputs = SpikeRecord(rng.integers(0, 2, (exogenous, horizon)))
    return topology, params, hyper, data, inputs, random_state(topology, rng)


@pytest.fixture
def rng():
    return make_rng(1234)


@pytest.fixture
def make_random_state():
    return random_state


@pytest.fixture
def make_glm_instance():
    return random_glm_instance
