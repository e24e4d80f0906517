#!/usr/bin/env python3
"""
Check that the expected visible cross-entropy (exact, by enumeration) never falls
below the exact marginal negative log-likelihood on random tiny GLM networks.

Usage: python scripts/check_bound.py [--instances 100] [--seed 0]
"""
import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent.parent))

from core.utils import make_rng
from utils.glm import bound_exact, marginal_nll_exact
from utils.network import HyperParams, NetworkState, Parameters, SpikeRecord, init_parameters
from utils.topology import fully_connected


def random_instance(rng):
    visible = int(rng.integers(1, 3))
    hidden = int(rng.integers(0, 3))
    horizon = int(rng.integers(1, 4))
    exogenous = int(rng.integers(0, 3))
    topology = fully_connected(visible, hidden, exogenous)
    params = init_parameters(topology, rng, scale=2.0)
    params = Parameters(params.weights, rng.normal(0.0, 1.0, topology.neuron_count))
    hyper = HyperParams(tau_mem=float(rng.uniform(1, 10)), tau_syn=float(rng.uniform(1, 5)),
                        tau_ref=float(rng.uniform(1, 10)), bandwidth=float(rng.uniform(0.5, 2.0)))
    state = NetworkState.zeros(topology)
    state.syn_p[:] = rng.uniform(0, 1, topology.source_count)
    state.syn_q[:] = rng.uniform(0, 1, topology.source_count)
    state.last_spikes[:] = rng.integers(0, 2, topology.source_count)
    data = SpikeRecord(rng.integers(0, 2, (visible, horizon)))
    inputs = SpikeRecord(rng.integers(0, 2, (exogenous, horizon)))
    return data, params, topology, hyper, inputs, state


def check(instances: int, seed: int) -> float:
    rng = make_rng(seed)
    worst = np.inf
    for k in range(instances):
        data, params, topology, hyper, inputs, state = random_instance(rng)
        bound = bound_exact(data, params, topology, hyper, inputs, state)
        nll = marginal_nll_exact(data, params, topology, hyper, inputs, state)
        margin = bound - nll
        worst = min(worst, margin)
        if margin < -1e-10:
            print(f"instance {k}: bound {bound!r} < marginal NLL {nll!r}")
    return float(worst)


def main():
    parser = argparse.ArgumentParser(description="Jensen bound validity sweep")
    parser.add_argument("--instances", type=int, default=100)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    worst = check(args.instances, args.seed)
    print(f"worst margin (bound - marginal NLL) over {args.instances} instances: {worst!r}")
    return 0 if worst >= -1e-10 else 1


if __name__ == "__main__":
    sys.exit(main())
