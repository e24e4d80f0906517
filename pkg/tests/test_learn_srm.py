"""
Tests for surrogate-gradient learning: error signals, three-factor gradients and updates.
"""

import numpy as np
import pytest

from core.error_handler import ShapeError, ValidationError
from core.utils import make_rng
from utils.learn_srm import (
    ErrorMode,
    FeedbackProjection,
    UpdateAccumulator,
    apply_updates,
    edge_gradients,
    error_signals,
    sg_contribution,
    train_step_srm,
)
from utils.network import HyperParams, Parameters, SpikeRecord, init_parameters, step_network
from utils.surrogate import SurrogateKind, output_error, surrogate_derivative
from utils.topology import build_topology, fully_connected, layered


def _single_synapse():
    return build_topology({"generator": "explicit", "neurons": 1, "visible": [0], "exogenous": 1,
                           "edges": [["in:0", 0]]})


def _relaxed_loss(params, topology, hyper, example, kind, state):
    acc = UpdateAccumulator.zeros(topology)
    loss, _ = train_step_srm(params, topology, hyper, example, ErrorMode(), kind, acc,
                             learn_bias=True, relaxed=True, state=state)
    return loss


def _finite_differences(params, topology, hyper, example, kind, state, step=1e-4):
    grads = np.zeros(topology.edge_count)
    bias_grads = np.zeros(topology.neuron_count)
    for target, values in ((grads, "weights"), (bias_grads, "biases")):
        for k in range(target.size):
            up, down = params.copy(), params.copy()
            getattr(up, values)[k] += step
            getattr(down, values)[k] -= step
            target[k] = (_relaxed_loss(up, topology, hyper, example, kind, state)
                         - _relaxed_loss(down, topology, hyper, example, kind, state)) / (2 * step)
    return grads, bias_grads


class TestErrorSignals:
    """Test the three error-signal strategies."""

    def test_zero_errors(self):
        """Test zero visible errors give zero everywhere (direct and random feedback)."""
        topology = fully_connected(2, 3, 1)
        for variant in ("readout_direct", "random_feedback"):
            e = error_signals(ErrorMode(variant), np.zeros(2), topology)
            assert not e.any()

    def test_readout_direct_hidden(self):
        """Test readout_direct leaves hidden neurons at 0."""
        topology = fully_connected(2, 3, 1)
        e = error_signals(ErrorMode("readout_direct"), np.array([0.3, -1.2]), topology)
        np.testing.assert_array_equal(e[topology.visible_index], [0.3, -1.2])
        assert not e[topology.hidden_index].any()

    def test_identity_projection(self):
        """Test random_feedback with B = identity copies the visible error."""
        topology = fully_connected(2, 2, 1)
        projection = FeedbackProjection(ErrorMode("random_feedback"), topology, matrix=np.eye(2))
        e = error_signals(projection, np.array([1.0, 0.0]), topology)
        assert e[topology.hidden[0]] == 1.0
        assert e[topology.hidden[1]] == 0.0

    def test_projected_error(self):
        """Test hidden errors are B times the projected output error."""
        topology = fully_connected(2, 3, 1)
        projection = FeedbackProjection.build(ErrorMode("random_feedback", feedback_seed=4), topology)
        visible = np.array([0.5, -2.0])
        projected = np.array([0.1, -0.3])
        e = error_signals(projection, visible, topology, projected_errors=projected)
        np.testing.assert_allclose(e[topology.hidden_index], projection.matrix @ projected)
        np.testing.assert_array_equal(e[topology.visible_index], visible)

    def test_feedback_bounds(self):
        """Test B entries lie in [-1, 1] / sqrt(|X|) and depend only on the seed."""
        topology = fully_connected(4, 6, 2)
        first = FeedbackProjection.build(ErrorMode("random_feedback", 9), topology)
        second = FeedbackProjection.build(ErrorMode("random_feedback", 9), topology)
        assert first.matrix.shape == (6, 4)
        assert np.abs(first.matrix).max() <= 0.5
        assert first.digest() == second.digest()

    def test_matrix_shape(self):
        """Test a feedback matrix of the wrong shape is rejected."""
        topology = fully_connected(2, 3, 1)
        with pytest.raises(ShapeError):
            FeedbackProjection(ErrorMode("random_feedback"), topology, matrix=np.eye(2))

    def test_local_layer_requires_layers(self):
        """Test local_layer on a graph without hidden layers."""
        with pytest.raises(ValidationError):
            error_signals(ErrorMode("local_layer"), np.zeros(2), fully_connected(2, 2, 1))

    def test_local_layer_error(self):
        """Test each hidden layer gets R^T (sigma(R x) - target) from its own readout."""
        topology = layered(3, [4, 2], 2)
        projection = FeedbackProjection.build(ErrorMode("local_layer", 1), topology)
        smoothed = make_rng(2).random(topology.neuron_count)
        targets = np.array([1.0, 0.0])
        e = error_signals(projection, np.array([0.2, 0.4]), topology, targets=targets, smoothed=smoothed)
        for layer, readout in zip(topology.layers, projection.readouts):
            index = list(layer)
            prediction = 1.0 / (1.0 + np.exp(-(readout @ smoothed[index])))
            np.testing.assert_allclose(e[index], readout.T @ (prediction - targets))
        assert projection.readouts[0].shape == (2, 4)
        assert projection.readouts[1].shape == (2, 2)

    def test_local_layer_needs_targets(self):
        """Test local_layer without targets or smoothed outputs."""
        topology = layered(3, [4], 2)
        with pytest.raises(ValidationError):
            error_signals(ErrorMode("local_layer"), np.zeros(2), topology)

    def test_unknown_mode(self):
        """Test unknown error mode names."""
        with pytest.raises(ValidationError):
            ErrorMode("broadcast")

    def test_visible_error_count(self):
        """Test visible errors must cover every visible neuron."""
        with pytest.raises(ShapeError):
            error_signals(ErrorMode(), np.zeros(3), fully_connected(2, 1, 0))


class TestThreeFactor:
    """Test the per-step contribution and its aggregation over time."""

    def test_zero_error(self):
        """Test e = 0 gives 0."""
        assert sg_contribution(0.0, 1.0, 1.0, SurrogateKind(), 5.0) == 0.0

    def test_silent_pre(self):
        """Test pre_trace = 0 gives 0."""
        assert sg_contribution(3.0, 1.0, 1.0, SurrogateKind(), 0.0) == 0.0

    def test_product(self):
        """Test e = 1, sigmoid slope 1 at threshold, pre = 2 gives 0.5."""
        assert sg_contribution(1.0, 1.0, 1.0, SurrogateKind("sigmoid", 1.0), 2.0) == pytest.approx(0.5)

    def test_edge_gradients(self, rng):
        """Test edge gradients sum post * pre over time per edge."""
        topology = fully_connected(2, 1, 2)
        post = rng.normal(size=(3, 6))
        pre = rng.normal(size=(5, 6))
        grads = edge_gradients(post, pre, topology)
        for e, (j, i) in enumerate(topology.edges):
            assert grads[e] == pytest.approx(float(post[i] @ pre[j]))

    def test_scale(self, rng):
        """Test scaling every error by c scales every gradient by exactly c."""
        topology = layered(3, [2], 2)
        e = rng.normal(size=(4, 5))
        u = rng.normal(size=(4, 5))
        pre = rng.random((7, 5))
        kind = SurrogateKind()
        base = edge_gradients(sg_contribution(e, u, 1.0, kind, 1.0), pre, topology)
        scaled = edge_gradients(sg_contribution(4.0 * e, u, 1.0, kind, 1.0), pre, topology)
        np.testing.assert_array_equal(scaled, 4.0 * base)


class TestTrainStep:
    """Test train_step_srm end to end on tiny networks."""

    def test_single_synapse_finite_difference(self, rng, make_random_state):
        """Test T=1 gradient of one synapse against central differences."""
        topology = _single_synapse()
        hyper = HyperParams()
        kind = SurrogateKind("sigmoid", 2.0)
        params = Parameters(np.array([0.8]), np.array([0.1]))
        state = make_random_state(topology, rng)
        example = (SpikeRecord(np.array([[1]])), SpikeRecord(np.array([[1]])))

        acc = UpdateAccumulator.zeros(topology)
        train_step_srm(params, topology, hyper, example, ErrorMode(), kind, acc,
                       learn_bias=True, relaxed=True, state=state)
        grads, bias_grads = _finite_differences(params, topology, hyper, example, kind, state)
        np.testing.assert_allclose(acc.grads, grads, rtol=1e-5)
        np.testing.assert_allclose(acc.bias_grads, bias_grads, rtol=1e-5)

    def test_layered_finite_difference(self, make_random_state):
        """Test T=1 relaxed gradients of 20 random 2-layer networks against central differences."""
        rng = make_rng(31)
        hyper = HyperParams()
        kind = SurrogateKind()
        topology = layered(3, [4], 2)
        for _ in range(20):
            params = init_parameters(topology, rng, scale=1.0)
            params.biases[:] = rng.normal(0.0, 0.5, topology.neuron_count)
            state = make_random_state(topology, rng)
            example = (SpikeRecord(rng.integers(0, 2, (3, 1))), SpikeRecord(rng.integers(0, 2, (2, 1))))

            acc = UpdateAccumulator.zeros(topology)
            train_step_srm(params, topology, hyper, example, ErrorMode(), kind, acc,
                           learn_bias=True, relaxed=True, state=state)
            grads, bias_grads = _finite_differences(params, topology, hyper, example, kind, state)
            np.testing.assert_allclose(acc.grads, grads, rtol=1e-4, atol=1e-10)
            np.testing.assert_allclose(acc.bias_grads, bias_grads, rtol=1e-4, atol=1e-10)

    def test_saturated_fit(self, rng):
        """Test targets matching saturated outputs give vanishing gradients."""
        topology = _single_synapse()
        inputs = SpikeRecord(rng.integers(0, 2, (1, 12)))
        for bias, target in ((51.0, 1), (-50.0, 0)):
            params = Parameters(np.array([0.5]), np.array([bias]))
            acc = UpdateAccumulator.zeros(topology)
            example = (inputs, SpikeRecord(np.full((1, 12), target)))
            loss, _ = train_step_srm(params, topology, HyperParams(), example, ErrorMode(), SurrogateKind(), acc,
                                     learn_bias=True)
            assert np.abs(acc.grads).max() < 1e-12
            assert np.abs(acc.bias_grads).max() < 1e-12
            assert loss < 1e-12

    def test_doubling(self, rng):
        """Test two identical examples accumulate exactly twice the gradient."""
        topology = layered(3, [3], 2)
        params = init_parameters(topology, rng, scale=2.0)
        example = (SpikeRecord(rng.integers(0, 2, (3, 20))), SpikeRecord(rng.integers(0, 2, (2, 20))))
        mode = ErrorMode("random_feedback", 3)
        once = UpdateAccumulator.zeros(topology)
        train_step_srm(params, topology, HyperParams(), example, mode, SurrogateKind(), once)
        twice = UpdateAccumulator.zeros(topology)
        for _ in range(2):
            train_step_srm(params, topology, HyperParams(), example, mode, SurrogateKind(), twice)
        np.testing.assert_array_equal(twice.grads, 2.0 * once.grads)
        assert twice.count == 2

    def test_zero_input(self, rng):
        """Test zero input from the zero state gives exactly zero weight updates."""
        topology = layered(3, [4], 2)
        params = init_parameters(topology, rng)
        for variant in ("readout_direct", "random_feedback", "local_layer"):
            acc = UpdateAccumulator.zeros(topology)
            example = (SpikeRecord.zeros(3, 15), SpikeRecord(rng.integers(0, 2, (2, 15))))
            train_step_srm(params, topology, HyperParams(), example, ErrorMode(variant), SurrogateKind(), acc)
            assert not acc.grads.any()
            assert not acc.bias_grads.any()

    def test_projection_immutable(self, rng):
        """Test feedback matrices keep their hash across training steps and refuse writes."""
        topology = layered(4, [3], 2)
        projection = FeedbackProjection.build(ErrorMode("random_feedback", 5), topology)
        digest = projection.digest()
        params = init_parameters(topology, rng, scale=2.0)
        acc = UpdateAccumulator.zeros(topology)
        for _ in range(5):
            example = (SpikeRecord(rng.integers(0, 2, (4, 10))), SpikeRecord(rng.integers(0, 2, (2, 10))))
            train_step_srm(params, topology, HyperParams(), example, projection, SurrogateKind(), acc)
            params = apply_updates(params, acc, 0.5, 1)
        assert projection.digest() == digest
        with pytest.raises(ValueError):
            projection.matrix[0, 0] = 1.0

    def test_target_shape(self):
        """Test a target with the wrong number of rows."""
        topology = _single_synapse()
        params = Parameters(np.zeros(1), np.zeros(1))
        with pytest.raises(ShapeError):
            train_step_srm(params, topology, HyperParams(), (None, SpikeRecord.zeros(2, 3)), ErrorMode(),
                           SurrogateKind(), UpdateAccumulator.zeros(topology))

    def test_hidden_gradients_follow_feedback(self, rng, make_random_state):
        """Test random_feedback hidden post factors use B times the output error."""
        topology = layered(2, [2], 2)
        params = init_parameters(topology, rng, scale=2.0)
        state = make_random_state(topology, rng)
        example = (SpikeRecord(rng.integers(0, 2, (2, 1))), SpikeRecord(np.array([[1], [0]])))
        projection = FeedbackProjection.build(ErrorMode("random_feedback", 2), topology)
        acc = UpdateAccumulator.zeros(topology)
        train_step_srm(params, topology, HyperParams(), example, projection, SurrogateKind(), acc,
                       learn_bias=True, state=state)

        after, _ = step_network(state, params, topology, HyperParams(), example[0].spikes[:, 0])
        u = after.potential
        hidden = topology.hidden_index
        delta = output_error(example[1].spikes[:, 0], u[topology.visible_index], 1.0, 1.0)
        expected = (projection.matrix @ delta) * surrogate_derivative(u[hidden], 1.0)
        np.testing.assert_allclose(acc.bias_grads[hidden], expected, rtol=1e-12, atol=1e-15)


class TestApplyUpdates:
    """Test the SGD step."""

    def test_zero_grads(self):
        """Test zero gradients leave parameters unchanged."""
        topology = fully_connected(1, 1, 1)
        params = init_parameters(topology, 0)
        acc = UpdateAccumulator.zeros(topology)
        acc.count = 1
        updated = apply_updates(params, acc, 0.1, 1)
        np.testing.assert_array_equal(updated.weights, params.weights)

    def test_zero_rate(self, rng):
        """Test a zero learning rate leaves parameters unchanged."""
        topology = fully_connected(1, 1, 1)
        params = init_parameters(topology, 0)
        acc = UpdateAccumulator.zeros(topology)
        acc.add(rng.normal(size=topology.edge_count), rng.normal(size=2))
        updated = apply_updates(params, acc, 0.0, 1)
        np.testing.assert_array_equal(updated.weights, params.weights)
        np.testing.assert_array_equal(updated.biases, params.biases)

    def test_arithmetic(self):
        """Test grad 0.5, lr 0.1, batch 1 lowers w by 0.05."""
        topology = _single_synapse()
        params = Parameters(np.array([1.0]), np.zeros(1))
        acc = UpdateAccumulator.zeros(topology)
        acc.add(np.array([0.5]), np.zeros(1))
        updated = apply_updates(params, acc, 0.1, 1)
        assert updated.weights[0] == pytest.approx(0.95)

    def test_batch_mean(self):
        """Test the step uses the mean over the batch and zeroes the accumulator."""
        topology = _single_synapse()
        params = Parameters(np.array([1.0]), np.zeros(1))
        acc = UpdateAccumulator.zeros(topology)
        acc.add(np.array([0.5]), np.array([1.0]))
        acc.add(np.array([1.5]), np.array([1.0]))
        updated = apply_updates(params, acc, 0.1, 2)
        assert updated.weights[0] == pytest.approx(0.9)
        assert updated.biases[0] == pytest.approx(-0.1)
        assert acc.count == 0 and not acc.grads.any()

    def test_count_mismatch(self):
        """Test the accumulator must hold exactly one batch."""
        topology = _single_synapse()
        acc = UpdateAccumulator.zeros(topology)
        acc.add(np.ones(1), np.zeros(1))
        with pytest.raises(ValidationError):
            apply_updates(Parameters(np.zeros(1), np.zeros(1)), acc, 0.1, 2)

    def test_merge(self):
        """Test merging worker accumulators sums grads and counts."""
        topology = _single_synapse()
        first, second = UpdateAccumulator.zeros(topology), UpdateAccumulator.zeros(topology)
        first.add(np.array([1.0]), np.array([2.0]))
        second.add(np.array([3.0]), np.array([-1.0]))
        first.merge(second)
        assert first.count == 2
        assert first.grads[0] == 4.0
        assert first.bias_grads[0] == 1.0
