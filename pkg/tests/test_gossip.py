import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pdesrc.domain import Box, SensorNetwork, SourceSet, UniformGrid
from pdesrc.errors import ConfigError, ConnectivityFailure
from pdesrc.estimator import EstimatorOptions, estimate_centralized, generalized_measurements
from pdesrc.forward import SampleMatrix, synthesize_samples
from pdesrc.gossip import (
    CommGraph,
    GossipState,
    edges_within_radius,
    estimate_distributed,
    generate_rgg,
    gossip_rounds,
    graph_from_positions,
    local_measures,
    trajectories_to_csv,
)
from pdesrc.greens import FieldModel
from pdesrc.weights import WeightMethod, uniform_coeffs


def small_problem(n_sensors=50, K=(49,), k_min=(42,)):
    dx = 1.0 / (n_sensors - 1)
    grid = UniformGrid((n_sensors,), (dx,), (0.0,))
    times = np.arange(0.0, 20.0 + 1e-9, 0.05)
    net = SensorNetwork.uniform(grid, times, Box([0.0], [1.0]))
    model = FieldModel.diffusion(1, 3e-4)
    src = SourceSet([2.0], [0.45], [[0.52]])
    samples = synthesize_samples(model, src, net)
    weights = uniform_coeffs(model, net, K=K, r=1, k_min=k_min)
    return model, net, src, samples, weights


class TestGenerateRgg:
    def test_determinism(self):
        a = generate_rgg(50, 0.3, seed=7)
        b = generate_rgg(50, 0.3, seed=7)
        assert np.array_equal(a.positions, b.positions)
        assert np.array_equal(a.edges, b.edges)

    def test_two_nodes_max_radius(self):
        g = generate_rgg(2, np.sqrt(2), seed=0)
        assert g.n_nodes == 2
        assert g.edges.shape == (1, 2)

    def test_edges_match_bruteforce(self):
        g = generate_rgg(30, 0.35, seed=3)
        expect = set()
        for i in range(30):
            for j in range(i + 1, 30):
                if np.linalg.norm(g.positions[i] - g.positions[j]) <= 0.35:
                    expect.add((i, j))
        assert {tuple(e) for e in g.edges} == expect
        assert g.is_connected()

    def test_impossible_radius_fails(self):
        with pytest.raises(ConnectivityFailure):
            generate_rgg(40, 0.01, seed=0, max_retries=5)

    def test_parameter_validation(self):
        with pytest.raises(ConfigError):
            generate_rgg(1, 0.3, seed=0)
        with pytest.raises(ConfigError):
            generate_rgg(5, 0.0, seed=0)


class TestLocalMeasures:
    def test_single_node_equals_measurements(self):
        model, net, src, samples, weights = small_problem(n_sensors=2, K=(45,), k_min=(44,))
        # restrict to one sensor
        one = SensorNetwork(net.positions[:1], net.times, net.region)
        w1 = uniform_coeffs(model, SensorNetwork.uniform(
            UniformGrid((1,), (1.0,), (0.0,)), net.times, net.region), K=(45,), r=1,
            k_min=(44,))
        s1 = SampleMatrix(samples.values[:1])
        state = local_measures(w1, s1)
        Q = generalized_measurements(w1, s1)
        assert np.allclose(state.values[0], Q.values.reshape(-1))

    def test_mean_equals_centralized(self):
        model, net, src, samples, weights = small_problem()
        state = local_measures(weights, samples)
        Q = generalized_measurements(weights, samples)
        assert np.allclose(state.mean(), Q.values.reshape(-1), rtol=1e-12)

    def test_zero_samples(self):
        model, net, src, samples, weights = small_problem()
        state = local_measures(weights, SampleMatrix(np.zeros_like(samples.values)))
        assert np.all(state.values == 0)

    def test_locality(self, rng):
        model, net, src, samples, weights = small_problem()
        state_a = local_measures(weights, samples)
        tampered = samples.values.copy()
        tampered[1:] += rng.normal(size=tampered[1:].shape)
        state_b = local_measures(weights, SampleMatrix(tampered))
        assert np.allclose(state_a.values[0], state_b.values[0])
        assert not np.allclose(state_a.values[1], state_b.values[1])


class TestGossipRounds:
    def test_pair_average(self):
        graph = CommGraph(np.array([[0.0, 0.0], [1.0, 0.0]]), np.array([[0, 1]]), 1.5)
        state = GossipState(np.array([[1.0 + 0j], [3.0 + 0j]]), (1,), 1, 1.0, (0,))
        out, trace = gossip_rounds(graph, state, rounds=1, seed=0)
        assert np.allclose(out.values, 2.0)
        assert trace.max_deviation()[-1] < 1e-15

    def test_sum_conservation(self, rng):
        graph = generate_rgg(20, 0.5, seed=2)
        values = rng.normal(size=(20, 6)) + 1j * rng.normal(size=(20, 6))
        state = GossipState(values, (6,), 1, 1.0, (0,))
        total_before = state.values.sum(axis=0)
        out, _ = gossip_rounds(graph, state, rounds=10_000, seed=5)
        total_after = out.values.sum(axis=0)
        drift = np.abs(total_after - total_before) / np.abs(total_before)
        assert drift.max() < 1e-12

    def test_update_block_doubly_stochastic(self):
        # One averaging round acts as P = I except a 2x2 block of halves;
        # every row and column of that block sums to one.
        block = np.array([[0.5, 0.5], [0.5, 0.5]])
        assert np.allclose(block.sum(axis=0), 1.0)
        assert np.allclose(block.sum(axis=1), 1.0)
        # and the implied update is exactly what one round applies
        graph = CommGraph(np.array([[0.0, 0.0], [0.4, 0.0]]), np.array([[0, 1]]), 0.5)
        vals = np.array([[2.0 + 1j], [4.0 - 1j]])
        state = GossipState(vals.copy(), (1,), 1, 1.0, (0,))
        out, _ = gossip_rounds(graph, state, rounds=1, seed=1)
        assert np.allclose(out.values, block @ vals)

    def test_variance_contraction_every_round(self, rng):
        graph = generate_rgg(15, 0.5, seed=1)
        values = rng.normal(size=(15, 4)) + 1j * rng.normal(size=(15, 4))
        state = GossipState(values, (4,), 1, 1.0, (0,))
        out, trace = gossip_rounds(graph, state, rounds=2000, seed=9, trace_stride=1)
        variances = np.sum(trace.deviations**2, axis=1)
        assert np.all(np.diff(variances) <= 1e-12 * variances[0])

    def test_trace_csv_format(self, tmp_path):
        graph = generate_rgg(4, 1.0, seed=0)
        state = GossipState(np.ones((4, 2), dtype=complex), (2,), 1, 1.0, (0,))
        out, trace = gossip_rounds(graph, state, rounds=10, seed=0, trace_stride=5)
        path = tmp_path / "trace.csv"
        trace.to_csv(path)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "round,node,deviation"
        assert lines[1].startswith("0,0,")


class TestEstimateDistributed:
    def test_converged_nodes_match_centralized(self):
        model, net, src, samples, weights = small_problem()
        graph = generate_rgg(50, 0.3, seed=4)
        opts = EstimatorOptions(k_min=(42,), compute_residual=False)
        result = estimate_distributed(
            model, graph, net, samples, M=1, K=(49,), r=1,
            rounds=60_000, seed=8, options=opts, trajectory_nodes=2,
        )
        central = estimate_centralized(model, net, samples, 1, K=(49,), r=1,
                                       seed=8, options=opts)
        for n in range(graph.n_nodes):
            got = result.node_sources[n]
            assert abs(got.locations[0, 0] - central.sources.locations[0, 0]) < 1e-6
            assert abs(got.activations[0] - central.sources.activations[0]) < 1e-6
            assert abs(got.intensities[0] - central.sources.intensities[0]) < 1e-6

    def test_disagreement_shrinks_over_windows(self):
        model, net, src, samples, weights = small_problem()
        graph = generate_rgg(50, 0.3, seed=11)
        state = local_measures(weights, samples)
        out, trace = gossip_rounds(graph, state, rounds=30_000, seed=3,
                                   trace_stride=100)
        maxdev = trace.max_deviation()
        windows = np.array_split(maxdev, 6)
        medians = [np.median(w) for w in windows]
        assert all(b < a for a, b in zip(medians, medians[1:]))

    def test_trajectory_csv(self, tmp_path):
        model, net, src, samples, weights = small_problem()
        graph = generate_rgg(50, 0.3, seed=4)
        opts = EstimatorOptions(k_min=(42,), compute_residual=False)
        result = estimate_distributed(
            model, graph, net, samples, M=1, K=(49,), r=1,
            rounds=2_000, seed=8, options=opts, trajectory_nodes=3,
            trajectory_stride=500,
        )
        path = tmp_path / "traj.csv"
        trajectories_to_csv(result, path, net.dimension)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "round,node,c,tau,xi_1"
        assert len(lines) == 1 + 3 * len(result.trajectory_rounds)

    def test_graph_size_mismatch(self):
        model, net, src, samples, weights = small_problem()
        graph = generate_rgg(10, 0.5, seed=0)
        from pdesrc.errors import ShapeError
        with pytest.raises(ShapeError):
            estimate_distributed(model, graph, net, samples, M=1, K=(49,), r=1,
                                 rounds=10, seed=0,
                                 options=EstimatorOptions(k_min=(42,)))
