"""Distributed estimation: geometric comm graphs and pairwise randomised gossip.

Nodes hold local weighted measures whose network average equals the
generalised measurements; random neighbour pairs average their vectors until
every node can run the harmonic retrieval on its own copy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .domain import DomainScaling, SensorNetwork, SourceSet
from .errors import ConfigError, ConnectivityFailure, ShapeError
from .estimator import (
    EstimatorOptions,
    build_weights,
    extract_sources,
    validity_flags,
)
from .forward import MeasurementTensor, SampleMatrix
from .greens import FieldModel, TemporalFilter
from .weights import WeightMethod, WeightSet


@dataclass(frozen=True)
class CommGraph:
    """Undirected communication graph over node positions."""

    positions: np.ndarray
    edges: np.ndarray  # (E, 2) int, i < j, no self loops
    r_con: float

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        edges = np.asarray(self.edges, dtype=int).reshape(-1, 2)
        if np.any(edges[:, 0] == edges[:, 1]):
            raise ValueError("self loops are not allowed")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "edges", edges)

    @property
    def n_nodes(self) -> int:
        return self.positions.shape[0]

    def neighbor_lists(self) -> list:
        adj = [[] for _ in range(self.n_nodes)]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        return [np.asarray(sorted(a), dtype=int) for a in adj]

    def is_connected(self) -> bool:
        n = self.n_nodes
        if n <= 1:
            return True
        if self.edges.size == 0:
            return False
        data = np.ones(self.edges.shape[0])
        mat = coo_matrix((data, (self.edges[:, 0], self.edges[:, 1])), shape=(n, n))
        n_comp, _ = connected_components(mat, directed=False)
        return n_comp == 1


def edges_within_radius(positions: np.ndarray, r_con: float) -> np.ndarray:
    pos = np.atleast_2d(np.asarray(positions, dtype=float))
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.linalg.norm(diff, axis=-1)
    i, j = np.nonzero(np.triu(dist <= r_con, k=1))
    return np.stack([i, j], axis=1)


def graph_from_positions(positions: np.ndarray, r_con: float) -> CommGraph:
    """Geometric graph over given node positions (edge iff distance <= r_con)."""
    return CommGraph(positions, edges_within_radius(positions, r_con), r_con)


def generate_rgg(
    N: int,
    r_con: float,
    seed: int,
    dimension: int = 2,
    max_retries: int = 100,
) -> CommGraph:
    """Connected random geometric graph on the unit box.

    Node positions are uniform; disconnected draws are rejected with fresh
    sub-seeds, deterministically in ``seed``.
    """
    if N < 2:
        raise ConfigError("need at least two nodes")
    if not 0 < r_con <= np.sqrt(dimension):
        raise ConfigError("r_con must lie in (0, sqrt(d)]")
    for attempt in range(max_retries):
        rng = np.random.default_rng([seed, attempt])
        pos = rng.uniform(0.0, 1.0, size=(N, dimension))
        graph = graph_from_positions(pos, r_con)
        if graph.is_connected():
            return graph
    raise ConnectivityFailure(
        f"no connected G({N}, {r_con}) in {max_retries} draws; increase r_con"
    )


@dataclass
class GossipState:
    """Per-node measure vectors; their sum is invariant under gossip."""

    values: np.ndarray  # (N, n_entries) complex
    k_shape: tuple
    r: int
    T: float
    k_min: tuple
    rounds_done: int = 0

    @property
    def n_nodes(self) -> int:
        return self.values.shape[0]

    def mean(self) -> np.ndarray:
        return np.mean(self.values, axis=0)

    def node_tensor(self, n: int) -> MeasurementTensor:
        return MeasurementTensor(
            self.values[n].reshape(self.k_shape), r=self.r, T=self.T, k_min=self.k_min
        )

    def mean_tensor(self) -> MeasurementTensor:
        return MeasurementTensor(
            self.mean().reshape(self.k_shape), r=self.r, T=self.T, k_min=self.k_min
        )

    def deviations(self) -> np.ndarray:
        """Per-node relative distance from the network average."""
        avg = self.mean()
        scale = np.linalg.norm(avg)
        if scale == 0:
            scale = 1.0
        return np.linalg.norm(self.values - avg, axis=1) / scale


def local_measures(weights: WeightSet, samples: SampleMatrix) -> GossipState:
    """Initial gossip state: y_n = N * sum_l w_{n,l} phi_n(t_l).

    Node n touches only its own sample row and weight slice, so the network
    average of the y_n equals the centralised measurement tensor exactly.
    """
    values = weights.node_measures(samples)  # (N, prod k)
    return GossipState(
        values=values,
        k_shape=weights.k_shape,
        r=weights.r,
        T=weights.T,
        k_min=weights.k_min,
    )


@dataclass
class GossipTrace:
    rounds: np.ndarray  # (R,)
    deviations: np.ndarray  # (R, N) per-node relative deviation

    def max_deviation(self) -> np.ndarray:
        return np.max(self.deviations, axis=1)

    def to_csv(self, path) -> None:
        lines = ["round,node,deviation"]
        for ri, rd in enumerate(self.rounds):
            for n in range(self.deviations.shape[1]):
                lines.append(f"{int(rd)},{n},{float(self.deviations[ri, n])!r}")
        text = "\n".join(lines) + "\n"
        if hasattr(path, "write"):
            path.write(text)
        else:
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)


def gossip_rounds(
    graph: CommGraph,
    state: GossipState,
    rounds: int,
    seed: int,
    trace_stride: Optional[int] = None,
    snapshot_nodes: Optional[Sequence[int]] = None,
    snapshot_stride: Optional[int] = None,
):
    """Run pairwise randomised gossip for a fixed round budget.

    Each round one uniformly random node averages its vector with one
    uniformly random neighbour.  Node and neighbour draws come from a single
    seeded stream, so traces are bit-reproducible.  Returns the new state, a
    deviation trace, and (optionally) snapshots of selected nodes' vectors.
    """
    if not graph.is_connected():
        raise ConfigError("gossip requires a connected graph")
    if graph.n_nodes != state.n_nodes:
        raise ShapeError("graph and state disagree on the node count")
    values = state.values.copy()
    adj = graph.neighbor_lists()
    degrees = np.array([len(a) for a in adj])
    if np.any(degrees == 0):
        raise ConfigError("isolated node in communication graph")
    rng = np.random.default_rng(seed)
    wake = rng.integers(0, graph.n_nodes, size=rounds)
    pick = rng.random(rounds)
    if trace_stride is None:
        trace_stride = max(1, rounds // 100)
    trace_rounds = []
    trace_devs = []
    snaps = []
    snap_rounds = []

    def record(idx):
        work = GossipState(values, state.k_shape, state.r, state.T, state.k_min)
        trace_rounds.append(idx)
        trace_devs.append(work.deviations())

    record(0)
    if snapshot_nodes is not None and snapshot_stride:
        snap_rounds.append(0)
        snaps.append(values[list(snapshot_nodes)].copy())
    for i in range(rounds):
        n = wake[i]
        nbrs = adj[n]
        m = nbrs[int(pick[i] * len(nbrs))]
        avg = 0.5 * (values[n] + values[m])
        values[n] = avg
        values[m] = avg
        done = i + 1
        if done % trace_stride == 0 or done == rounds:
            record(done)
        if snapshot_nodes is not None and snapshot_stride and (
            done % snapshot_stride == 0 or done == rounds
        ):
            snap_rounds.append(done)
            snaps.append(values[list(snapshot_nodes)].copy())
    out_state = GossipState(
        values, state.k_shape, state.r, state.T, state.k_min,
        rounds_done=state.rounds_done + rounds,
    )
    trace = GossipTrace(np.asarray(trace_rounds), np.asarray(trace_devs))
    if snapshot_nodes is None or not snapshot_stride:
        return out_state, trace
    return out_state, trace, (np.asarray(snap_rounds), np.asarray(snaps))


@dataclass
class DistributedResult:
    node_sources: list  # SourceSet per node
    node_valid: list  # bool arrays
    trace: GossipTrace
    trajectories: dict  # node -> array (R, 2 + d) columns c, tau, xi...
    trajectory_rounds: np.ndarray
    scaling: DomainScaling
    state: GossipState


def estimate_distributed(
    model: FieldModel,
    graph: CommGraph,
    net: SensorNetwork,
    samples: SampleMatrix,
    M: int,
    K: Sequence[int],
    r: int,
    rounds: int,
    seed: int = 0,
    method: WeightMethod = WeightMethod.CLOSED_FORM,
    filt: Optional[TemporalFilter] = None,
    options: Optional[EstimatorOptions] = None,
    trace_stride: Optional[int] = None,
    trajectory_nodes: int = 3,
    trajectory_stride: Optional[int] = None,
) -> DistributedResult:
    """Gossip consensus on the measurements, then per-node source extraction.

    Weight computation happens once at setup (uniform nodes can do this
    locally; least-squares weights require the global geometry and are
    distributed at deployment).  Parameter trajectories of a few sampled nodes
    are extracted at snapshot strides, mirroring the per-round evolution
    diagnostic.
    """
    options = options or EstimatorOptions()
    samples.check_against(net)
    if graph.n_nodes != net.n_sensors:
        raise ShapeError("communication graph and sensor network sizes differ")
    scaling = DomainScaling.for_region(
        net.region, net.window if net.window > 0 else 1.0, options.headroom
    )
    weights, work_net, work_samples = build_weights(
        model, net, samples, K, r, method, filt, scaling, options
    )
    if work_net is not net:
        raise ConfigError("distributed mode requires weights on the physical sensors")
    state0 = local_measures(weights, work_samples)
    rng = np.random.default_rng([seed, 7])
    n_traj = min(trajectory_nodes, graph.n_nodes)
    traj_nodes = np.sort(rng.choice(graph.n_nodes, size=n_traj, replace=False))
    if trajectory_stride is None:
        trajectory_stride = max(1, rounds // 50)
    state, trace, (snap_rounds, snaps) = gossip_rounds(
        graph,
        state0,
        rounds,
        seed,
        trace_stride=trace_stride,
        snapshot_nodes=traj_nodes,
        snapshot_stride=trajectory_stride,
    )
    node_sources = []
    node_valid = []
    for n in range(graph.n_nodes):
        src, harm = extract_sources(
            state.node_tensor(n), M, scaling, seed=seed, window=options.esprit_window
        )
        node_sources.append(src)
        node_valid.append(
            validity_flags(src, harm, net.region,
                           options.intensity_threshold, options.modulus_band)
        )
    trajectories = {}
    for idx, n in enumerate(traj_nodes):
        rows = []
        for s in range(snap_rounds.size):
            tensor = MeasurementTensor(
                snaps[s, idx].reshape(state.k_shape), r=r, T=state.T, k_min=state.k_min
            )
            try:
                src, _ = extract_sources(tensor, M, scaling, seed=seed,
                                         window=options.esprit_window)
                best = int(np.argmax(np.abs(src.intensities)))
                rows.append(
                    [src.intensities[best], src.activations[best], *src.locations[best]]
                )
            except Exception:
                rows.append([np.nan] * (2 + net.dimension))
        trajectories[int(n)] = np.asarray(rows)
    return DistributedResult(
        node_sources=node_sources,
        node_valid=node_valid,
        trace=trace,
        trajectories=trajectories,
        trajectory_rounds=snap_rounds,
        scaling=scaling,
        state=state,
    )


def trajectories_to_csv(result: DistributedResult, path, dimension: int) -> None:
    """CSV layout: ``round,node,c,tau,xi_1..xi_d`` (strongest source per node)."""
    header = "round,node,c,tau," + ",".join(f"xi_{i+1}" for i in range(dimension))
    lines = [header]
    for node, rows in sorted(result.trajectories.items()):
        for ri, rd in enumerate(result.trajectory_rounds):
            vals = ",".join(repr(float(v)) for v in rows[ri])
            lines.append(f"{int(rd)},{node},{vals}")
    text = "\n".join(lines) + "\n"
    if hasattr(path, "write"):
        path.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
