"""Control-node sampling and topology-aware neighbor graph construction.

Control nodes are drawn from the Gaussian centers by farthest-point
sampling. A K/2-nearest-neighbor graph (symmetrized, connectivity
repaired) provides the metric structure, and the final per-node
neighborhoods are the K nearest nodes by shortest-path distance inside
that graph, which keeps thin or folded structures from linking across
Euclidean shortcuts.
"""

import heapq
import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .config import DEFAULT_CONTROL_COUNT, DEFAULT_GRAPH_DEGREE
from .errors import DisconnectedGraphError

EdgeSet = Dict[Tuple[int, int], float]


@dataclass
class ControlGraph:
    """Sparse deformation graph over sampled control nodes.

    neighbors[i] holds the directed neighbor ids of node i and weights[i]
    the matching positive edge weights. Graphs produced by
    :func:`build_control_graph` have exactly ``k`` neighbors per node;
    hand-built graphs may be ragged.
    """

    node_indices: np.ndarray
    rest_positions: np.ndarray
    neighbors: List[np.ndarray]
    weights: List[np.ndarray]
    k: int
    seed: Optional[int] = None
    k_half_edges: Optional[EdgeSet] = None
    _packed: Optional[Tuple[np.ndarray, np.ndarray]] = field(
        default=None, repr=False, compare=False
    )

    def __post_init__(self):
        self.node_indices = np.asarray(self.node_indices, dtype=np.int64)
        self.rest_positions = np.ascontiguousarray(self.rest_positions, dtype=np.float64)
        self.neighbors = [np.asarray(n, dtype=np.int64) for n in self.neighbors]
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]

    def __len__(self):
        return self.rest_positions.shape[0]

    def validate(self, exact_k=True):
        m = len(self)
        for i, (nbr, wgt) in enumerate(zip(self.neighbors, self.weights)):
            if exact_k and nbr.shape[0] != self.k:
                raise ValueError(f"node {i} has {nbr.shape[0]} neighbors, expected {self.k}")
            if nbr.shape != wgt.shape:
                raise ValueError(f"node {i}: neighbor/weight length mismatch")
            if np.any(nbr == i):
                raise ValueError(f"node {i} lists itself as a neighbor")
            if len(np.unique(nbr)) != nbr.shape[0]:
                raise ValueError(f"node {i} has duplicate neighbors")
            if np.any((nbr < 0) | (nbr >= m)):
                raise ValueError(f"node {i} has an out-of-range neighbor")
            if np.any(wgt <= 0.0):
                raise ValueError(f"node {i} has a non-positive edge weight")

    def packed(self):
        """(M, Kmax) neighbor-id and weight arrays, padded with self / 0.

        Zero-weight padding is transparent to the energy, the rotation
        covariances and the Laplacian, so vectorized consumers can ignore
        raggedness.
        """
        if self._packed is None:
            m = len(self)
            kmax = max((n.shape[0] for n in self.neighbors), default=0)
            nbr = np.tile(np.arange(m, dtype=np.int64)[:, None], (1, kmax))
            wgt = np.zeros((m, kmax), dtype=np.float64)
            for i, (ni, wi) in enumerate(zip(self.neighbors, self.weights)):
                nbr[i, : ni.shape[0]] = ni
                wgt[i, : wi.shape[0]] = wi
            self._packed = (nbr, wgt)
        return self._packed

    def to_json_dict(self):
        return {
            "node_indices": self.node_indices.tolist(),
            "rest_positions": self.rest_positions.tolist(),
            "neighbors": [n.tolist() for n in self.neighbors],
            "weights": [w.tolist() for w in self.weights],
            "k": int(self.k),
            "seed": None if self.seed is None else int(self.seed),
        }

    @classmethod
    def from_json_dict(cls, d):
        return cls(
            node_indices=np.asarray(d["node_indices"], dtype=np.int64),
            rest_positions=np.asarray(d["rest_positions"], dtype=np.float64),
            neighbors=[np.asarray(n, dtype=np.int64) for n in d["neighbors"]],
            weights=[np.asarray(w, dtype=np.float64) for w in d["weights"]],
            k=int(d["k"]),
            seed=d.get("seed"),
        )

    def save_json(self, path):
        with open(path, "w") as f:
            json.dump(self.to_json_dict(), f)

    @classmethod
    def load_json(cls, path):
        with open(path) as f:
            return cls.from_json_dict(json.load(f))


def farthest_point_sample(points, m, seed=0):
    """Greedy farthest-point sampling; returns m distinct point indices.

    The first index is drawn uniformly by a generator seeded with
    ``seed``; every later pick maximizes the minimum distance to the
    points already chosen, ties going to the smallest index.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= m <= {n}, got m={m}")
    rng = np.random.default_rng(seed)
    first = int(rng.integers(n))
    chosen = np.empty(m, dtype=np.int64)
    chosen[0] = first
    min_d2 = np.sum((points - points[first]) ** 2, axis=1)
    for i in range(1, m):
        nxt = int(np.argmax(min_d2))  # first occurrence == smallest index
        chosen[i] = nxt
        np.minimum(min_d2, np.sum((points - points[nxt]) ** 2, axis=1), out=min_d2)
    return chosen


def _pairwise_distances(positions):
    diff = positions[:, None, :] - positions[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def build_initial_graph(positions, k_half):
    """Symmetrized k_half-NN edge set with greedy connectivity repair.

    Returns ``{(i, j): euclidean_length}`` with i < j. If the symmetrized
    graph is disconnected, the two components whose closest node pair is
    nearest are bridged repeatedly until one component remains.
    """
    positions = np.asarray(positions, dtype=np.float64)
    n = positions.shape[0]
    if n < 2:
        raise ValueError("need at least 2 positions")
    if k_half < 1:
        raise ValueError("k_half must be >= 1")
    k_half = min(k_half, n - 1)

    dist = _pairwise_distances(positions)
    np.fill_diagonal(dist, np.inf)
    # stable argsort: equal distances keep ascending index order
    order = np.argsort(dist, axis=1, kind="stable")[:, :k_half]

    edges: EdgeSet = {}
    for i in range(n):
        for j in order[i]:
            a, b = (i, int(j)) if i < j else (int(j), i)
            edges[(a, b)] = dist[a, b]

    # union-find connectivity repair
    parent = np.arange(n)

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb

    roots = np.array([find(i) for i in range(n)])
    while len(np.unique(roots)) > 1:
        cross = roots[:, None] != roots[None, :]
        candidate = np.where(cross, dist, np.inf)
        flat = int(np.argmin(candidate))  # smallest flat index breaks ties
        a, b = divmod(flat, n)
        a, b = (a, b) if a < b else (b, a)
        edges[(a, b)] = dist[a, b]
        parent[find(a)] = find(b)
        roots = np.array([find(i) for i in range(n)])

    return edges


def _adjacency(edges, n):
    adj = [[] for _ in range(n)]
    for (a, b), w in edges.items():
        adj[a].append((b, w))
        adj[b].append((a, w))
    return adj


def _is_connected(adj, n):
    if n == 0:
        return True
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        u = stack.pop()
        for v, _ in adj[u]:
            if not seen[v]:
                seen[v] = True
                stack.append(v)
    return bool(seen.all())


def geodesic_knn(edges, positions, k):
    """Per-node k nearest nodes by shortest-path distance in the edge set.

    Runs an early-terminated Dijkstra from every node (stops after k
    settled non-source nodes, valid because settle order is
    nondecreasing in distance). Ties resolve to the smaller node id via
    the (distance, id) heap order. Returns (ids, dists), both (n, k),
    sorted by ascending (distance, id).
    """
    positions = np.asarray(positions, dtype=np.float64)
    n = positions.shape[0]
    if k >= n:
        raise ValueError(f"k must be < number of nodes ({n})")
    adj = _adjacency(edges, n)
    if not _is_connected(adj, n):
        raise DisconnectedGraphError("geodesic_knn requires a connected edge set")

    ids = np.empty((n, k), dtype=np.int64)
    dists = np.empty((n, k), dtype=np.float64)
    for s in range(n):
        heap = [(0.0, s)]
        settled = set()
        found = 0
        while heap and found < k:
            d, u = heapq.heappop(heap)
            if u in settled:
                continue
            settled.add(u)
            if u != s:
                ids[s, found] = u
                dists[s, found] = d
                found += 1
                if found == k:
                    break
            for v, w in adj[u]:
                if v not in settled:
                    heapq.heappush(heap, (d + w, v))
    return ids, dists


def build_control_graph(
    cloud,
    m=DEFAULT_CONTROL_COUNT,
    k=DEFAULT_GRAPH_DEGREE,
    seed=0,
    weighting="uniform",
):
    """Sample m control nodes from a cloud and build their K-NN graph.

    weighting: "uniform" gives every directed edge weight 1; the
    "inverse_distance" switch uses 1/geodesic length instead.
    """
    points = cloud.centers
    n = points.shape[0]
    if m > n:
        raise ValueError(f"cannot sample {m} controls from {n} Gaussians")
    if k < 2 or k % 2 != 0:
        raise ValueError("k must be even and >= 2")
    if k >= m:
        raise ValueError("k must be smaller than the control count")
    if weighting not in ("uniform", "inverse_distance"):
        raise ValueError(f"unknown weighting {weighting!r}")

    node_indices = farthest_point_sample(points, m, seed=seed)
    rest = points[node_indices]
    edges = build_initial_graph(rest, k // 2)
    nbr_ids, nbr_dists = geodesic_knn(edges, rest, k)

    if weighting == "uniform":
        wcols = [np.ones(k, dtype=np.float64) for _ in range(m)]
    else:
        span = np.linalg.norm(rest.max(axis=0) - rest.min(axis=0))
        floor = max(span, 1.0) * 1e-12
        wcols = [1.0 / np.maximum(nbr_dists[i], floor) for i in range(m)]

    graph = ControlGraph(
        node_indices=node_indices,
        rest_positions=rest,
        neighbors=[nbr_ids[i] for i in range(m)],
        weights=wcols,
        k=k,
        seed=seed,
        k_half_edges=edges,
    )
    graph.validate(exact_k=True)
    return graph
