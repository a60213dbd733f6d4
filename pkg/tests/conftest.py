"""Shared synthetic data builders for the test suite."""

import numpy as np
import pytest

from gsdeform import ControlGraph, GaussianCloud, build_control_graph


def random_quats(rng, n):
    q = rng.normal(size=(n, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def random_rotation(rng):
    q = random_quats(rng, 1)[0]
    from gsdeform.quats import quat_to_matrix

    return quat_to_matrix(q)


def make_cloud(n, seed=0, sh_rest=0):
    rng = np.random.default_rng(seed)
    return GaussianCloud(
        centers=rng.uniform(-1.0, 1.0, size=(n, 3)),
        opacities=rng.uniform(0.05, 0.95, size=n),
        scales=rng.uniform(0.05, 0.5, size=(n, 3)),
        rotations=random_quats(rng, n),
        colors_dc=rng.uniform(-1.0, 1.0, size=(n, 3)),
        colors_rest=rng.uniform(-0.5, 0.5, size=(n, sh_rest)) if sh_rest else None,
    )


def make_graph(m, k=None, seed=0):
    """Control graph over a random cloud, defaults to the largest legal k<=8."""
    cloud = make_cloud(max(m, 4), seed=seed)
    if k is None:
        k = min(8, (m - 1) - (m - 1) % 2)
        k = max(k, 2)
    return build_control_graph(cloud, m=m, k=k, seed=seed)


def chain_graph(positions, weight=1.0):
    """Hand-built ragged chain graph 0-1-...-(n-1) with directed both-way edges."""
    positions = np.asarray(positions, dtype=np.float64)
    n = positions.shape[0]
    neighbors, weights = [], []
    for i in range(n):
        ids = [j for j in (i - 1, i + 1) if 0 <= j < n]
        neighbors.append(np.asarray(ids, dtype=np.int64))
        weights.append(np.full(len(ids), weight, dtype=np.float64))
    return ControlGraph(
        node_indices=np.arange(n, dtype=np.int64),
        rest_positions=positions,
        neighbors=neighbors,
        weights=weights,
        k=2,
    )


def rigid_pair(rng, scale=1.0):
    """Random (rotation, translation) pair."""
    return random_rotation(rng), rng.uniform(-scale, scale, size=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
