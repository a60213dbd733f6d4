"""Propagate the sparse node deformation to the dense Gaussians.

Each Gaussian is bound once, in rest pose, to its nearest control nodes
with inverse-distance weights; afterwards every drag only blends the
per-node rigid motions: centers through the weighted rigid transforms,
orientations through a sign-aligned quaternion average.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import DEFAULT_SKIN_NEIGHBORS
from .errors import ValidationError
from .quats import matrix_to_quat, quat_multiply
from .splat_io import GaussianCloud
from .util import worker_count

_CHUNK = 32768


@dataclass
class SkinBinding:
    """Per-Gaussian control supports: ids (N, K~) and weights (N, K~)."""

    control_ids: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.control_ids = np.ascontiguousarray(self.control_ids, dtype=np.int64)
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        if self.control_ids.shape != self.weights.shape or self.control_ids.ndim != 2:
            raise ValidationError("binding ids/weights must share an (N, K) shape")
        if np.any(self.weights < 0.0):
            raise ValidationError("binding weights must be non-negative")
        if np.any(np.abs(self.weights.sum(axis=1) - 1.0) > 1e-6):
            raise ValidationError("binding weights must sum to 1")


def bind(cloud, graph, k_tilde=DEFAULT_SKIN_NEIGHBORS):
    """Bind each Gaussian to its k_tilde Euclidean-nearest control nodes.

    Weights are 1/(d + eps), normalized per Gaussian, with
    eps = 1e-8 * bounding-box diagonal so a Gaussian sitting exactly on a
    node is dominated by it. Distance ties resolve to the smaller node id.
    """
    m = len(graph)
    if m == 0:
        raise ValueError("control graph is empty")
    if not 1 <= k_tilde <= m:
        raise ValueError(f"need 1 <= k_tilde <= {m}, got {k_tilde}")

    points = cloud.centers
    n = points.shape[0]
    controls = graph.rest_positions
    span = np.linalg.norm(points.max(axis=0) - points.min(axis=0))
    eps = 1e-8 * (span if span > 0.0 else 1.0)

    ids = np.empty((n, k_tilde), dtype=np.int64)
    dists = np.empty((n, k_tilde), dtype=np.float64)
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        diff = points[start:stop, None, :] - controls[None, :, :]
        d2 = np.einsum("nmk,nmk->nm", diff, diff)
        # stable sort keeps ascending node id among exact distance ties
        order = np.argsort(d2, axis=1, kind="stable")[:, :k_tilde]
        ids[start:stop] = order
        dists[start:stop] = np.sqrt(np.take_along_axis(d2, order, axis=1))

    inv = 1.0 / (dists + eps)
    weights = inv / inv.sum(axis=1, keepdims=True)
    return SkinBinding(control_ids=ids, weights=weights)


def _blend_chunk(centers, quats, binding, rest, result, node_quats, out_mu, out_q, start, stop):
    ids = binding.control_ids[start:stop]
    w = binding.weights[start:stop]
    rot = result.rotations[ids]                              # (n, K, 3, 3)
    diff = centers[start:stop, None, :] - rest[ids]
    moved = np.einsum("nkab,nkb->nka", rot, diff) + result.positions[ids]
    out_mu[start:stop] = np.einsum("nk,nka->na", w, moved)

    terms = quat_multiply(node_quats[ids], quats[start:stop, None, :])  # (n, K, 4)
    align = np.einsum("nka,na->nk", terms, terms[:, 0, :])
    terms = np.where(align[:, :, None] < 0.0, -terms, terms)
    blended = np.einsum("nk,nka->na", w, terms)
    norms = np.linalg.norm(blended, axis=1)
    degenerate = norms < 1e-8
    if np.any(degenerate):
        # antipodal cancellation: keep the highest-weight term's quaternion
        rows = np.nonzero(degenerate)[0]
        best = np.argmax(w[rows], axis=1)
        blended[rows] = terms[rows, best]
        norms[rows] = np.linalg.norm(blended[rows], axis=1)
    out_q[start:stop] = blended / norms[:, None]


def apply_lbs(cloud, binding, graph, result):
    """Skin a deformation result back onto the dense cloud.

    Centers move by the weighted blend of per-node rigid transforms;
    orientations by the normalized, sign-aligned weighted quaternion sum.
    Opacities, scales and colors pass through unchanged.
    """
    n = len(cloud)
    if binding.control_ids.shape[0] != n:
        raise ValueError("binding does not match the cloud")
    if binding.control_ids.size and binding.control_ids.max() >= len(graph):
        raise ValueError("binding references nodes outside the graph")
    if result.positions.shape[0] != len(graph):
        raise ValueError("deform result does not match the graph")

    node_quats = matrix_to_quat(result.rotations)
    out_mu = np.empty((n, 3), dtype=np.float64)
    out_q = np.empty((n, 4), dtype=np.float64)

    workers = worker_count()
    spans = [(s, min(s + _CHUNK, n)) for s in range(0, n, _CHUNK)]
    if workers > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futs = [
                pool.submit(
                    _blend_chunk, cloud.centers, cloud.rotations, binding,
                    graph.rest_positions, result, node_quats, out_mu, out_q, s, e,
                )
                for s, e in spans
            ]
            for f in futs:
                f.result()
    else:
        for s, e in spans:
            _blend_chunk(
                cloud.centers, cloud.rotations, binding, graph.rest_positions,
                result, node_quats, out_mu, out_q, s, e,
            )

    return GaussianCloud(
        centers=out_mu,
        opacities=cloud.opacities,
        scales=cloud.scales,
        rotations=out_q,
        colors_dc=cloud.colors_dc,
        colors_rest=cloud.colors_rest,
    )
