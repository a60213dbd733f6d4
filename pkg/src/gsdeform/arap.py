"""Local-global minimization of the graph rigidity energy.

The energy  E = sum_i sum_{j in N_i} w_ij |(p'_i - p'_j) - R_i (p_i - p_j)|^2
is minimized by alternating two exact steps: per-node rotation fitting
(SVD of the weighted edge covariance, reflection-corrected) and a global
sparse linear solve of the Laplacian system with handle rows/columns
eliminated. Handles are hard constraints; the reduced factorization is
reused across drags while the handle index set is unchanged.

Everything here runs in float64.
"""

import json
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .config import DEFAULT_SOLVE_ITERS
from .errors import ValidationError


@dataclass
class HandleSet:
    """Hard-constrained control nodes and their target positions."""

    indices: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64).reshape(-1)
        self.targets = np.ascontiguousarray(
            np.asarray(self.targets, dtype=np.float64).reshape(-1, 3)
        )
        if self.indices.shape[0] != self.targets.shape[0]:
            raise ValidationError("handle indices/targets length mismatch")
        if len(np.unique(self.indices)) != self.indices.shape[0]:
            raise ValidationError("handle indices must be distinct")
        if self.targets.size and not np.isfinite(self.targets).all():
            raise ValidationError("handle targets must be finite")

    def __len__(self):
        return self.indices.shape[0]

    def check_range(self, m):
        if self.indices.size and (self.indices.min() < 0 or self.indices.max() >= m):
            raise ValidationError("handle index out of range")

    def to_json_dict(self):
        return {"indices": self.indices.tolist(), "targets": self.targets.tolist()}

    @classmethod
    def from_json_dict(cls, d):
        return cls(np.asarray(d["indices"]), np.asarray(d["targets"]))

    def save_json(self, path):
        with open(path, "w") as f:
            json.dump(self.to_json_dict(), f)

    @classmethod
    def load_json(cls, path):
        with open(path) as f:
            return cls.from_json_dict(json.load(f))


@dataclass
class DeformResult:
    """Solved node positions, per-node rotations, and the energy trace.

    energy_trace holds the energy at initialization and after every
    half-step (rotation fit, then position solve, per iteration).
    status is "ok", or "no_handles" when the rest pose was returned
    untouched because the system would have been singular.
    """

    positions: np.ndarray
    rotations: np.ndarray
    energy_trace: List[float]
    status: str = "ok"

    def to_json_dict(self):
        return {
            "positions": self.positions.tolist(),
            "rotations": self.rotations.tolist(),
            "energy_trace": [float(e) for e in self.energy_trace],
            "status": self.status,
        }

    def save_json(self, path):
        with open(path, "w") as f:
            json.dump(self.to_json_dict(), f)


@dataclass
class FactorizedSystem:
    """Reduced Laplacian factorization over the free (non-handle) nodes."""

    handle_ids: np.ndarray
    free_ids: np.ndarray
    laplacian: sp.csr_matrix
    lu: Optional[object]            # splu factor of L[free, free]
    coupling: Optional[sp.csr_matrix]  # L[free, handle]
    status: str = "ok"
    size: int = field(default=0)


def build_laplacian(graph):
    """Symmetric graph Laplacian of the symmetrized weights w_ij + w_ji."""
    m = len(graph)
    nbr, wgt = graph.packed()
    rows = np.repeat(np.arange(m, dtype=np.int64), nbr.shape[1])
    w = sp.coo_matrix((wgt.ravel(), (rows, nbr.ravel())), shape=(m, m))
    w_hat = (w + w.T).tocsr()
    w_hat.setdiag(0.0)  # zero-weight padding may have hit the diagonal
    w_hat.eliminate_zeros()
    deg = np.asarray(w_hat.sum(axis=1)).ravel()
    return (sp.diags(deg) - w_hat).tocsr()


def build_rhs(graph, rotations):
    """Right-hand side of the position system for fixed rotations.

    b_k = sum_j (w_kj R_k + w_jk R_j)(p_k - p_j), i.e. every directed
    edge i->j contributes +w R_i (p_i - p_j) to b_i and the negation to
    b_j. This is the exact gradient pairing for directed neighbor lists;
    it reduces to the familiar (w/2)(R_i + R_j)(p_i - p_j) form when the
    weights are symmetric.
    """
    rest = graph.rest_positions
    nbr, wgt = graph.packed()
    d = rest[:, None, :] - rest[nbr]                    # (M, K, 3)
    v = wgt[:, :, None] * np.einsum("iab,ikb->ika", rotations, d)
    b = v.sum(axis=1)
    np.subtract.at(b, nbr.ravel(), v.reshape(-1, 3))
    return b


def arap_energy(graph, rest, current, rotations):
    """Rigidity energy of a configuration; non-negative scalar."""
    rest = np.asarray(rest, dtype=np.float64)
    current = np.asarray(current, dtype=np.float64)
    rotations = np.asarray(rotations, dtype=np.float64)
    if not (np.isfinite(rest).all() and np.isfinite(current).all()
            and np.isfinite(rotations).all()):
        raise ValidationError("arap_energy requires finite inputs")
    nbr, wgt = graph.packed()
    rest_d = rest[:, None, :] - rest[nbr]
    cur_d = current[:, None, :] - current[nbr]
    resid = cur_d - np.einsum("iab,ikb->ika", rotations, rest_d)
    return float(np.sum(wgt * np.einsum("ika,ika->ik", resid, resid)))


def fit_rotations(graph, rest, current):
    """Per-node rotations best mapping rest edges onto current edges.

    S_i = sum_j w_ij (p_j - p_i)(p'_j - p'_i)^T, SVD S = U Sigma V^T,
    R_i = V U^T. If det(V U^T) < 0 the column of V paired with the
    smallest singular value is negated first, so every output is a
    proper rotation.
    """
    rest = np.asarray(rest, dtype=np.float64)
    current = np.asarray(current, dtype=np.float64)
    nbr, wgt = graph.packed()
    rest_d = rest[nbr] - rest[:, None, :]
    cur_d = current[nbr] - current[:, None, :]
    s = np.einsum("ik,ika,ikb->iab", wgt, rest_d, cur_d)
    u, _, vh = np.linalg.svd(s)
    v = vh.transpose(0, 2, 1)
    r = np.matmul(v, u.transpose(0, 2, 1))
    flip = np.linalg.det(r) < 0.0
    if np.any(flip):
        idx = np.nonzero(flip)[0]
        v[idx, :, -1] *= -1.0
        r[idx] = np.matmul(v[idx], u[idx].transpose(0, 2, 1))
    return r


def assemble_system(graph, handles):
    """Factor the reduced Laplacian for a fixed handle index set.

    With no handles the Laplacian has the rigid null space, so no
    factorization is produced and status is "null_space".
    """
    m = len(graph)
    handles.check_range(m)
    lap = build_laplacian(graph)
    handle_ids = handles.indices.copy()

    if handle_ids.size == 0:
        return FactorizedSystem(
            handle_ids=handle_ids,
            free_ids=np.arange(m, dtype=np.int64),
            laplacian=lap, lu=None, coupling=None,
            status="null_space", size=m,
        )

    mask = np.ones(m, dtype=bool)
    mask[handle_ids] = False
    free_ids = np.nonzero(mask)[0].astype(np.int64)

    if free_ids.size == 0:
        return FactorizedSystem(
            handle_ids=handle_ids, free_ids=free_ids,
            laplacian=lap, lu=None, coupling=None,
            status="ok", size=m,
        )

    reduced = lap[free_ids][:, free_ids].tocsc()
    try:
        lu = spla.splu(reduced)
    except RuntimeError as exc:  # singular reduced system
        raise np.linalg.LinAlgError(f"reduced Laplacian is singular: {exc}")
    coupling = lap[free_ids][:, handle_ids].tocsr()
    return FactorizedSystem(
        handle_ids=handle_ids, free_ids=free_ids,
        laplacian=lap, lu=lu, coupling=coupling,
        status="ok", size=m,
    )


def solve_positions(system, graph, rest, rotations, handles):
    """Minimize the energy over free positions with rotations fixed.

    Handle entries of the output equal the targets exactly; the three
    coordinate axes share one factorization.
    """
    m = len(graph)
    if system.size != m:
        raise ValueError("system does not match graph size")
    if system.status == "null_space":
        raise ValueError("system was assembled without handles; nothing to solve")
    if system.handle_ids.shape != handles.indices.shape or np.any(
        system.handle_ids != handles.indices
    ):
        raise ValueError("handle index set does not match the factorized system")

    out = np.empty((m, 3), dtype=np.float64)
    out[system.handle_ids] = handles.targets
    if system.free_ids.size == 0:
        return out

    b = build_rhs(graph, np.asarray(rotations, dtype=np.float64))
    rhs = b[system.free_ids] - system.coupling @ handles.targets
    out[system.free_ids] = system.lu.solve(rhs)
    return out


def deform(graph, handles, iters=DEFAULT_SOLVE_ITERS, system=None, warm_start=None):
    """Alternate rotation fitting and the global solve for ``iters`` rounds.

    Positions start from the rest pose (or ``warm_start`` positions)
    with handle entries snapped to their targets. Returns the final
    positions, the last fitted rotations, and the energy trace.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    m = len(graph)
    handles.check_range(m)
    rest = graph.rest_positions

    if len(handles) == 0:
        rot = np.broadcast_to(np.eye(3), (m, 3, 3)).copy()
        energy = arap_energy(graph, rest, rest, rot)
        return DeformResult(rest.copy(), rot, [energy], status="no_handles")

    if system is None:
        system = assemble_system(graph, handles)

    if warm_start is not None:
        current = np.array(warm_start, dtype=np.float64).reshape(m, 3)
    else:
        current = rest.copy()
    current[handles.indices] = handles.targets

    rot = np.broadcast_to(np.eye(3), (m, 3, 3)).copy()
    trace = [arap_energy(graph, rest, current, rot)]
    for _ in range(iters):
        rot = fit_rotations(graph, rest, current)
        trace.append(arap_energy(graph, rest, current, rot))
        current = solve_positions(system, graph, rest, rot, handles)
        trace.append(arap_energy(graph, rest, current, rot))
    return DeformResult(current, rot, trace, status="ok")
