"""Session state machine behind the interactive editing protocol.

Control messages are JSON dicts; per-drag bulk replies are binary update
frames (header: magic ``GSUP``, u8 version, u64 revision, u32 count,
then count x 3 float32 centers and count x 4 float32 quaternions, all
little-endian). The state machine is transport-agnostic:
``EditSession.handle_message`` maps one inbound message to a list of
replies, each either a JSON-serializable dict or a ``bytes`` frame.

Message flow: hello (any time) -> load -> sample -> set_handles ->
drag*, with save allowed once a cloud is loaded. Out-of-order messages
get ``{"type": "error", "code": "bad_state"}``; unknown types
``"bad_type"``; malformed payloads ``"bad_payload"`` with the offending
field path in ``detail``.
"""

import itertools
import struct

import numpy as np

from .arap import HandleSet, assemble_system, deform
from .config import (
    DEFAULT_CONTROL_COUNT,
    DEFAULT_GRAPH_DEGREE,
    DEFAULT_SKIN_NEIGHBORS,
    DEFAULT_SOLVE_ITERS,
    FRAME_MAGIC,
    PROTOCOL_VERSION,
)
from .errors import GsdeformError
from .graph import build_control_graph
from .skinning import apply_lbs, bind
from .splat_io import read_ply, write_ply

_HEADER = struct.Struct("<4sBQI")


def pack_update_frame(revision, centers, rotations):
    """Binary update frame for one revision of deformed Gaussians."""
    centers = np.ascontiguousarray(centers, dtype="<f4")
    rotations = np.ascontiguousarray(rotations, dtype="<f4")
    count = centers.shape[0]
    if rotations.shape != (count, 4) or centers.shape != (count, 3):
        raise ValueError("frame payload shapes must be (N,3) and (N,4)")
    header = _HEADER.pack(FRAME_MAGIC, PROTOCOL_VERSION, int(revision), count)
    return header + centers.tobytes() + rotations.tobytes()


def unpack_update_frame(frame):
    """Parse an update frame into (revision, centers, rotations)."""
    if len(frame) < _HEADER.size:
        raise ValueError("frame shorter than header")
    magic, version, revision, count = _HEADER.unpack_from(frame, 0)
    if magic != FRAME_MAGIC:
        raise ValueError(f"bad frame magic {magic!r}")
    if version != PROTOCOL_VERSION:
        raise ValueError(f"unsupported frame version {version}")
    need = _HEADER.size + count * 12 + count * 16
    if len(frame) != need:
        raise ValueError(f"frame length {len(frame)} does not match count {count}")
    off = _HEADER.size
    centers = np.frombuffer(frame, dtype="<f4", count=count * 3, offset=off)
    off += count * 12
    rotations = np.frombuffer(frame, dtype="<f4", count=count * 4, offset=off)
    return revision, centers.reshape(count, 3).copy(), rotations.reshape(count, 4).copy()


def _error(code, detail=""):
    return {"type": "error", "code": code, "detail": detail}


class ProtocolError(Exception):
    def __init__(self, code, detail=""):
        super().__init__(detail)
        self.code = code
        self.detail = detail


def _field(msg, name, kind, path=""):
    where = f"{path}{name}"
    if name not in msg:
        raise ProtocolError("bad_payload", f"missing field {where}")
    val = msg[name]
    if kind is int and isinstance(val, bool):
        raise ProtocolError("bad_payload", f"field {where} must be an integer")
    if not isinstance(val, kind):
        raise ProtocolError("bad_payload", f"field {where} has the wrong type")
    return val


def _vec3_list(msg, name):
    raw = _field(msg, name, list)
    out = np.empty((len(raw), 3), dtype=np.float64)
    for i, row in enumerate(raw):
        if not isinstance(row, (list, tuple)) or len(row) != 3:
            raise ProtocolError("bad_payload", f"field {name}[{i}] must be [x,y,z]")
        try:
            out[i] = [float(v) for v in row]
        except (TypeError, ValueError):
            raise ProtocolError("bad_payload", f"field {name}[{i}] must be numeric")
    if out.size and not np.isfinite(out).all():
        raise ProtocolError("bad_payload", f"field {name} contains non-finite values")
    return out


_session_counter = itertools.count(1)


class EditSession:
    """One editing session: loaded cloud, control graph, handles, history."""

    def __init__(self, session_id=None, solve_iters=DEFAULT_SOLVE_ITERS):
        self.id = session_id if session_id is not None else next(_session_counter)
        self.solve_iters = solve_iters
        self.cloud = None
        self.graph = None
        self.binding = None
        self.handles = None
        self.system = None
        self.last_result = None
        self.deformed_cloud = None
        self.revision = 0

    # -- state helpers -------------------------------------------------

    def _handle_positions(self):
        if self.last_result is not None:
            return self.last_result.positions[self.handles.indices]
        return self.graph.rest_positions[self.handles.indices]

    # -- message handlers ----------------------------------------------

    def handle_message(self, msg):
        """Process one control message; returns a list of replies."""
        if not isinstance(msg, dict) or "type" not in msg:
            return [_error("bad_payload", "message must be an object with a type")]
        mtype = msg["type"]
        handler = getattr(self, f"_on_{mtype}", None)
        if not isinstance(mtype, str) or handler is None:
            return [_error("bad_type", f"unknown message type {mtype!r}")]
        try:
            return handler(msg)
        except ProtocolError as exc:
            return [_error(exc.code, exc.detail)]
        except GsdeformError as exc:
            return [_error("bad_payload", str(exc))]

    def _on_hello(self, msg):
        return [{"type": "hello_ack", "protocol": PROTOCOL_VERSION}]

    def _on_load(self, msg):
        path = _field(msg, "path", str)
        try:
            cloud = read_ply(path, activated=bool(msg.get("activated", False)))
        except OSError as exc:
            return [_error("io_error", f"cannot read {path}: {exc}")]
        self.cloud = cloud
        self.graph = None
        self.binding = None
        self.handles = None
        self.system = None
        self.last_result = None
        self.deformed_cloud = None
        self.revision = 0
        return [{"type": "load_ack", "count": len(cloud)}]

    def _on_sample(self, msg):
        if self.cloud is None:
            return [_error("bad_state", "sample requires a loaded cloud")]
        n = _field(msg, "n", int) if "n" in msg else DEFAULT_CONTROL_COUNT
        k = _field(msg, "k", int) if "k" in msg else DEFAULT_GRAPH_DEGREE
        seed = _field(msg, "seed", int) if "seed" in msg else 0
        n = min(n, len(self.cloud))
        try:
            self.graph = build_control_graph(self.cloud, m=n, k=k, seed=seed)
        except ValueError as exc:
            return [_error("bad_payload", str(exc))]
        self.binding = bind(self.cloud, self.graph, k_tilde=min(DEFAULT_SKIN_NEIGHBORS, n))
        self.handles = None
        self.system = None
        self.last_result = None
        self.revision = 0
        return [
            {
                "type": "sample_ack",
                "count": len(self.graph),
                "controls": self.graph.rest_positions.tolist(),
            }
        ]

    def _on_set_handles(self, msg):
        if self.graph is None:
            return [_error("bad_state", "set_handles requires sampled controls")]
        raw = _field(msg, "indices", list)
        try:
            indices = np.asarray([int(i) for i in raw], dtype=np.int64)
        except (TypeError, ValueError):
            raise ProtocolError("bad_payload", "field indices must hold integers")
        if len(raw) == 0:
            raise ProtocolError("bad_payload", "field indices must not be empty")
        if len(set(indices.tolist())) != indices.shape[0]:
            raise ProtocolError("bad_payload", "field indices has duplicates")
        if indices.min() < 0 or indices.max() >= len(self.graph):
            raise ProtocolError("bad_payload", "field indices out of range")

        base = (
            self.last_result.positions
            if self.last_result is not None
            else self.graph.rest_positions
        )
        self.handles = HandleSet(indices=indices, targets=base[indices])
        self.system = assemble_system(self.graph, self.handles)
        return [
            {
                "type": "handles_ack",
                "indices": indices.tolist(),
                "positions": base[indices].tolist(),
            }
        ]

    def _on_drag(self, msg):
        if self.handles is None:
            return [_error("bad_state", "drag requires set_handles (and load/sample first)")]
        seq = _field(msg, "seq", int)
        targets = _vec3_list(msg, "targets")
        if targets.shape[0] != len(self.handles):
            raise ProtocolError(
                "bad_payload",
                f"field targets must hold {len(self.handles)} entries",
            )

        current = self._handle_positions()
        if self.last_result is not None and np.array_equal(targets, current):
            # no-op drag: replay the previous solution under a new revision
            result = self.last_result
        else:
            self.handles = HandleSet(indices=self.handles.indices, targets=targets)
            warm = (
                self.last_result.positions if self.last_result is not None else None
            )
            result = deform(
                self.graph,
                self.handles,
                iters=self.solve_iters,
                system=self.system,
                warm_start=warm,
            )
        self.last_result = result
        self.deformed_cloud = apply_lbs(self.cloud, self.binding, self.graph, result)
        self.revision += 1
        update = {
            "type": "update",
            "revision": self.revision,
            "seq": seq,
            "controls": result.positions.tolist(),
            "energy": [float(e) for e in result.energy_trace],
        }
        frame = pack_update_frame(
            self.revision, self.deformed_cloud.centers, self.deformed_cloud.rotations
        )
        return [update, frame]

    def _on_save(self, msg):
        if self.cloud is None:
            return [_error("bad_state", "save requires a loaded cloud")]
        path = _field(msg, "path", str)
        cloud = self.deformed_cloud if self.deformed_cloud is not None else self.cloud
        try:
            write_ply(path, cloud, activated=bool(msg.get("activated", False)))
        except OSError as exc:
            return [_error("io_error", f"cannot write {path}: {exc}")]
        return [{"type": "save_ack", "path": path, "count": len(cloud)}]
