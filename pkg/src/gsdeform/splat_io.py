"""3D Gaussian Splat PLY parsing, validation, and serialization.

The de-facto splat PLY layout stores one vertex per Gaussian with float
properties x,y,z, nx,ny,nz, f_dc_0..2, optional f_rest_*, opacity,
scale_0..2 and rot_0..3. By the common tooling convention the file holds
raw optimizer parameters: logit opacities, log scales and unnormalized
scalar-first quaternions. Loading applies the activations (sigmoid, exp,
normalize) unless ``activated=True`` says the buffer already holds
working values.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import expit, logit

from .config import LOG_SCALE_FLOOR, OPACITY_EPS
from .errors import EmptyCloudError, SplatFormatError, ValidationError

REQUIRED_PROPS = (
    "x", "y", "z",
    "f_dc_0", "f_dc_1", "f_dc_2",
    "opacity",
    "scale_0", "scale_1", "scale_2",
    "rot_0", "rot_1", "rot_2", "rot_3",
)

_PLY_TYPES = {
    "float": "<f4", "float32": "<f4",
    "double": "<f8", "float64": "<f8",
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "<i2", "int16": "<i2",
    "ushort": "<u2", "uint16": "<u2",
    "int": "<i4", "int32": "<i4",
    "uint": "<u4", "uint32": "<u4",
}


@dataclass(frozen=True)
class GaussianCloud:
    """Dense splat object in working (activated) parameterization.

    centers     (N, 3) scene-unit positions
    opacities   (N,)   values in the open interval (0, 1)
    scales      (N, 3) strictly positive per-axis extents
    rotations   (N, 4) unit quaternions, scalar-first
    colors_dc   (N, 3) zeroth-order SH coefficients
    colors_rest (N, R) higher-order SH coefficients, pass-through, or None

    Arrays are float64, C-contiguous and frozen read-only; edits produce
    new clouds.
    """

    centers: np.ndarray
    opacities: np.ndarray
    scales: np.ndarray
    rotations: np.ndarray
    colors_dc: np.ndarray
    colors_rest: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        for name in ("centers", "opacities", "scales", "rotations", "colors_dc"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            object.__setattr__(self, name, arr)
        if self.colors_rest is not None:
            arr = np.ascontiguousarray(self.colors_rest, dtype=np.float64)
            object.__setattr__(self, "colors_rest", arr)
        self._validate()
        for name in ("centers", "opacities", "scales", "rotations", "colors_dc", "colors_rest"):
            arr = getattr(self, name)
            if arr is not None:
                arr.setflags(write=False)

    def _validate(self):
        n = self.centers.shape[0]
        if n < 1:
            raise ValidationError("cloud must contain at least one Gaussian")
        if self.centers.shape != (n, 3):
            raise ValidationError(f"centers must be (N, 3), got {self.centers.shape}")
        if self.opacities.shape != (n,):
            raise ValidationError("opacities length does not match centers")
        if self.scales.shape != (n, 3):
            raise ValidationError("scales must be (N, 3) matching centers")
        if self.rotations.shape != (n, 4):
            raise ValidationError("rotations must be (N, 4) matching centers")
        if self.colors_dc.shape != (n, 3):
            raise ValidationError("colors_dc must be (N, 3) matching centers")
        if self.colors_rest is not None and (
            self.colors_rest.ndim != 2 or self.colors_rest.shape[0] != n
        ):
            raise ValidationError("colors_rest must be (N, R) matching centers")

        for name in ("centers", "opacities", "scales", "rotations", "colors_dc", "colors_rest"):
            arr = getattr(self, name)
            if arr is None:
                continue
            finite = np.isfinite(arr)
            if not finite.all():
                idx = int(np.nonzero(~finite.reshape(n, -1).all(axis=1))[0][0])
                raise ValidationError(f"non-finite value in {name} at index {idx}")

        qnorm = np.linalg.norm(self.rotations, axis=1)
        bad = np.abs(qnorm - 1.0) > 1e-6
        if bad.any():
            raise ValidationError(
                f"rotation at index {int(np.argmax(bad))} is not unit norm"
            )
        if not (self.scales > 0.0).all():
            idx = int(np.nonzero(~(self.scales > 0.0).all(axis=1))[0][0])
            raise ValidationError(f"non-positive scale at index {idx}")
        if not ((self.opacities > 0.0) & (self.opacities < 1.0)).all():
            ok = (self.opacities > 0.0) & (self.opacities < 1.0)
            raise ValidationError(f"opacity outside (0,1) at index {int(np.argmax(~ok))}")

    def __len__(self):
        return self.centers.shape[0]

    @property
    def sh_rest_width(self):
        return 0 if self.colors_rest is None else self.colors_rest.shape[1]


def _parse_header(data):
    """Return (format, vertex_count, [(name, dtype) ...], body_offset)."""
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise SplatFormatError("not a PLY buffer (missing ply/end_header)")
    nl = data.find(b"\n", end)
    if nl < 0:
        raise SplatFormatError("header is not newline-terminated")
    body_offset = nl + 1

    fmt = None
    count = None
    props = []
    in_vertex = False
    seen_element = False
    for raw in data[:end].decode("ascii", errors="replace").splitlines():
        line = raw.strip()
        if not line or line == "ply" or line.startswith("comment"):
            continue
        tok = line.split()
        if tok[0] == "format":
            if tok[1] not in ("ascii", "binary_little_endian"):
                raise SplatFormatError(f"unsupported PLY format {tok[1]!r}")
            fmt = tok[1]
        elif tok[0] == "element":
            if tok[1] == "vertex":
                if seen_element:
                    raise SplatFormatError("vertex element must be the first element")
                count = int(tok[2])
                in_vertex = True
            else:
                in_vertex = False
            seen_element = True
        elif tok[0] == "property" and in_vertex:
            if tok[1] == "list":
                raise SplatFormatError("list properties are not supported on vertices")
            if tok[1] not in _PLY_TYPES:
                raise SplatFormatError(f"unsupported property type {tok[1]!r}")
            props.append((tok[2], _PLY_TYPES[tok[1]]))

    if fmt is None:
        raise SplatFormatError("missing format declaration")
    if count is None:
        raise SplatFormatError("missing vertex element")
    return fmt, count, props, body_offset


def _read_vertex_table(data, fmt, count, props, body_offset):
    dtype = np.dtype(props)
    if fmt == "binary_little_endian":
        need = count * dtype.itemsize
        body = data[body_offset : body_offset + need]
        if len(body) < need:
            raise SplatFormatError("vertex data truncated")
        return np.frombuffer(body, dtype=dtype, count=count)
    # ascii: one whitespace-separated row per vertex
    text = data[body_offset:].decode("ascii", errors="replace")
    rows = text.split("\n")
    table = np.empty(count, dtype=dtype)
    filled = 0
    for row in rows:
        if filled == count:
            break
        row = row.strip()
        if not row:
            continue
        vals = row.split()
        if len(vals) != len(props):
            raise SplatFormatError(
                f"ascii vertex row {filled} has {len(vals)} values, expected {len(props)}"
            )
        table[filled] = tuple(float(v) for v in vals)
        filled += 1
    if filled != count:
        raise SplatFormatError("vertex data truncated")
    return table


def _rest_columns(names):
    """f_rest_* property names ordered by their numeric suffix."""
    rest = []
    for name in names:
        if name.startswith("f_rest_"):
            try:
                rest.append((int(name[len("f_rest_"):]), name))
            except ValueError:
                raise SplatFormatError(f"malformed SH property name {name!r}")
    rest.sort()
    return [name for _, name in rest]


def load_ply(data, activated=False):
    """Parse a splat PLY byte buffer into a GaussianCloud.

    With ``activated=False`` (the tooling convention) stored opacities are
    passed through a sigmoid, stored scales through exp (clamped at
    ``exp(LOG_SCALE_FLOOR)``), and quaternions are normalized. With
    ``activated=True`` values are taken as-is and validated.
    """
    fmt, count, props, body_offset = _parse_header(bytes(data))
    if count == 0:
        raise EmptyCloudError("PLY declares zero vertices")
    names = [name for name, _ in props]
    for req in REQUIRED_PROPS:
        if req not in names:
            raise SplatFormatError(f"missing required property {req!r}")

    table = _read_vertex_table(bytes(data), fmt, count, props, body_offset)

    def cols(*colnames):
        out = np.empty((count, len(colnames)), dtype=np.float64)
        for j, cn in enumerate(colnames):
            out[:, j] = table[cn].astype(np.float64)
        return out

    centers = cols("x", "y", "z")
    colors_dc = cols("f_dc_0", "f_dc_1", "f_dc_2")
    opacity = table["opacity"].astype(np.float64)
    scales = cols("scale_0", "scale_1", "scale_2")
    rots = cols("rot_0", "rot_1", "rot_2", "rot_3")

    rest_names = _rest_columns(names)
    colors_rest = cols(*rest_names) if rest_names else None

    for name, arr in (
        ("x/y/z", centers), ("f_dc", colors_dc), ("opacity", opacity),
        ("scale", scales), ("rot", rots),
        ("f_rest", colors_rest if colors_rest is not None else np.zeros(1)),
    ):
        finite = np.isfinite(arr)
        if not finite.all():
            idx = int(np.nonzero(~finite.reshape(finite.shape[0], -1).all(axis=1))[0][0])
            raise ValidationError(f"non-finite {name} value at index {idx}")

    if not activated:
        opacity = np.clip(expit(opacity), OPACITY_EPS, 1.0 - OPACITY_EPS)
        scales = np.exp(np.maximum(scales, LOG_SCALE_FLOOR))
        norms = np.linalg.norm(rots, axis=1)
        if np.any(norms < 1e-12):
            raise ValidationError(
                f"zero-norm quaternion at index {int(np.argmin(norms))}"
            )
        rots = rots / norms[:, None]

    return GaussianCloud(
        centers=centers,
        opacities=opacity,
        scales=scales,
        rotations=rots,
        colors_dc=colors_dc,
        colors_rest=colors_rest,
    )


def save_ply(cloud, activated=False):
    """Serialize a GaussianCloud to binary little-endian PLY bytes.

    Inverse of :func:`load_ply` under the same ``activated`` flag.
    Property order is fixed: x,y,z, nx,ny,nz, f_dc_0..2, [f_rest_*],
    opacity, scale_0..2, rot_0..3; normals are written as zeros.
    """
    n = len(cloud)
    rest_width = cloud.sh_rest_width
    names = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"]
    names += [f"f_rest_{i}" for i in range(rest_width)]
    names += ["opacity", "scale_0", "scale_1", "scale_2",
              "rot_0", "rot_1", "rot_2", "rot_3"]

    if activated:
        opacity = cloud.opacities
        scales = cloud.scales
    else:
        opacity = logit(cloud.opacities)
        scales = np.log(cloud.scales)

    table = np.empty(n, dtype=np.dtype([(name, "<f4") for name in names]))
    table["x"], table["y"], table["z"] = cloud.centers.T
    table["nx"] = table["ny"] = table["nz"] = 0.0
    for j in range(3):
        table[f"f_dc_{j}"] = cloud.colors_dc[:, j]
    for j in range(rest_width):
        table[f"f_rest_{j}"] = cloud.colors_rest[:, j]
    table["opacity"] = opacity
    for j in range(3):
        table[f"scale_{j}"] = scales[:, j]
    for j in range(4):
        table[f"rot_{j}"] = cloud.rotations[:, j]

    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property float {name}" for name in names]
    header.append("end_header")
    return ("\n".join(header) + "\n").encode("ascii") + table.tobytes()


def read_ply(path, activated=False):
    with open(path, "rb") as f:
        return load_ply(f.read(), activated=activated)


def write_ply(path, cloud, activated=False):
    with open(path, "wb") as f:
        f.write(save_ply(cloud, activated=activated))
