"""CPU preview rasterizer: perspective-projected Gaussians, alpha-composited.

Each 3D Gaussian projects to a 2D Gaussian through the perspective
Jacobian at its center; splats are depth-sorted and composited
back-to-front with the over operator inside their 3-sigma bounding box.
Good enough for interactive preview and the compositor's foreground
input; not a parity implementation of GPU splatting stacks.
"""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import (
    ALPHA_CLAMP,
    COV2D_REGULARIZATION,
    MIN_SPLAT_ALPHA,
    NEAR_PLANE,
    SH_C0,
)
from .quats import quat_to_matrix
from .util import worker_count


@dataclass
class Camera:
    """Pinhole camera; pixel (ix, iy) samples image coordinates (ix, iy)."""

    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray      # world-to-camera, det +1
    translation: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not np.allclose(self.rotation @ self.rotation.T, np.eye(3), atol=1e-6):
            raise ValueError("camera rotation must be orthonormal")
        if np.linalg.det(self.rotation) < 0:
            raise ValueError("camera rotation must have determinant +1")

    def to_json_dict(self):
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
            "width": int(self.width), "height": int(self.height),
        }

    @classmethod
    def from_json_dict(cls, d):
        return cls(
            fx=float(d["fx"]), fy=float(d["fy"]),
            cx=float(d["cx"]), cy=float(d["cy"]),
            rotation=np.asarray(d["rotation"], dtype=np.float64),
            translation=np.asarray(d["translation"], dtype=np.float64),
            width=int(d["width"]), height=int(d["height"]),
        )

    def save_json(self, path):
        with open(path, "w") as f:
            json.dump(self.to_json_dict(), f)

    @classmethod
    def load_json(cls, path):
        with open(path) as f:
            return cls.from_json_dict(json.load(f))


def project_gaussian(center, scale, rotation, camera):
    """Project one Gaussian; returns {mean2d, cov2d, depth} or None if culled.

    cov2d = J W Sigma3D W^T J^T + 0.3 I with J the perspective Jacobian
    at the camera-space center and Sigma3D = R diag(s^2) R^T.
    """
    mean2d, cov2d, depth, ok = project_gaussians(
        np.asarray(center, dtype=np.float64).reshape(1, 3),
        np.asarray(scale, dtype=np.float64).reshape(1, 3),
        np.asarray(rotation, dtype=np.float64).reshape(1, 4),
        camera,
    )
    if not ok[0]:
        return None
    return {"mean2d": mean2d[0], "cov2d": cov2d[0], "depth": float(depth[0])}


def project_gaussians(centers, scales, rotations, camera):
    """Batched projection; returns (mean2d, cov2d, depth, in_front)."""
    w = camera.rotation
    cam = centers @ w.T + camera.translation
    x, y, z = cam[:, 0], cam[:, 1], cam[:, 2]
    ok = z > NEAR_PLANE
    zs = np.where(ok, z, 1.0)  # keep the math finite for culled rows

    r = quat_to_matrix(rotations)
    rs = r * scales[:, None, :]
    sigma = rs @ rs.transpose(0, 2, 1)          # R S S^T R^T
    sigma_cam = w @ sigma @ w.T

    j = np.zeros((centers.shape[0], 2, 3), dtype=np.float64)
    j[:, 0, 0] = camera.fx / zs
    j[:, 0, 2] = -camera.fx * x / zs**2
    j[:, 1, 1] = camera.fy / zs
    j[:, 1, 2] = -camera.fy * y / zs**2
    cov2d = j @ sigma_cam @ j.transpose(0, 2, 1)
    cov2d[:, 0, 0] += COV2D_REGULARIZATION
    cov2d[:, 1, 1] += COV2D_REGULARIZATION

    mean2d = np.stack(
        [camera.fx * x / zs + camera.cx, camera.fy * y / zs + camera.cy], axis=1
    )
    return mean2d, cov2d, z, ok


def _composite_rows(img, y0, y1, order, mean2d, cov2d, colors, opac, camera):
    width = camera.width
    for i in order:
        a, b, c = cov2d[i, 0, 0], cov2d[i, 0, 1], cov2d[i, 1, 1]
        det = a * c - b * b
        if det <= 0.0:
            continue
        lam_max = 0.5 * (a + c) + np.sqrt(max(0.25 * (a - c) ** 2 + b * b, 0.0))
        radius = 3.0 * np.sqrt(lam_max)
        mx, my = mean2d[i]
        px0 = max(0, int(np.floor(mx - radius)))
        px1 = min(width - 1, int(np.ceil(mx + radius)))
        py0 = max(y0, int(np.floor(my - radius)))
        py1 = min(y1 - 1, int(np.ceil(my + radius)))
        if px0 > px1 or py0 > py1:
            continue
        inv00, inv01, inv11 = c / det, -b / det, a / det
        dx = np.arange(px0, px1 + 1, dtype=np.float64) - mx
        dy = np.arange(py0, py1 + 1, dtype=np.float64) - my
        power = -0.5 * (
            inv00 * dx[None, :] ** 2
            + 2.0 * inv01 * dy[:, None] * dx[None, :]
            + inv11 * dy[:, None] ** 2
        )
        alpha = np.minimum(ALPHA_CLAMP, opac[i] * np.exp(power))
        alpha[alpha < MIN_SPLAT_ALPHA] = 0.0
        if not np.any(alpha):
            continue
        block = img[py0 : py1 + 1, px0 : px1 + 1]
        a3 = alpha[:, :, None]
        block[:, :, :3] = a3 * colors[i] + (1.0 - a3) * block[:, :, :3]
        block[:, :, 3] = alpha + (1.0 - alpha) * block[:, :, 3]


def render(cloud, camera):
    """Rasterize a cloud to a straight-alpha float RGBA image (H, W, 4).

    Splats sort back-to-front by center depth (ties by storage index);
    per-pixel alpha is min(0.99, o * exp(-0.5 d^T cov2d^{-1} d)); DC
    colors convert via 0.5 + SH_C0 * f_dc. Compositing accumulates
    premultiplied color, which is divided out at the end so the returned
    buffer is straight alpha with accumulated coverage in channel 3.
    All channels land in [0, 1].
    """
    height, width = camera.height, camera.width
    img = np.zeros((height, width, 4), dtype=np.float64)
    if len(cloud) == 0:
        return img

    mean2d, cov2d, depth, ok = project_gaussians(
        cloud.centers, cloud.scales, cloud.rotations, camera
    )
    keep = np.nonzero(ok)[0]
    if keep.size == 0:
        return img
    # back-to-front: descending depth, storage index breaks exact ties
    order = keep[np.lexsort((keep, -depth[keep]))]
    colors = np.clip(0.5 + SH_C0 * cloud.colors_dc, 0.0, 1.0)
    opac = cloud.opacities

    workers = min(worker_count(), height)
    if workers > 1 and order.size * height > 65536:
        bounds = np.linspace(0, height, workers + 1).astype(int)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futs = [
                pool.submit(
                    _composite_rows, img, int(bounds[t]), int(bounds[t + 1]),
                    order, mean2d, cov2d, colors, opac, camera,
                )
                for t in range(workers)
                if bounds[t] < bounds[t + 1]
            ]
            for f in futs:
                f.result()
    else:
        _composite_rows(img, 0, height, order, mean2d, cov2d, colors, opac, camera)

    covered = img[:, :, 3] > 1e-12
    img[covered, :3] /= img[covered, 3][:, None]
    np.clip(img, 0.0, 1.0, out=img)
    return img
