"""Batched quaternion helpers, scalar-first (w, x, y, z) convention."""

import numpy as np


def quat_normalize(q):
    """Return unit quaternions; input shape (..., 4)."""
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norm < 1e-12):
        raise ValueError("cannot normalize a near-zero quaternion")
    return q / norm


def quat_to_matrix(q):
    """Unit quaternions (..., 4) to rotation matrices (..., 3, 3)."""
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    m = np.empty(q.shape[:-1] + (3, 3), dtype=np.float64)
    m[..., 0, 0] = 1.0 - 2.0 * (yy + zz)
    m[..., 0, 1] = 2.0 * (xy - wz)
    m[..., 0, 2] = 2.0 * (xz + wy)
    m[..., 1, 0] = 2.0 * (xy + wz)
    m[..., 1, 1] = 1.0 - 2.0 * (xx + zz)
    m[..., 1, 2] = 2.0 * (yz - wx)
    m[..., 2, 0] = 2.0 * (xz - wy)
    m[..., 2, 1] = 2.0 * (yz + wx)
    m[..., 2, 2] = 1.0 - 2.0 * (xx + yy)
    return m


def matrix_to_quat(m):
    """Rotation matrices (..., 3, 3) to unit quaternions (..., 4), w >= 0.

    Shepperd's branch selection: pick the largest of the four squared
    components so the division below stays well-conditioned for every
    rotation, including 180-degree ones.
    """
    m = np.asarray(m, dtype=np.float64)
    batch = m.shape[:-2]
    q = np.empty(batch + (4,), dtype=np.float64)

    t = np.einsum("...ii->...", m)
    cand = np.stack([t, m[..., 0, 0], m[..., 1, 1], m[..., 2, 2]], axis=-1)
    choice = np.argmax(cand, axis=-1)

    def fill(mask, build):
        if np.any(mask):
            build(mask)

    def from_trace(mask):
        s = np.sqrt(t[mask] + 1.0) * 2.0
        q[mask, 0] = 0.25 * s
        q[mask, 1] = (m[mask, 2, 1] - m[mask, 1, 2]) / s
        q[mask, 2] = (m[mask, 0, 2] - m[mask, 2, 0]) / s
        q[mask, 3] = (m[mask, 1, 0] - m[mask, 0, 1]) / s

    def from_x(mask):
        s = np.sqrt(1.0 + m[mask, 0, 0] - m[mask, 1, 1] - m[mask, 2, 2]) * 2.0
        q[mask, 0] = (m[mask, 2, 1] - m[mask, 1, 2]) / s
        q[mask, 1] = 0.25 * s
        q[mask, 2] = (m[mask, 0, 1] + m[mask, 1, 0]) / s
        q[mask, 3] = (m[mask, 0, 2] + m[mask, 2, 0]) / s

    def from_y(mask):
        s = np.sqrt(1.0 - m[mask, 0, 0] + m[mask, 1, 1] - m[mask, 2, 2]) * 2.0
        q[mask, 0] = (m[mask, 0, 2] - m[mask, 2, 0]) / s
        q[mask, 1] = (m[mask, 0, 1] + m[mask, 1, 0]) / s
        q[mask, 2] = 0.25 * s
        q[mask, 3] = (m[mask, 1, 2] + m[mask, 2, 1]) / s

    def from_z(mask):
        s = np.sqrt(1.0 - m[mask, 0, 0] - m[mask, 1, 1] + m[mask, 2, 2]) * 2.0
        q[mask, 0] = (m[mask, 1, 0] - m[mask, 0, 1]) / s
        q[mask, 1] = (m[mask, 0, 2] + m[mask, 2, 0]) / s
        q[mask, 2] = (m[mask, 1, 2] + m[mask, 2, 1]) / s
        q[mask, 3] = 0.25 * s

    fill(choice == 0, from_trace)
    fill(choice == 1, from_x)
    fill(choice == 2, from_y)
    fill(choice == 3, from_z)

    # Canonical sign so round-trips are stable.
    flip = q[..., 0] < 0.0
    q[flip] = -q[flip]
    return quat_normalize(q)


def quat_multiply(a, b):
    """Hamilton product a*b for (..., 4) arrays (broadcasting)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )
