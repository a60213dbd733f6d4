"""Blend the rendered object over a background and extract the seam band.

The boundary band mask marks the dilated object contour; it is written
out as the work area contract for an external inpainting model that
harmonizes the transition region.
"""

import numpy as np
from scipy import ndimage

from .config import DEFAULT_DILATION_RADIUS, DEFAULT_MASK_THRESHOLD


def alpha_composite(fg, bg):
    """Straight-alpha over: out = a * fg_rgb + (1 - a) * bg, per channel."""
    fg = np.asarray(fg, dtype=np.float64)
    bg = np.asarray(bg, dtype=np.float64)
    if fg.ndim != 3 or fg.shape[2] != 4:
        raise ValueError("fg must be (H, W, 4) RGBA")
    if bg.shape != fg.shape[:2] + (3,):
        raise ValueError(
            f"dimension mismatch: fg {fg.shape[:2]}, bg {bg.shape[:2]}"
        )
    a = fg[:, :, 3:4]
    return a * fg[:, :, :3] + (1.0 - a) * bg


def _disk(radius):
    r = int(radius)
    ys, xs = np.mgrid[-r : r + 1, -r : r + 1]
    return (ys * ys + xs * xs) <= r * r


def boundary_mask(fg_alpha, threshold=DEFAULT_MASK_THRESHOLD, radius=DEFAULT_DILATION_RADIUS):
    """Dilated object contour from an alpha channel.

    Binarizes alpha at ``threshold``, keeps foreground pixels that touch
    the background through a 4-neighbor (out-of-image counts as
    background), and dilates that contour with a disk of ``radius``
    pixels. radius 0 returns the bare contour.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    alpha = np.asarray(fg_alpha, dtype=np.float64)
    if alpha.ndim != 2:
        raise ValueError("fg_alpha must be a single-channel (H, W) array")

    fg = alpha > threshold
    cross = ndimage.generate_binary_structure(2, 1)
    interior = ndimage.binary_erosion(fg, structure=cross, border_value=0)
    contour = fg & ~interior
    if radius == 0:
        return contour
    return ndimage.binary_dilation(contour, structure=_disk(radius))
