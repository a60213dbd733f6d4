"""PNG round-tripping for float image buffers (PIL-backed)."""

import numpy as np
from PIL import Image


def write_png(path, img):
    """Write a float image in [0,1] as 8-bit PNG; (H,W,3), (H,W,4) or (H,W)."""
    img = np.asarray(img)
    data = np.clip(np.round(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    if data.ndim == 2:
        mode = "L"
    elif data.shape[2] == 3:
        mode = "RGB"
    elif data.shape[2] == 4:
        mode = "RGBA"
    else:
        raise ValueError(f"unsupported channel count {data.shape[2]}")
    Image.fromarray(data, mode=mode).save(path)


def read_png(path, channels=None):
    """Read a PNG into float64 [0,1]; channels forces 'RGB'/'RGBA'/'L'."""
    with Image.open(path) as im:
        if channels is not None:
            im = im.convert(channels)
        arr = np.asarray(im, dtype=np.float64) / 255.0
    return arr


def write_mask_png(path, mask):
    """Binary mask to single-channel PNG with values 0/255."""
    mask = np.asarray(mask, dtype=bool)
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8), mode="L").save(path)


def read_mask_png(path):
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return arr >= 128
