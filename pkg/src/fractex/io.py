"""Image file I/O: binary PGM/PPM (P5/P6) and PNG via Pillow."""

import numpy as np
from PIL import Image

from ._validation import StructureError


def read_image(path):
    """Read an 8-bit image as ``(H, W)`` gray or ``(H, W, 3)`` RGB uint8."""
    with Image.open(path) as im:
        if im.mode in ("L", "P", "1", "I;16", "I"):
            arr = np.asarray(im.convert("L"))
        elif im.mode in ("RGB", "RGBA", "CMYK", "YCbCr"):
            arr = np.asarray(im.convert("RGB"))
        else:
            raise StructureError(f"{path}: unsupported image mode {im.mode}")
    return np.array(arr, dtype=np.uint8)


def write_pgm(path, raster):
    """Write a 2-D uint8-compatible raster as binary PGM."""
    arr = np.asarray(raster)
    if arr.ndim != 2:
        raise StructureError("PGM output needs a 2-D raster")
    Image.fromarray(np.clip(np.round(arr), 0, 255).astype(np.uint8), "L").save(
        path, format="PPM")


def rescale_to_uint8(raster):
    """Affinely map a real raster onto 0..255 for inspection dumps."""
    arr = np.asarray(raster, dtype=np.float64)
    lo, hi = arr.min(), arr.max()
    if hi <= lo:
        return np.zeros(arr.shape, dtype=np.uint8)
    return np.round((arr - lo) / (hi - lo) * 255).astype(np.uint8)


def write_image(path, raster):
    """Write a gray raster as PGM or an ``(H, W, 3)`` raster as PPM."""
    arr = np.asarray(raster)
    if arr.ndim == 2:
        return write_pgm(path, arr)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise StructureError("expected (H, W) or (H, W, 3) raster")
    Image.fromarray(np.clip(np.round(arr), 0, 255).astype(np.uint8), "RGB").save(
        path, format="PPM")
