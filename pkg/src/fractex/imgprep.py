"""Channel selection, morphological-gradient filtering and shear deformation."""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import ParameterError, StructureError, check_odd, check_raster

CHANNELS = ("R", "G", "B", "GRAY")
LATTICE = 4


@dataclass(frozen=True)
class StructuringElement:
    """Flat all-ones square structuring element."""

    size: int = 5

    def __post_init__(self):
        check_odd(self.size, "structuring element size")

    @property
    def footprint(self):
        return np.ones((self.size, self.size), dtype=bool)


def select_channel(img, channel="B"):
    """Return one plane of an RGB image, or the rounded mean for ``GRAY``.

    A 2-D input is already single-channel and is returned unchanged.
    """
    channel = channel.upper()
    if channel not in CHANNELS:
        raise ParameterError(f"channel must be one of {CHANNELS}, got {channel!r}")
    arr = np.asarray(img)
    if arr.ndim == 2:
        return arr.copy()
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise StructureError(f"expected an (H, W, 3) colour image, got {arr.shape}")
    if channel == "GRAY":
        s = arr.astype(np.int64).sum(axis=2)
        # round half up of s / 3
        return ((2 * s + 3) // 6).astype(arr.dtype)
    return arr[:, :, "RGB".index(channel)].copy()


def morphological_gradient(img, se=None):
    """Dilation minus erosion under a flat square element, mirror borders."""
    se = se if se is not None else StructuringElement()
    if isinstance(se, int):
        se = StructuringElement(se)
    x = check_raster(img)
    if se.size > min(x.shape):
        raise ParameterError(
            f"structuring element {se.size} larger than image {x.shape}")
    return ndimage.morphological_gradient(x, size=(se.size, se.size), mode="reflect")


def lattice_bounds(shape, lattice=LATTICE):
    """Row and column edges of the ``lattice`` x ``lattice`` cell grid."""
    rows = np.round(np.linspace(0, shape[0], lattice + 1)).astype(int)
    cols = np.round(np.linspace(0, shape[1], lattice + 1)).astype(int)
    return rows, cols


def shear_deform(img, cells, shear=(1.0, 0.3, 0.0, 1.0), lattice=LATTICE):
    """Apply an affine shear inside selected cells of a square lattice.

    Parameters
    ----------
    img : array-like of shape (M, N)
    cells : iterable of int
        Cell indices ``row * lattice + col``.
    shear : 4-tuple (a, b, c, d)
        Forward map in cell-local pixel coordinates, origin at the cell's
        top-left: ``x' = a*x + b*y``, ``y' = c*x + d*y`` (x is the column).

    Each output pixel samples the inverse-mapped input position by bilinear
    interpolation, mirror extended at the cell borders.  Unselected cells are
    copied unchanged.
    """
    x = check_raster(img)
    a, b, c, d = (float(v) for v in shear)
    A = np.array([[a, b], [c, d]])
    if abs(np.linalg.det(A)) < 1e-12:
        raise ParameterError(f"shear matrix {A.tolist()} is singular")
    cells = sorted({int(k) for k in cells})
    for k in cells:
        if not 0 <= k < lattice * lattice:
            raise ParameterError(f"cell index {k} outside 0..{lattice * lattice - 1}")
    out = x.copy()
    if np.array_equal(A, np.eye(2)):
        return out
    inv = np.linalg.inv(A)
    # (x, y) -> (row, col) ordering for ndimage
    M = inv[::-1, ::-1]
    rows, cols = lattice_bounds(x.shape, lattice)
    for k in cells:
        r, q = divmod(k, lattice)
        y0, y1, x0, x1 = rows[r], rows[r + 1], cols[q], cols[q + 1]
        cell = x[y0:y1, x0:x1]
        out[y0:y1, x0:x1] = ndimage.affine_transform(cell, M, order=1, mode="reflect")
    return out


def random_cells(rng, n=2, lattice=LATTICE):
    """Draw ``n`` distinct lattice cells."""
    return sorted(rng.choice(lattice * lattice, size=n, replace=False).tolist())


def preprocess(img, channel="B", se_size=5):
    """Channel selection followed by the morphological gradient."""
    plane = select_channel(img, channel)
    if se_size is None or se_size == 0:
        return check_raster(plane)
    return morphological_gradient(plane, StructuringElement(se_size))


class Preprocessor(TransformerMixin, BaseEstimator):
    """Stateless transformer applying :func:`preprocess` to a list of images."""

    def __init__(self, channel="B", se_size=5):
        self.channel = channel
        self.se_size = se_size

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        return [preprocess(img, self.channel, self.se_size) for img in X]
