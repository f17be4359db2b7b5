"""Undecimated 2-D wavelet-packet decomposition with an 8-tap Daubechies bank.

Every subband keeps the dimensions of the root image.  Deeper levels use
the a-trous scheme: the analysis filters are dilated by inserting
``2**level - 1`` zeros between taps, so repeated application stays
shift-invariant.
"""

from dataclasses import dataclass, field

import numpy as np

from ._validation import DepthError, ParameterError, check_raster

#: Daubechies 8-tap lowpass analysis filter, normalised to unit DC gain.
DAUB8_LOWPASS = np.array([
    0.16290184,
    0.50547316,
    0.44610023,
    -0.01978767,
    -0.13225371,
    0.02180788,
    0.02325179,
    -0.00749321,
])

BANDS = ("LL", "LH", "HL", "HH")
MAX_DEPTH = 10


def derive_highpass(h):
    """Quadrature-mirror highpass ``g(k) = (-1)**k * h(N-1-k)``."""
    h = np.asarray(h, dtype=np.float64)
    if h.shape != (8,):
        raise ParameterError(f"expected 8 filter taps, got {h.size}")
    k = np.arange(8)
    return np.where(k % 2 == 0, 1.0, -1.0) * h[::-1]


@dataclass(frozen=True)
class FilterBank:
    lowpass: np.ndarray
    highpass: np.ndarray

    @classmethod
    def daubechies8(cls):
        return cls.from_lowpass(DAUB8_LOWPASS)

    @classmethod
    def from_lowpass(cls, h):
        h = np.array(h, dtype=np.float64)
        g = derive_highpass(h)
        h.setflags(write=False)
        g.setflags(write=False)
        return cls(h, g)

    @property
    def taps(self):
        return self.lowpass.size


@dataclass
class SubbandNode:
    """A subband of the packet tree.

    ``path`` lists the band labels from the root; the empty path is the
    original image.
    """

    path: tuple
    coeffs: np.ndarray

    @property
    def level(self):
        return len(self.path)

    @property
    def name(self):
        return path_name(self.path)


def path_name(path):
    return ".".join(path) if path else "root"


def parse_path(name):
    if name in ("", "root"):
        return ()
    parts = tuple(name.split("."))
    for p in parts:
        if p not in BANDS:
            raise ParameterError(f"unknown band label {p!r} in {name!r}")
    return parts


def filter_axis(x, taps, axis, dilation=1):
    """Filter ``x`` along ``axis`` with mirror (half-sample) extension.

    Computes ``y[n] = sum_k taps[k] * x[n + (c - k) * dilation]`` with
    ``c = len(taps) // 2``, so a unit impulse at ``m`` produces
    ``y[m - c*dilation + k*dilation] = taps[k]``.
    """
    taps = np.asarray(taps, dtype=np.float64)
    n_taps = taps.size
    c = n_taps // 2
    left = (n_taps - 1 - c) * dilation
    right = c * dilation
    x = np.moveaxis(x, axis, -1)
    n = x.shape[-1]
    pad = [(0, 0)] * (x.ndim - 1) + [(left, right)]
    xp = np.pad(x, pad, mode="symmetric")
    out = np.zeros_like(x, dtype=np.float64)
    for k in range(n_taps):
        start = left + (c - k) * dilation
        out += taps[k] * xp[..., start:start + n]
    return np.moveaxis(out, -1, axis)


def decompose_level(node, fb=None, max_depth=MAX_DEPTH):
    """Split ``node`` into its four same-size children.

    The first band letter is the filter applied along rows (axis 1), the
    second along columns (axis 0).  Returns a dict keyed by band label.
    """
    fb = fb if fb is not None else FilterBank.daubechies8()
    if node.level >= max_depth:
        raise DepthError(
            f"node {node.name} is at level {node.level}; max depth is {max_depth}")
    x = check_raster(node.coeffs, "subband")
    d = 2 ** node.level
    rows = {"L": filter_axis(x, fb.lowpass, 1, d),
            "H": filter_axis(x, fb.highpass, 1, d)}
    children = {}
    for band in BANDS:
        taps = fb.lowpass if band[1] == "L" else fb.highpass
        coeffs = filter_axis(rows[band[0]], taps, 0, d)
        children[band] = SubbandNode(node.path + (band,), coeffs)
    return children


@dataclass
class WPTree:
    """Lazily expanded wavelet-packet quad-tree.

    A node has either no children or all four.  ``node(path)`` expands
    whatever ancestors are missing.
    """

    root: SubbandNode
    fb: FilterBank = field(default_factory=FilterBank.daubechies8)
    max_depth: int = MAX_DEPTH
    expanded: dict = field(default_factory=dict)

    @classmethod
    def from_image(cls, img, fb=None, max_depth=MAX_DEPTH):
        root = SubbandNode((), check_raster(img))
        return cls(root, fb if fb is not None else FilterBank.daubechies8(),
                   max_depth)

    def children(self, path):
        path = tuple(path)
        if path not in self.expanded:
            parent = self.node(path)
            self.expanded[path] = decompose_level(parent, self.fb, self.max_depth)
        return self.expanded[path]

    def node(self, path):
        path = tuple(path)
        if not path:
            return self.root
        return self.children(path[:-1])[path[-1]]

    def prune(self, keep):
        """Drop expansions whose parent is not in ``keep`` (a set of paths)."""
        for p in list(self.expanded):
            if p not in keep:
                del self.expanded[p]
