"""Local fractal dimension under the fractional Brownian motion model.

For every pixel, all pixel pairs inside a centred odd window are binned by
rounded Euclidean distance.  The mean absolute intensity difference per bin
follows ``E|dI| = nu * dr**H``; a log-log least-squares fit gives the Hurst
coefficient ``H`` and ``FD = 3 - H``, clamped to ``[2, 3]``.
"""

from dataclasses import dataclass

import numpy as np

from ._validation import ParameterError, StructureError, check_odd, check_raster

FD_MIN = 2.0
FD_MAX = 3.0
DEFAULT_WINDOW = 7


class FlatPatchError(ValueError):
    """Every mean absolute difference is zero; the surface is flat."""


class DegenerateFitError(ValueError):
    """Fewer than two usable scales remain for the log-log fit."""


def hurst_fit(distances, mean_abs_diff):
    """Fit ``log(mean_abs_diff) = log(nu) + H * log(distance)``.

    Entries with zero mean difference are dropped before fitting.

    Parameters
    ----------
    distances : array-like
        Strictly increasing pixel distances, each >= 1.
    mean_abs_diff : array-like
        Mean absolute intensity difference at each distance.

    Returns
    -------
    H : float
        Least-squares slope.
    nu : float
        Scale constant, ``exp(intercept)``.

    Raises
    ------
    FlatPatchError
        If every mean difference is zero.
    DegenerateFitError
        If only one positive entry remains.
    """
    r = np.asarray(distances, dtype=np.float64)
    m = np.asarray(mean_abs_diff, dtype=np.float64)
    if r.shape != m.shape or r.ndim != 1:
        raise StructureError("distances and differences must be equal-length 1-D")
    if np.any(r < 1) or np.any(np.diff(r) <= 0):
        raise ParameterError("distances must be >= 1 and strictly increasing")
    if np.any(m < 0):
        raise ParameterError("mean absolute differences cannot be negative")
    keep = m > 0
    if not keep.any():
        raise FlatPatchError("all mean absolute differences are zero")
    if keep.sum() < 2:
        raise DegenerateFitError("need at least two positive scales")
    x = np.log(r[keep])
    y = np.log(m[keep])
    xc = x - x.mean()
    H = float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))
    log_nu = float(y.mean() - H * x.mean())
    return H, float(np.exp(log_nu))


def pair_offsets(window):
    """Half-plane pixel offsets grouped into rounded-distance bins.

    Returns ``(offsets, bins, centres)`` where ``offsets`` is a list of
    ``(dy, dx)``, ``bins[i]`` the integer bin of ``offsets[i]`` and
    ``centres`` the pair-count-weighted mean distance of each bin
    ``1..window // 2`` inside a full window.
    """
    # two distance bins are the minimum for a slope
    window = check_odd(window, "window", minimum=5)
    radius = window // 2
    offsets, bins = [], []
    for dy in range(0, window):
        for dx in range(-(window - 1), window):
            if dy == 0 and dx <= 0:
                continue
            b = int(np.floor(np.hypot(dy, dx) + 0.5))
            if 1 <= b <= radius:
                offsets.append((dy, dx))
                bins.append(b)
    bins = np.array(bins)
    weights = np.array([(window - dy) * (window - abs(dx)) for dy, dx in offsets],
                       dtype=np.float64)
    dist = np.array([np.hypot(dy, dx) for dy, dx in offsets])
    centres = np.array([np.sum(weights[bins == b] * dist[bins == b])
                        / np.sum(weights[bins == b]) for b in range(1, radius + 1)])
    return offsets, bins, centres


def _box_sum(a, hy, hx, out_shape):
    # Exact-zero preserving sliding sum (no cumulative-sum cancellation).
    H, W = out_shape
    rows = a[:, 0:W].copy()
    for j in range(1, hx):
        rows += a[:, j:j + W]
    out = rows[0:H].copy()
    for i in range(1, hy):
        out += rows[i:i + H]
    return out


def local_mean_abs_diff(img, window=DEFAULT_WINDOW):
    """Per-pixel mean absolute difference for each distance bin.

    Returns an array of shape ``(window // 2, M, N)`` plus the bin centres.
    Image borders are mirror extended.
    """
    img = check_raster(img)
    window = check_odd(window, "window", minimum=5)
    M, N = img.shape
    if M < window or N < window:
        raise ParameterError(f"image {img.shape} smaller than window {window}")
    r = window // 2
    pad = np.pad(img, r, mode="symmetric")
    P, Q = pad.shape
    offsets, bins, centres = pair_offsets(window)
    sums = np.zeros((r, M, N))
    counts = np.zeros(r)
    for (dy, dx), b in zip(offsets, bins):
        lo, hi = max(0, -dx), max(0, dx)
        # d[i, j] pairs pad[i, j + lo] with pad[i + dy, j + hi]
        d = np.abs(pad[dy:, hi:Q - lo] - pad[:P - dy, lo:Q - hi])
        hy, hx = window - dy, window - abs(dx)
        sums[b - 1] += _box_sum(d, hy, hx, (M, N))
        counts[b - 1] += hy * hx
    return sums / counts[:, None, None], centres


def _fd_from_bins(means, centres):
    n_bins = means.shape[0]
    x = np.log(centres)
    positive = means > 0
    n_pos = positive.sum(axis=0)
    fd = np.full(means.shape[1:], FD_MIN)
    full = n_pos == n_bins
    if full.any():
        y = np.log(means[:, full])
        xc = x - x.mean()
        slope = (xc[:, None] * (y - y.mean(axis=0))).sum(axis=0) / np.dot(xc, xc)
        fd[full] = 3.0 - slope
    # Partial windows: fit on the positive bins only; one bin left is the
    # limit of an infinitely steep decay, FD = 3.
    partial = (n_pos > 0) & ~full
    if partial.any():
        idx = np.argwhere(partial)
        for i, j in idx:
            try:
                H, _ = hurst_fit(centres, means[:, i, j])
                fd[i, j] = 3.0 - H
            except DegenerateFitError:
                fd[i, j] = FD_MAX
    return np.clip(fd, FD_MIN, FD_MAX)


def fd_image(img, window=DEFAULT_WINDOW):
    """Per-pixel fractal dimension map of ``img``.

    Flat windows (no intensity variation) are assigned ``FD = 2``.

    Parameters
    ----------
    img : array-like of shape (M, N)
    window : int
        Odd sliding-window size (default 7).

    Returns
    -------
    ndarray of shape (M, N) with values in ``[2, 3]``.
    """
    means, centres = local_mean_abs_diff(img, window)
    return _fd_from_bins(means, centres)


@dataclass(frozen=True)
class FdSignature:
    mean_fd: float
    lacunarity: float

    def to_dict(self):
        return {"mean_fd": self.mean_fd, "lacunarity": self.lacunarity}


def lacunarity(fd):
    """Mean absolute relative deviation of an FD map from its mean."""
    fd = np.asarray(fd, dtype=np.float64)
    if fd.size == 0:
        raise StructureError("empty fractal image")
    mean = fd.mean()
    if mean == 0:
        raise ParameterError("fractal image mean is zero")
    if fd.min() == fd.max():
        # the rounded mean of equal values need not equal them exactly
        return 0.0
    return float(np.mean(np.abs(fd / mean - 1.0)))


def fd_signature(fd):
    """Summarise an FD map by its mean and lacunarity."""
    fd = np.asarray(fd, dtype=np.float64)
    if fd.size == 0:
        raise StructureError("empty fractal image")
    return FdSignature(float(fd.mean()), lacunarity(fd))


def fd_to_gray(fd):
    """Map FD values 2..3 linearly to 0..255 (uint8) for inspection dumps."""
    return np.round((np.clip(fd, FD_MIN, FD_MAX) - FD_MIN) * 255).astype(np.uint8)
