"""Input validation helpers shared by the estimators and image operations."""

import numpy as np


class StructureError(ValueError):
    """Raised when an input has malformed shape or is empty."""


class ParameterError(ValueError):
    """Raised when a parameter value is outside its allowed domain."""


class DepthError(ValueError):
    """Raised when a wavelet-packet node would exceed the maximum depth."""


class TrainingError(ValueError):
    """Raised when a classifier cannot be fitted on the given data."""


class DataError(ValueError):
    """Raised when dataset bookkeeping (labels, patients) is inconsistent."""


def check_raster(img, name="image"):
    """Return ``img`` as a 2-D float64 array, raising on bad shape."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise StructureError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise StructureError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise StructureError(f"{name} contains non-finite values")
    return arr


def check_odd(value, name, minimum=3):
    value = int(value)
    if value < minimum or value % 2 == 0:
        raise ParameterError(f"{name} must be odd and >= {minimum}, got {value}")
    return value


def check_features(X, n_features=None):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise StructureError(f"feature matrix must be 2-D, got shape {X.shape}")
    if n_features is not None and X.shape[1] != n_features:
        raise StructureError(
            f"expected {n_features} features, got {X.shape[1]}")
    return X
