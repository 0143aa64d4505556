"""Input validation helpers, in the spirit of ``sklearn.utils.validation``."""

import numbers

import numpy as np

from .exceptions import InvalidInput


def check_vector(x, name="x", size=None, *, finite=True, positive=False,
                 nonnegative=False):
    """Return ``x`` as a 1-D float array after validating it."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise InvalidInput(f"{name} must be one-dimensional, got shape {arr.shape}")
    if size is not None and arr.shape[0] != size:
        raise InvalidInput(f"{name} must have length {size}, got {arr.shape[0]}")
    if finite and not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} contains non-finite entries")
    if positive and np.any(arr <= 0):
        raise InvalidInput(f"{name} must be strictly positive")
    if nonnegative and np.any(arr < 0):
        raise InvalidInput(f"{name} must be nonnegative")
    return arr


def check_square(A, name="A", size=None):
    arr = np.asarray(A, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise InvalidInput(f"{name} must be a square matrix, got shape {arr.shape}")
    if arr.shape[0] < 1:
        raise InvalidInput(f"{name} must have dimension >= 1")
    if size is not None and arr.shape[0] != size:
        raise InvalidInput(f"{name} must be {size}x{size}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} contains non-finite entries")
    return arr


def check_symmetric(A, name="A", tol=1e-12, *, symmetrize=True):
    """Validate a square matrix and return its symmetric part.

    Asymmetry larger than ``tol`` relative to ``max(1, |A|_max)`` is rejected,
    so a caller cannot silently pass a non-symmetric matrix.
    """
    arr = check_square(A, name)
    scale = max(1.0, float(np.max(np.abs(arr))))
    if np.max(np.abs(arr - arr.T)) > tol * scale * 1e3:
        raise InvalidInput(f"{name} is not symmetric")
    if symmetrize:
        arr = 0.5 * (arr + arr.T)
    return arr


def check_int(value, name, minimum=None):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise InvalidInput(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if minimum is not None and value < minimum:
        raise InvalidInput(f"{name} must be >= {minimum}, got {value}")
    return value


def check_positive(value, name):
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise InvalidInput(f"{name} must be a positive finite number, got {value}")
    return value
