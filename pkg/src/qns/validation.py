"""Small input-validation helpers used by the public API surface."""

import numpy as np

from .errors import ValidationError


def as_float_array(x, name, length=None):
    """Coerce to a contiguous float64 array, checking finiteness.

    Raises ValidationError on non-finite entries or a length mismatch.
    """
    arr = np.ascontiguousarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    if length is not None and arr.shape != (length,):
        raise ValidationError(
            f"{name} must have shape ({length},), got {arr.shape}"
        )
    return arr


def require(condition, message):
    if not condition:
        raise ValidationError(message)


def require_positive(value, name):
    if not np.isfinite(value) or value <= 0:
        raise ValidationError(f"{name} must be positive and finite, got {value!r}")
    return float(value)


def require_nonnegative(value, name):
    if not np.isfinite(value) or value < 0:
        raise ValidationError(f"{name} must be non-negative and finite, got {value!r}")
    return float(value)
