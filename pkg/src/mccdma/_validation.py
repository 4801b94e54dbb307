"""Input validation helpers shared by the estimators and the simulator.

sklearn's ``check_array`` rejects complex input, so the checks here are
hand-rolled but follow the same spirit: coerce, check shape, fail loudly.
"""

import numpy as np

from .exceptions import DimensionMismatchError, LengthMismatchError, NotPowerOfTwoError


def is_power_of_two(n):
    return isinstance(n, (int, np.integer)) and n > 0 and (n & (n - 1)) == 0


def check_power_of_two(n, name="n"):
    if not is_power_of_two(n):
        raise NotPowerOfTwoError(f"{name} must be a power of two, got {n!r}")
    return int(n)


def check_complex(x, *, ndim=None, min_ndim=None, name="array"):
    """Return ``x`` as a complex128 array, optionally checking its rank."""
    arr = np.asarray(x, dtype=np.complex128)
    if ndim is not None and arr.ndim != ndim:
        raise DimensionMismatchError(f"{name} must be {ndim}-D, got shape {arr.shape}")
    if min_ndim is not None and arr.ndim < min_ndim:
        raise DimensionMismatchError(
            f"{name} must have at least {min_ndim} dimensions, got shape {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise DimensionMismatchError(f"{name} contains non-finite values")
    return arr


def check_same_length(a, b, names=("a", "b")):
    if len(a) != len(b):
        raise LengthMismatchError(
            f"{names[0]} has length {len(a)} but {names[1]} has length {len(b)}"
        )


def check_training_pair(Y, P):
    """Validate a received block ``Y`` (..., M_r, N) against training ``P`` (M_t, N)."""
    P = check_complex(P, ndim=2, name="P")
    Y = check_complex(Y, min_ndim=2, name="Y")
    if Y.shape[-1] != P.shape[1]:
        raise DimensionMismatchError(
            f"Y has {Y.shape[-1]} training columns but P has {P.shape[1]}"
        )
    return Y, P


def check_positive_int(value, name, minimum=1):
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)
