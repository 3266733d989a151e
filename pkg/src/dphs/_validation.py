"""Input validation helpers shared by the public operations."""

import numpy as np

from .exceptions import ConfigurationError, ContractViolation


def check_vector(x, size=None, name="x", finite=True):
    """Return ``x`` as a 1-d float array, checking length and finiteness."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ContractViolation(f"{name} must be 1-dimensional, got shape {arr.shape}")
    if size is not None and arr.shape[0] != size:
        raise ContractViolation(f"{name} has length {arr.shape[0]}, expected {size}")
    if finite and not np.all(np.isfinite(arr)):
        raise ContractViolation(f"{name} contains non-finite entries")
    return arr


def check_matrix(a, shape, name="matrix"):
    arr = np.asarray(a, dtype=float)
    if arr.shape != tuple(shape):
        raise ContractViolation(f"{name} has shape {arr.shape}, expected {tuple(shape)}")
    return arr


def check_positive(value, name):
    if not value > 0:
        raise ConfigurationError(f"{name} must be positive, got {value!r}")
    return value


def check_random_state(seed):
    """Turn ``None``, an int or a Generator into a ``numpy.random.Generator``."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sup_norm(v):
    return float(np.max(np.abs(v))) if np.size(v) else 0.0
