"""Dense array helpers and the toolkit's dtype policy.

Tensors are plain numpy ndarrays (row-major, rank 1-4).  float32 is the
default compute precision; float64 exists for verification-grade gradient
checks only.  The helpers below enforce the no-broadcasting rule (same shape
or scalar) that the rest of the toolkit relies on.
"""

from __future__ import annotations

import numpy as np

DEFAULT_DTYPE = np.float32


def as_tensor(data, dtype=None) -> np.ndarray:
    return np.asarray(data, dtype=dtype or DEFAULT_DTYPE)


def _check_operands(op: str, a: np.ndarray, b) -> None:
    if np.isscalar(b) or (isinstance(b, np.ndarray) and b.ndim == 0):
        return
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def add(a: np.ndarray, b) -> np.ndarray:
    _check_operands("add", a, b)
    return a + b


def sub(a: np.ndarray, b) -> np.ndarray:
    _check_operands("sub", a, b)
    return a - b


def mul(a: np.ndarray, b) -> np.ndarray:
    _check_operands("mul", a, b)
    return a * b


def clamp(a: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Bound every element into [lo, hi]."""
    return np.clip(a, lo, hi)


def sign(a: np.ndarray) -> np.ndarray:
    """Elementwise -1/0/+1 with sign(0) = 0."""
    return np.sign(a)


def l1_norm(a: np.ndarray) -> float:
    return float(np.abs(a).sum())
