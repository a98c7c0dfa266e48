"""Dense non-negative matrix primitives.

Matrices are plain ``numpy.ndarray`` objects of dtype float64 stored in
row-major (C) order. Shapes follow the variables-by-samples orientation used
throughout the package: an observation matrix is P x N, a covariate matrix is
R x N, so every sample is a column.
"""

from __future__ import annotations

import numpy as np

DEFAULT_EPS = 1e-12


class ShapeError(ValueError):
    """Raised when matrix dimensions are incompatible."""


class DomainError(ValueError):
    """Raised when a matrix violates non-negativity or finiteness."""


def as_nonneg(m, name: str = "matrix") -> np.ndarray:
    """Validate ``m`` as a non-negative matrix and return it as float64.

    One-dimensional input is not promoted; callers must pass 2-D data.
    """
    arr = np.ascontiguousarray(m, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"{name} must have at least one row and column, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains NaN or infinite entries")
    if np.any(arr < 0):
        raise DomainError(f"{name} contains negative entries (min {arr.min():g})")
    return arr


def _same_shape(a: np.ndarray, b: np.ndarray, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


def matmul(lhs, rhs) -> np.ndarray:
    lhs = as_nonneg(lhs, "lhs")
    rhs = as_nonneg(rhs, "rhs")
    if lhs.shape[1] != rhs.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {lhs.shape} by {rhs.shape}")
    return lhs @ rhs


def hadamard(lhs, rhs) -> np.ndarray:
    lhs = as_nonneg(lhs, "lhs")
    rhs = as_nonneg(rhs, "rhs")
    _same_shape(lhs, rhs, "hadamard")
    return lhs * rhs


def hadamard_div(num, den, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Entrywise ``num / (den + eps)``.

    ``eps`` keeps zero denominators finite; it must be strictly positive.
    """
    if not eps > 0:
        raise ValueError(f"eps must be > 0, got {eps!r}")
    num = as_nonneg(num, "num")
    den = as_nonneg(den, "den")
    _same_shape(num, den, "hadamard_div")
    return num / (den + eps)


def column_normalize(m) -> tuple[np.ndarray, np.ndarray]:
    """Scale every column to sum to one.

    Returns the normalized matrix and the original column sums. A column
    whose sum is zero is replaced by the uniform column ``1 / rows`` and its
    reported sum stays 0, so callers can detect the degenerate case.
    """
    m = as_nonneg(m, "m")
    return _column_normalize(m)


def _column_normalize(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    sums = m.sum(axis=0)
    out = np.empty_like(m)
    pos = sums > 0
    out[:, pos] = m[:, pos] / sums[pos]
    out[:, ~pos] = 1.0 / m.shape[0]
    return out, sums


def frobenius_loss(y, yhat) -> float:
    """Squared Frobenius distance ``sum((y - yhat) ** 2)``."""
    y = as_nonneg(y, "y")
    yhat = as_nonneg(yhat, "yhat")
    _same_shape(y, yhat, "frobenius_loss")
    return _sq_loss(y, yhat)


def _sq_loss(y: np.ndarray, yhat: np.ndarray) -> float:
    d = y - yhat
    return float(np.einsum("ij,ij->", d, d))
