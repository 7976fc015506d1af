"""
Dense linear algebra and seeded randomness shared by every other module.

Matrices and vectors are float64 numpy arrays (row-major). Random streams come
from numpy's counter-based Philox generator, so a seed reproduces the same
draws on any platform.
"""
import logging

import numpy as np

from .errors import NumericalError, ShapeError, ValidationError

logger = logging.getLogger(__name__)

Matrix = np.ndarray
Vector = np.ndarray
Rng = np.random.Generator


def make_rng(seed: int) -> Rng:
    """Create a Philox-backed generator for a 64-bit seed."""
    if seed < 0 or seed >= 2 ** 64:
        raise ValidationError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.Philox(seed))


def check_finite(values: np.ndarray, what: str = "result") -> np.ndarray:
    if not np.all(np.isfinite(values)):
        raise NumericalError(f"{what} contains NaN or infinite values")
    return values


def as_matrix(data, name: str = "matrix") -> Matrix:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-dimensional, got shape {arr.shape}", arr.shape)
    return check_finite(arr, name)


def as_vector(data, name: str = "vector") -> Vector:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-dimensional, got shape {arr.shape}", arr.shape)
    return check_finite(arr, name)


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Matrix product a @ b; raises ShapeError carrying both shapes on mismatch."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}", a.shape, b.shape)
    return check_finite(a @ b, "matrix product")


def hadamard(a: Vector, b: Vector) -> Vector:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"elementwise product needs equal shapes, got {a.shape} and {b.shape}", a.shape, b.shape)
    return check_finite(a * b, "elementwise product")


def normal_sample(rng: Rng, mean: float, stddev: float, n: int) -> Vector:
    """Draw n normal variates; stddev 0 returns n copies of mean without touching the stream."""
    if stddev < 0:
        raise ValidationError(f"stddev must be non-negative, got {stddev}")
    if n < 0:
        raise ValidationError(f"sample count must be non-negative, got {n}")
    if stddev == 0:
        return np.full(n, float(mean))
    return rng.normal(float(mean), float(stddev), size=n)
