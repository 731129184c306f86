"""Bit-reproducible numeric primitives.

Every reduction in this package runs left to right in a fixed order, so a
training run produces byte-identical metrics on any machine with IEEE-754
doubles. That rules out BLAS matmul and numpy's pairwise ``sum``: both
reassociate additions. ``lsum`` builds on ``np.cumsum`` (a strict left fold)
and ``matmul`` accumulates rank-1 updates over the inner index, which adds
partial products in exactly the order of the textbook triple loop.

The cost is speed we do not need: models here are desk-scale by design.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, NumericError

Tensor = np.ndarray


def as_tensor(x, name="tensor"):
    """Coerce external input to a finite float64 C-contiguous array.

    Raises NumericError when any element is NaN or infinite. Internal hot
    paths skip this check; it guards the boundaries (datasets, configs,
    user-supplied arrays).
    """
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} contains non-finite values")
    return arr


def lsum(x, axis=None):
    """Sum with strict left-to-right accumulation.

    axis=None folds over the row-major flattening of ``x``. ``np.cumsum``
    is a sequential fold by definition, so the result is bitwise equal to
    a Python loop over the same elements.
    """
    arr = np.asarray(x, dtype=np.float64)
    if axis is None:
        flat = np.ravel(arr, order="C")
        if flat.size == 0:
            return 0.0
        return float(np.cumsum(flat)[-1])
    if arr.shape[axis] == 0:
        return np.zeros(arr.shape[:axis] + arr.shape[axis + 1 :])
    return np.take(np.cumsum(arr, axis=axis), -1, axis=axis)


def lmean(x, axis=None):
    """Mean computed as lsum / count, preserving the fixed fold order."""
    arr = np.asarray(x, dtype=np.float64)
    if axis is None:
        if arr.size == 0:
            raise DimensionError("mean of empty tensor")
        return lsum(arr) / arr.size
    if arr.shape[axis] == 0:
        raise DimensionError("mean over empty axis")
    return lsum(arr, axis=axis) / arr.shape[axis]


def dot(a, b):
    """Inner product of two 1-d arrays, left-to-right."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
        raise DimensionError(f"dot expects equal-length vectors, got {a.shape} and {b.shape}")
    return lsum(a * b)


def matmul(a, b):
    """2-d matrix product with deterministic accumulation order.

    For out[i, j] the partial products a[i, k] * b[k, j] are added in
    ascending k, matching the naive triple loop bit for bit. Implemented
    as a loop of rank-1 updates so numpy does the per-k work.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-d operands, got {a.ndim}-d and {b.ndim}-d")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"inner dimensions differ: {a.shape} x {b.shape}")
    out = np.zeros((a.shape[0], b.shape[1]))
    for k in range(a.shape[1]):
        out += a[:, k : k + 1] * b[k : k + 1, :]
    return out


@dataclass
class GradientVector:
    """Flat float64 gradient tagged with the parameter layout it matches.

    Optimizer steps refuse gradients whose layout_id differs from their
    own; that catches model/optimizer mix-ups at the call site instead of
    corrupting parameters silently.
    """

    values: np.ndarray
    layout_id: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise DimensionError("gradient must be a flat vector")
        if not np.all(np.isfinite(self.values)):
            raise NumericError(f"non-finite gradient for layout {self.layout_id}")


def grad_norm(grad, p=2):
    """Norm of a gradient vector; p is 1, 2, or np.inf."""
    v = grad.values if isinstance(grad, GradientVector) else np.asarray(grad, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise NumericError("norm of non-finite vector")
    if v.size == 0:
        return 0.0
    if p == 1:
        return lsum(np.abs(v))
    if p == 2:
        return float(np.sqrt(lsum(v * v)))
    if p == np.inf or p == "inf":
        return float(np.max(np.abs(v)))
    raise ValueError(f"unsupported norm order {p!r}")


def finite_diff_gradient(f, x, h=1e-5, layout_id="finite-diff"):
    """Central-difference gradient of scalar f at x.

    Exact for quadratics up to rounding. Costs 2 * len(x) evaluations,
    which is the point: it shares no code with any backward pass, so it
    can referee them.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError("finite_diff_gradient expects a flat parameter vector")
    if h <= 0:
        raise ValueError("step size h must be positive")
    g = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2.0 * h)
    return GradientVector(g, layout_id)
