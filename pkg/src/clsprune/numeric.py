"""Small numeric kernels shared by scoring and diagnostics.

All reductions run in float64 whatever the input dtype.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import DegenerateVariance, InvalidInput

ArrayLike = Sequence[float] | np.ndarray


def as_finite_vector(values: ArrayLike, name: str = "values") -> np.ndarray:
    """Return ``values`` as a 1-D float64 array, rejecting empty or non-finite input."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidInput(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise InvalidInput(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} contains NaN or Inf")
    return arr


def softmax(logits: ArrayLike) -> np.ndarray:
    x = as_finite_vector(logits, "logits")
    e = np.exp(x - x.max())
    return e / e.sum()


def descending_ranks(scores: ArrayLike) -> np.ndarray:
    """1-based ranks with the largest score ranked 1.

    Tied scores share the mean of the ranks they occupy, so the ranks always
    sum to ``n * (n + 1) / 2``.

    >>> descending_ranks([0.5, 0.2, 0.5]).tolist()
    [1.5, 3.0, 1.5]
    """
    x = as_finite_vector(scores, "scores")
    n = x.size
    order = np.argsort(-x, kind="stable")
    sorted_vals = x[order]
    # start index of each run of equal values in sorted order
    starts = np.flatnonzero(np.r_[True, sorted_vals[1:] != sorted_vals[:-1]])
    ends = np.r_[starts[1:], n]
    mean_rank = (starts + ends + 1) / 2.0  # mean of 1-based positions start+1..end
    run_id = np.repeat(np.arange(starts.size), ends - starts)
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = mean_rank[run_id]
    return ranks


def pearson(x: ArrayLike, y: ArrayLike) -> float:
    a = as_finite_vector(x, "x")
    b = as_finite_vector(y, "y")
    if a.size != b.size:
        raise InvalidInput(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 2:
        raise InvalidInput("pearson needs at least two observations")
    # test constancy directly: a - mean(a) can be nonzero by rounding alone
    if np.ptp(a) == 0.0 or np.ptp(b) == 0.0:
        raise DegenerateVariance("correlation undefined for a constant sequence")
    da = a - a.mean()
    db = b - b.mean()
    sa = float(np.dot(da, da))
    sb = float(np.dot(db, db))
    r = float(np.dot(da, db)) / np.sqrt(sa * sb)
    return float(min(1.0, max(-1.0, r)))
