"""Rank and linear correlation statistics with explicit tie handling.

These are the primitives behind rater screening and model evaluation:
Pearson's r, Spearman's rank correlation (Pearson over average
fractional ranks, so heavy integer-score ties are handled), and
Kendall's tau-b with its tie corrections.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .errors import DomainError


class DegenerateInputError(DomainError):
    code = "degenerate-input"


def _as_float_array(values: Sequence[float], name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise DegenerateInputError(f"{name} must be one-dimensional")
    return arr


def rankdata(values: Sequence[float]) -> np.ndarray:
    """Average fractional ranks, 1-based; tied values share their mean rank."""
    arr = _as_float_array(values, "values")
    order = np.argsort(arr, kind="stable")
    ranks = np.empty(len(arr), dtype=float)
    i = 0
    while i < len(arr):
        j = i
        while j + 1 < len(arr) and arr[order[j + 1]] == arr[order[i]]:
            j += 1
        # ranks i+1 .. j+1 share their average
        ranks[order[i:j + 1]] = (i + j + 2) / 2.0
        i = j + 1
    return ranks


def pearson(a: Sequence[float], b: Sequence[float]) -> float:
    """Product-moment correlation; degenerate if n < 2 or either input is constant."""
    x = _as_float_array(a, "a")
    y = _as_float_array(b, "b")
    if len(x) != len(y):
        raise DegenerateInputError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise DegenerateInputError("need at least 2 observations")
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(np.dot(xc, xc))
    syy = float(np.dot(yc, yc))
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateInputError("constant input has no defined correlation")
    return float(np.dot(xc, yc) / math.sqrt(sxx * syy))


def spearman(a: Sequence[float], b: Sequence[float]) -> float:
    """Rank correlation: Pearson's r over average fractional ranks.

    If exactly one input is constant the correlation is defined as 0.0
    (no rank agreement is measurable); if both are constant, or fewer
    than two observations are given, the input is degenerate.
    """
    x = _as_float_array(a, "a")
    y = _as_float_array(b, "b")
    if len(x) != len(y):
        raise DegenerateInputError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise DegenerateInputError("need at least 2 observations")
    x_const = bool(np.all(x == x[0]))
    y_const = bool(np.all(y == y[0]))
    if x_const and y_const:
        raise DegenerateInputError("both inputs constant")
    if x_const or y_const:
        return 0.0
    return pearson(rankdata(x), rankdata(y))


def kendall(a: Sequence[float], b: Sequence[float]) -> float:
    """Kendall's tau-b: (C - D) / sqrt((n0 - n1)(n0 - n2)) with tie terms.

    Degenerate when n < 2 or all pairs are tied on either input
    (the tie-corrected denominator vanishes).
    """
    x = _as_float_array(a, "a")
    y = _as_float_array(b, "b")
    if len(x) != len(y):
        raise DegenerateInputError(f"length mismatch: {len(x)} vs {len(y)}")
    n = len(x)
    if n < 2:
        raise DegenerateInputError("need at least 2 observations")
    dx = np.sign(x[:, None] - x[None, :])
    dy = np.sign(y[:, None] - y[None, :])
    iu = np.triu_indices(n, k=1)
    prod = dx[iu] * dy[iu]
    concordant = int(np.sum(prod > 0))
    discordant = int(np.sum(prod < 0))
    n0 = n * (n - 1) // 2
    n1 = int(np.sum(dx[iu] == 0))   # pairs tied in a
    n2 = int(np.sum(dy[iu] == 0))   # pairs tied in b
    if n0 == n1 or n0 == n2:
        raise DegenerateInputError("all pairs tied on one input")
    return float((concordant - discordant) / math.sqrt((n0 - n1) * (n0 - n2)))


def rmse(predictions: Sequence[float], targets: Sequence[float]) -> float:
    p = _as_float_array(predictions, "predictions")
    t = _as_float_array(targets, "targets")
    if len(p) != len(t) or len(p) == 0:
        raise DegenerateInputError("rmse needs equal-length non-empty inputs")
    return float(np.sqrt(np.mean((p - t) ** 2)))
