"""Small statistical helpers shared by tests and experiment runners."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats

__all__ = [
    "ChiSquareResult",
    "two_sample_chisquare",
    "FitResult",
    "linear_fit",
    "plateau_fit",
    "mean_and_se",
]


@dataclass(frozen=True)
class ChiSquareResult:
    statistic: float
    dof: int
    pvalue: float
    bins: int


def _merge_sparse_bins(table: np.ndarray, min_expected: float) -> np.ndarray:
    """Merge adjacent columns of a 2 x K table until every expected count
    reaches ``min_expected`` (tail columns are folded into their neighbour)."""
    cols = [table[:, j].astype(float) for j in range(table.shape[1])]
    row_frac = table.sum(axis=1) / table.sum()

    def ok(c):
        return np.all(row_frac * c.sum() >= min_expected)

    merged = []
    acc = np.zeros(2)
    for c in cols:
        acc = acc + c
        if ok(acc):
            merged.append(acc)
            acc = np.zeros(2)
    if acc.sum() > 0:
        if merged:
            merged[-1] = merged[-1] + acc
        else:
            merged.append(acc)
    return np.array(merged).T


def two_sample_chisquare(x, y, min_expected: float = 5.0) -> ChiSquareResult:
    """Chi-square homogeneity test of two samples of nonnegative integers.

    The two empirical distributions are tabulated on a common support and
    adjacent bins are merged until each expected count is at least
    ``min_expected``.
    """
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    top = int(max(x.max(), y.max())) + 1
    table = np.vstack([np.bincount(x, minlength=top), np.bincount(y, minlength=top)])
    table = _merge_sparse_bins(table, min_expected)
    if table.shape[1] < 2:
        return ChiSquareResult(0.0, 0, 1.0, table.shape[1])
    chi2, p, dof, _ = stats.chi2_contingency(table, correction=False)
    return ChiSquareResult(float(chi2), int(dof), float(p), table.shape[1])


@dataclass(frozen=True)
class FitResult:
    """Least-squares fit ``y = intercept + slope * x`` (plus an optional term).

    ``log_coefficient`` is set only by :func:`plateau_fit`, where the model is
    ``y = intercept + log_coefficient * log(N)/N + slope / N``.
    """

    slope: float
    intercept: float
    residual_rms: float
    points_used: int
    log_coefficient: Optional[float] = None


def linear_fit(x, y) -> FitResult:
    """Ordinary least squares on finite points; needs at least 3 of them."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(x) & np.isfinite(y)
    x, y = x[ok], y[ok]
    if x.size < 3:
        raise ValueError("a fit needs at least 3 finite points")
    res = stats.linregress(x, y)
    resid = y - (res.intercept + res.slope * x)
    return FitResult(float(res.slope), float(res.intercept), float(math.sqrt(np.mean(resid ** 2))), int(x.size))


def plateau_fit(Ns, y) -> FitResult:
    """Large-``N`` plateau of ``y_N = log p_N / N``.

    Fits ``y = a + g log(N)/N + c/N`` by least squares, i.e. the expansion
    ``log p_N = a N + g log N + c + o(1)`` with a free polynomial exponent
    ``g``; the plateau is ``a`` (``intercept``), ``c`` is stored as ``slope``.
    Needs at least 4 finite points so that a residual remains.
    """
    n = np.asarray(Ns, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(n) & np.isfinite(y)
    n, y = n[ok], y[ok]
    if n.size < 4:
        raise ValueError("a plateau fit needs at least 4 finite points")
    A = np.column_stack([np.ones_like(n), np.log(n) / n, 1.0 / n])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    return FitResult(
        slope=float(coef[2]),
        intercept=float(coef[0]),
        residual_rms=float(math.sqrt(np.mean(resid ** 2))),
        points_used=int(n.size),
        log_coefficient=float(coef[1]),
    )


def mean_and_se(values) -> tuple:
    """Sample mean and its standard error."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return float(v.mean()) if v.size else math.nan, math.nan
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))
