"""White heteroskedasticity and Breusch-Godfrey serial-correlation tests."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np

from .ols import CollinearError, EstimationError, UnderdeterminedError, design, fit_ols
from .special import chi2_sf


class DiagnosticError(EstimationError):
    pass


@dataclass(frozen=True)
class TestResult:
    statistic: float
    pvalue: float
    df: int


def _aux_r2(target: np.ndarray, X: np.ndarray) -> float:
    if np.ptp(target) == 0:
        return 0.0
    try:
        return fit_ols(target, X).r_squared
    except (CollinearError, UnderdeterminedError) as exc:
        raise DiagnosticError(f"degenerate-auxiliary: {exc}") from exc


def white_test(resid, regressors) -> TestResult:
    """n * R^2 of squared residuals on regressors, their squares and cross products.

    ``regressors`` excludes the constant.
    """
    e = np.asarray(resid, dtype=float)
    X = np.asarray(regressors, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    k = X.shape[1]
    cols = [X[:, j] for j in range(k)]
    cols += [X[:, i] * X[:, j] for i, j in combinations_with_replacement(range(k), 2)]
    aux = design(cols)
    n = len(e)
    stat = n * _aux_r2(e ** 2, aux)
    df = aux.shape[1] - 1
    return TestResult(stat, chi2_sf(stat, df), df)


def lag_within_groups(values, groups, lag: int) -> np.ndarray:
    """``values`` shifted by ``lag`` rows inside each contiguous group, zero padded."""
    v = np.asarray(values, dtype=float)
    g = np.asarray(groups)
    out = np.zeros_like(v)
    if lag < len(v):
        same = g[lag:] == g[:-lag]
        out[lag:][same] = v[:-lag][same]
    return out


def _check_groups(groups) -> int:
    g = np.asarray(groups)
    if len(g) == 0:
        return 0
    starts = np.flatnonzero(np.r_[True, g[1:] != g[:-1]])
    if len(np.unique(g)) != len(starts):
        raise DiagnosticError("groups must occupy contiguous rows")
    lengths = np.diff(np.r_[starts, len(g)])
    return int(lengths.max())


def lm_serial_test(resid, regressors, lags: int = 1, groups=None) -> TestResult:
    """Breusch-Godfrey test: n * R^2 of residuals on regressors plus ``lags``
    lagged residuals, lags taken only inside each group of ``groups``.

    Lagged values before a group's first row are set to zero. Rows must be
    ordered in time within their group; ``regressors`` excludes the constant.
    """
    if lags < 1:
        raise DiagnosticError("lags must be >= 1")
    e = np.asarray(resid, dtype=float)
    X = np.asarray(regressors, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if groups is None:
        groups = np.zeros(len(e), dtype=np.int64)
    longest = _check_groups(groups)
    if lags >= longest:
        raise DiagnosticError(f"lags ({lags}) must be shorter than the longest group ({longest})")
    cols = [X[:, j] for j in range(X.shape[1])]
    cols += [lag_within_groups(e, groups, p) for p in range(1, lags + 1)]
    stat = len(e) * _aux_r2(e, design(cols))
    return TestResult(stat, chi2_sf(stat, lags), lags)
