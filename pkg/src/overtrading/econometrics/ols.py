"""Ordinary least squares via a QR decomposition of the design matrix."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .special import chi2_sf, f_sf, t_sf2


class EstimationError(Exception):
    pass


class CollinearError(EstimationError):
    pass


class UnderdeterminedError(EstimationError):
    pass


@dataclass
class OLSResult:
    names: list[str]
    params: np.ndarray
    bse: np.ndarray
    tvalues: np.ndarray
    pvalues: np.ndarray
    cov: np.ndarray
    resid: np.ndarray
    n_obs: int
    df_resid: int
    ssr: float
    r_squared: float
    adj_r_squared: float
    f_stat: float
    f_pvalue: float
    robust: bool = False

    def coef(self, name: str) -> float:
        return float(self.params[self.names.index(name)])

    def wald(self, names: Sequence[str]) -> tuple[float, float]:
        """Wald chi-square (and p-value) for the joint restriction that ``names`` are zero."""
        idx = [self.names.index(n) for n in names]
        b = self.params[idx]
        v = self.cov[np.ix_(idx, idx)]
        stat = float(b @ np.linalg.solve(v, b))
        return stat, chi2_sf(stat, len(idx))


def design(columns: Sequence[np.ndarray], add_const: bool = True) -> np.ndarray:
    cols = [np.asarray(c, dtype=float) for c in columns]
    n = len(cols[0]) if cols else 0
    if add_const:
        cols.insert(0, np.ones(n))
    return np.column_stack(cols) if cols else np.empty((n, 0))


def fit_ols(y, X, names: Sequence[str] | None = None, robust: bool = False) -> OLSResult:
    """Least-squares fit of ``y`` on the columns of ``X`` (include a constant yourself,
    see :func:`design`).

    Standard errors are classical unless ``robust`` (HC1) is set. R-squared is
    centred when the first column is constant, uncentred otherwise.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or len(y) != X.shape[0]:
        raise EstimationError("y and X disagree in length")
    n, k = X.shape
    names = list(names) if names is not None else [f"x{i}" for i in range(k)]
    if n < k + 2:
        raise UnderdeterminedError(f"underdetermined: {n} rows for {k} coefficients")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise EstimationError("non-finite values in regression data")
    if np.linalg.matrix_rank(X) < k:
        raise CollinearError("collinear regressors")
    q, r = np.linalg.qr(X)
    params = np.linalg.solve(r, q.T @ y)
    resid = y - X @ params
    df_resid = n - k
    ssr = float(resid @ resid)
    r_inv = np.linalg.inv(r)
    xtx_inv = r_inv @ r_inv.T
    if robust:
        meat = (X * (resid ** 2)[:, None]).T @ X
        cov = xtx_inv @ meat @ xtx_inv * (n / df_resid)
    else:
        cov = xtx_inv * (ssr / df_resid)
    bse = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        tvalues = params / bse
    # an infinite t (zero standard error) is certain, 0/0 is undefined
    pvalues = np.array([t_sf2(t, df_resid) if np.isfinite(t) else (0.0 if np.isinf(t) else np.nan)
                        for t in tvalues])

    has_const = bool(k) and np.all(X[:, 0] == X[0, 0]) and X[0, 0] != 0
    tss = float(((y - y.mean()) ** 2).sum()) if has_const else float(y @ y)
    r2 = 1.0 - ssr / tss if tss > 0 else 0.0
    r2 = min(max(r2, 0.0), 1.0)
    k_slopes = k - 1 if has_const else k
    adj = 1.0 - (1.0 - r2) * (n - 1 if has_const else n) / df_resid
    if k_slopes > 0:
        if ssr > 0:
            f_stat = ((tss - ssr) / k_slopes) / (ssr / df_resid)
            f_stat = max(f_stat, 0.0)
            f_p = f_sf(f_stat, k_slopes, df_resid)
        else:
            f_stat, f_p = float("inf"), 0.0
    else:
        f_stat, f_p = float("nan"), float("nan")
    return OLSResult(names, params, bse, tvalues, pvalues, cov, resid, n, df_resid, ssr,
                     r2, adj, f_stat, f_p, robust)


def normal_equations(y, X) -> np.ndarray:
    """Reference solution of X'X b = X'y (for testing on well-conditioned data)."""
    X = np.asarray(X, dtype=float)
    return np.linalg.solve(X.T @ X, X.T @ np.asarray(y, dtype=float))
