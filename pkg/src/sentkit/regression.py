"""OLS with Bartlett-kernel (Newey-West) HAC covariance.

Kept dependency-free of the series containers so that both the shock
construction chain and the local-projection machinery can use it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LagNegative, RankDeficient


@dataclass(frozen=True)
class RegressionResult:
    """OLS result with HAC covariance.

    Attributes
    ----------
    coefficients : np.ndarray, shape (k,)
        Point estimates, units of y per unit of x.
    covariance : np.ndarray, shape (k, k)
        Bartlett-kernel HAC sandwich at ``lag_used``; lag 0 collapses to the
        heteroskedasticity-robust (no-kernel) covariance.
    nobs : int
    r_squared : float
    lag_used : int
    """

    coefficients: np.ndarray
    covariance: np.ndarray
    nobs: int
    r_squared: float
    lag_used: int

    @property
    def standard_errors(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))


def bartlett_weight(j: int, lag: int) -> float:
    """Bartlett kernel weight 1 - j/(lag+1) for autocovariance order j."""
    return 1.0 - j / (lag + 1.0)


def ols_hac(y: np.ndarray, X: np.ndarray, lag: int) -> RegressionResult:
    """OLS point estimates with Newey-West HAC covariance.

    Parameters
    ----------
    y : (n,) response vector.
    X : (n, k) design matrix, full column rank, n > k.
    lag : Bartlett truncation lag; 0 gives the heteroskedasticity-robust
        covariance.

    Notes
    -----
    The meat is S = sum_t u_t^2 x_t x_t'
    + sum_{j=1}^{lag} w_j sum_t (u_t x_t)(u_{t-j} x_{t-j})' + transpose,
    with w_j = 1 - j/(lag+1); the sandwich is (X'X)^{-1} S (X'X)^{-1}.
    No small-sample degree-of-freedom scaling is applied.
    """
    if lag < 0:
        raise LagNegative(f"HAC lag must be >= 0, got {lag}")
    y = np.asarray(y, dtype=float).ravel()
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, k = X.shape
    if len(y) != n:
        raise RankDeficient(f"X has {n} rows but y has {len(y)}")
    if n <= k:
        raise RankDeficient(f"need more observations ({n}) than regressors ({k})")

    xtx = X.T @ X
    rank = np.linalg.matrix_rank(xtx, hermitian=True)
    if rank < k:
        raise RankDeficient(f"design matrix has rank {rank} < {k}")
    bread = np.linalg.inv(xtx)

    beta = bread @ (X.T @ y)
    u = y - X @ beta

    Z = X * u[:, None]  # scores
    S = Z.T @ Z
    for j in range(1, min(lag, n - 1) + 1):
        gamma = Z[j:].T @ Z[:-j]
        S += bartlett_weight(j, lag) * (gamma + gamma.T)
    cov = bread @ S @ bread
    cov = 0.5 * (cov + cov.T)

    sst = float(np.sum((y - np.mean(y)) ** 2))
    ssr = float(u @ u)
    r2 = 1.0 - ssr / sst if sst > 0 else (1.0 if ssr == 0 else 0.0)

    return RegressionResult(
        coefficients=beta,
        covariance=cov,
        nobs=n,
        r_squared=r2,
        lag_used=lag,
    )


def hac_long_run_variance(g: np.ndarray, lag: int) -> float:
    """Bartlett long-run variance of a scalar sequence (demeaned first).

    Returns gamma_0 + 2 * sum_j w_j gamma_j with gamma_j = (1/n) sum g_t g_{t-j};
    Var(mean(g)) is approximately this divided by n.
    """
    if lag < 0:
        raise LagNegative(f"HAC lag must be >= 0, got {lag}")
    g = np.asarray(g, dtype=float).ravel()
    g = g - g.mean()
    n = len(g)
    lrv = float(g @ g) / n
    for j in range(1, min(lag, n - 1) + 1):
        gamma = float(g[j:] @ g[:-j]) / n
        lrv += 2.0 * bartlett_weight(j, lag) * gamma
    return max(lrv, 0.0)
