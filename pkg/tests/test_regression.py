"""HAC regression oracle tests.

The reference values come from writing the sandwich out longhand on tiny
fixed datasets, so any change to weighting, demeaning, or the df policy
shows up as an exact mismatch.
"""
import numpy as np
import pytest

from sentkit import bartlett_weight, hac_long_run_variance, ols_hac
from sentkit.errors import LagNegative, RankDeficient


def _hand_hac(y, X, lag):
    """Straight-from-the-definition HAC sandwich, O(T^2) and proud of it."""
    n, k = X.shape
    beta = np.linalg.solve(X.T @ X, X.T @ y)
    u = y - X @ beta
    S = np.zeros((k, k))
    for t in range(n):
        for s in range(n):
            j = abs(t - s)
            if j > lag:
                continue
            w = 1.0 - j / (lag + 1)
            S += w * u[t] * u[s] * np.outer(X[t], X[s])
    bread = np.linalg.inv(X.T @ X)
    return beta, bread @ S @ bread


@pytest.mark.parametrize("lag", [0, 1, 3, 7])
def test_ols_hac_matches_double_sum(lag):
    rng = np.random.default_rng(5)
    n = 60
    X = np.column_stack([np.ones(n), rng.normal(size=n), rng.normal(size=n)])
    y = X @ np.array([0.5, 1.2, -0.7]) + rng.normal(size=n).cumsum() * 0.1
    beta_ref, cov_ref = _hand_hac(y, X, lag)
    res = ols_hac(y, X, lag)
    np.testing.assert_allclose(res.coefficients, beta_ref, rtol=1e-10)
    np.testing.assert_allclose(res.covariance, cov_ref, rtol=1e-8)


def test_lag_zero_is_white():
    rng = np.random.default_rng(11)
    n = 80
    X = np.column_stack([np.ones(n), rng.normal(size=n)])
    y = 2.0 + 0.5 * X[:, 1] + rng.normal(size=n) * (1 + np.abs(X[:, 1]))
    res = ols_hac(y, X, lag=0)
    u = y - X @ res.coefficients
    bread = np.linalg.inv(X.T @ X)
    white = bread @ (X.T * u**2) @ X @ bread
    np.testing.assert_allclose(res.covariance, white, rtol=1e-10)


def test_bartlett_weights():
    assert bartlett_weight(0, 4) == 1.0
    assert bartlett_weight(2, 4) == pytest.approx(1 - 2 / 5)
    assert bartlett_weight(5, 4) == 0.0


def test_r_squared_centered():
    x = np.arange(10.0)
    y = 3.0 + 2.0 * x
    res = ols_hac(y, np.column_stack([np.ones(10), x]), lag=0)
    assert res.r_squared == pytest.approx(1.0)


def test_errors():
    with pytest.raises(LagNegative):
        ols_hac(np.ones(5), np.ones((5, 1)), lag=-1)
    X = np.column_stack([np.ones(10), np.ones(10)])  # collinear
    with pytest.raises(RankDeficient):
        ols_hac(np.arange(10.0), X, lag=0)


def test_long_run_variance_iid_close_to_variance():
    rng = np.random.default_rng(3)
    g = rng.normal(0, 2.0, size=20_000)
    lrv = hac_long_run_variance(g, lag=12)
    assert lrv == pytest.approx(4.0, rel=0.1)


def test_long_run_variance_ar1_oracle():
    # AR(1) with phi=0.6: long-run variance sigma^2/(1-phi)^2
    rng = np.random.default_rng(9)
    T, phi = 60_000, 0.6
    e = rng.standard_normal(T)
    g = np.empty(T)
    g[0] = e[0]
    for t in range(1, T):
        g[t] = phi * g[t - 1] + e[t]
    target = 1.0 / (1 - phi) ** 2
    lrv = hac_long_run_variance(g, lag=60)
    assert lrv == pytest.approx(target, rel=0.15)


def test_long_run_variance_never_negative():
    g = np.array([1.0, -1.0] * 30)  # strong negative autocorrelation
    assert hac_long_run_variance(g, lag=1) >= 0.0
