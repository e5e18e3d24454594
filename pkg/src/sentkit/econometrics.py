"""Local-projection IRFs and geometric-curve fitting.

The estimation chain: per-horizon regressions of future (or cumulative
future) returns on today's shock with Newey-West errors, then a two-
parameter geometric curve fitted to the stacked IRF by GMM, WLS, or
box-constrained NLS.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InsufficientOverlap,
    MisalignedIndex,
    SchemaViolation,
    WindowTooLong,
)
from .regression import RegressionResult, ols_hac  # noqa: F401  (re-exported)
from .series import MonthlySeries, ShockSeries, month_label
from .structural import IRF_CONVENTIONS, half_life

FIT_METHODS = ("gmm", "wls", "nls-constrained")

# Condition-number ceiling beyond which the GMM weighting falls back to
# diagonal; short-sample 4x4 HAC covariances are often near-singular.
GMM_CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class IrfEstimate:
    """Stacked local-projection IRF across horizons.

    betas are in the return units of the input series per 1 s.d. of shock
    (``units`` records which); covariance is across horizons, block-diagonal
    from per-horizon HAC variances unless the joint moving-block option was
    used.
    """

    horizons: tuple[int, ...]
    betas: np.ndarray
    ses: np.ndarray
    covariance: np.ndarray
    shock_id: str = "eps"
    mode: str = "level"
    nobs: tuple[int, ...] = ()
    units: str = "decimal"

    def __post_init__(self):
        h = np.asarray(self.horizons)
        if len(h) == 0 or np.any(np.diff(h) <= 0):
            raise SchemaViolation("horizons must be strictly increasing")
        if np.any(np.asarray(self.ses) < 0):
            raise SchemaViolation("standard errors must be nonnegative")
        cov = np.asarray(self.covariance, dtype=float)
        if cov.shape != (len(h), len(h)):
            raise SchemaViolation("covariance not conformable with horizons")


@dataclass(frozen=True)
class GeometricFit:
    """Two-parameter geometric fit to an IRF.

    kappa is in the units of the fitted betas (see ``units``; kappa_bps
    converts). objective is the J-statistic for gmm and the weighted SSE
    otherwise; dof = #horizons - 2. kappa_var / rho_var are minimum-distance
    sandwich variances when the source IRF carried a covariance.
    """

    kappa: float
    rho: float
    half_life: float
    objective: float
    dof: int
    r_squared: float
    method: str
    convention: str
    units: str = "decimal"
    flags: tuple[str, ...] = field(default=())
    kappa_var: float | None = None
    rho_var: float | None = None

    @property
    def kappa_bps(self) -> float:
        return self.kappa * 1e4 if self.units == "decimal" else self.kappa


# ---------------------------------------------------------------------------
# local projections
# ---------------------------------------------------------------------------

def local_projection_irf(
    shocks: ShockSeries,
    returns: MonthlySeries,
    horizons,
    controls: np.ndarray | None = None,
    mode: str = "level",
    min_obs: int = 30,
    cross_cov: str = "diagonal",
    block_len: int = 12,
    joint_draws: int = 200,
    seed=0,
    shock_id: str = "eps",
) -> IrfEstimate:
    """Per-horizon regressions of future returns on today's shock.

    ``level`` mode regresses the single month-(t+h) return on the shock
    observed at t; ``cumulative`` regresses the sum of the h returns after
    t. Each horizon uses HAC truncation lag h-1 (overlap-robust). The
    cross-horizon covariance is diagonal from the per-horizon HAC variances
    by default; ``cross_cov="moving-block"`` estimates the full matrix by a
    joint moving-block bootstrap over formation months.

    ``controls`` is an optional matrix with one row per shock observation
    (aligned with ``shocks``); a constant is always included.
    """
    if mode not in ("level", "cumulative"):
        raise SchemaViolation(f"unknown LP mode {mode!r}")
    horizons = tuple(int(h) for h in horizons)
    if any(h < 1 for h in horizons):
        raise SchemaViolation("LP horizons must be >= 1")

    s0 = shocks.start_code
    r0 = returns.start_code
    eps = np.asarray(shocks.eps, dtype=float)
    r = np.asarray(returns.values, dtype=float)
    if controls is not None:
        controls = np.asarray(controls, dtype=float)
        if controls.ndim == 1:
            controls = controls[:, None]
        if len(controls) != len(eps):
            raise MisalignedIndex("controls must have one row per shock observation")

    s_last = s0 + len(eps) - 1
    r_last = r0 + len(r) - 1

    betas, ses, variances, nobs = [], [], [], []
    usable_index = {}
    for h in horizons:
        if mode == "level":
            lo = max(s0, r0 - h)
        else:
            lo = max(s0, r0 - 1)
        hi = min(s_last, r_last - h)
        n = hi - lo + 1
        if n <= 0:
            raise MisalignedIndex(
                f"shock months [{month_label(s0)}..{month_label(s_last)}] and return months "
                f"[{month_label(r0)}..{month_label(r_last)}] leave no usable sample at h={h}"
            )
        if n < min_obs:
            raise InsufficientOverlap(f"horizon {h}: {n} usable observations < {min_obs}")

        t = np.arange(lo, hi + 1)
        si = t - s0
        if mode == "level":
            y = r[t + h - r0]
        else:
            csum = np.concatenate([[0.0], np.cumsum(r)])
            a = t + 1 - r0
            y = csum[a + h] - csum[a]
        x = eps[si]
        cols = [np.ones_like(x), x]
        if controls is not None:
            cols.append(controls[si])
        X = np.column_stack(cols)
        res = ols_hac(y, X, lag=h - 1)
        betas.append(res.coefficients[1])
        variances.append(res.covariance[1, 1])
        ses.append(np.sqrt(max(res.covariance[1, 1], 0.0)))
        nobs.append(n)
        usable_index[h] = (lo, hi)

    betas = np.array(betas)
    ses = np.array(ses)

    if cross_cov == "moving-block":
        cov = _joint_block_covariance(
            eps, r, controls, horizons, mode, s0, r0, usable_index,
            block_len=block_len, B=joint_draws, seed=seed,
        )
    elif cross_cov == "diagonal":
        cov = np.diag(variances)
    else:
        raise SchemaViolation(f"unknown cross_cov option {cross_cov!r}")

    return IrfEstimate(
        horizons=horizons,
        betas=betas,
        ses=ses,
        covariance=cov,
        shock_id=shock_id,
        mode=mode,
        nobs=tuple(nobs),
    )


def _joint_block_covariance(eps, r, controls, horizons, mode, s0, r0, usable_index,
                            block_len, B, seed):
    """Moving-block bootstrap covariance of the stacked LP betas.

    Formation months common to all horizons are resampled in overlapping
    blocks; each draw reruns every per-horizon regression on the resampled
    rows. Only the point coefficients are needed, so plain OLS suffices.
    """
    lo = max(v[0] for v in usable_index.values())
    hi = min(v[1] for v in usable_index.values())
    t = np.arange(lo, hi + 1)
    n = len(t)
    ell = min(block_len, n)
    csum = np.concatenate([[0.0], np.cumsum(r)])

    ys = []
    for h in horizons:
        if mode == "level":
            ys.append(r[t + h - r0])
        else:
            a = t + 1 - r0
            ys.append(csum[a + h] - csum[a])
    x = eps[t - s0]
    extra = controls[t - s0] if controls is not None else None

    rng = np.random.default_rng(seed)
    n_blocks = int(np.ceil(n / ell))
    draws = np.empty((B, len(horizons)))
    for b in range(B):
        starts = rng.integers(0, n - ell + 1, size=n_blocks)
        idx = (starts[:, None] + np.arange(ell)[None, :]).ravel()[:n]
        cols = [np.ones(n), x[idx]]
        if extra is not None:
            cols.append(extra[idx])
        X = np.column_stack(cols)
        coef, *_ = np.linalg.lstsq(X, np.column_stack([y[idx] for y in ys]), rcond=None)
        draws[b] = coef[1]
    return np.cov(draws, rowvar=False)


# ---------------------------------------------------------------------------
# geometric fitting
# ---------------------------------------------------------------------------

def _curve(rho: float, h: np.ndarray, convention: str) -> np.ndarray:
    if convention == "level-h":
        return rho ** h
    if convention == "level-h-minus-1":
        return rho ** (h - 1)
    if rho == 1.0:
        return h.astype(float)
    return (1.0 - rho ** h) / (1.0 - rho)


def _curve_drho(rho: float, h: np.ndarray, convention: str) -> np.ndarray:
    if convention == "level-h":
        return h * rho ** (h - 1)
    if convention == "level-h-minus-1":
        return (h - 1) * rho ** np.maximum(h - 2, 0)
    one = 1.0 - rho
    return (-h * rho ** (h - 1) * one + (1.0 - rho ** h)) / (one * one)


def profile_kappa(betas: np.ndarray, g: np.ndarray, W: np.ndarray) -> float:
    """Closed-form kappa minimizing (beta - kappa g)' W (beta - kappa g)."""
    denom = g @ W @ g
    if denom <= 0:
        return 0.0
    return float(g @ W @ betas / denom)


def _golden_min(f, lo, hi, xtol=1e-12):
    """Golden-section minimization on [lo, hi]."""
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > xtol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (a + b) / 2.0


def fit_geometric(
    irf: IrfEstimate,
    method: str = "wls",
    convention: str = "level-h-minus-1",
    rho_bounds: tuple[float, float] = (0.001, 0.999),
    grid_points: int = 512,
    compute_variance: bool = True,
) -> GeometricFit:
    """Fit kappa * (geometric decay in rho) to a stacked IRF.

    Methods
    -------
    gmm              minimize m' Sigma^-1 m, m = betas - kappa g(rho); falls
                     back to diagonal weights (flagged) when Sigma's
                     condition number exceeds 1e12. objective = J-statistic.
    wls              diagonal weights w_h = Var(beta_h)^-1.
    nls-constrained  unweighted SSE with kappa >= 0 and rho inside the box.

    kappa is profiled out analytically given rho (the objective is linear in
    kappa), then rho is found by golden-section search seeded by a
    ``grid_points``-point grid over ``rho_bounds``. dof = #horizons - 2;
    fit R^2 is computed on the beta vector, unweighted.
    """
    if method not in FIT_METHODS:
        raise SchemaViolation(f"unknown fit method {method!r}")
    if convention not in IRF_CONVENTIONS:
        raise SchemaViolation(f"unknown IRF convention {convention!r}")
    h = np.asarray(irf.horizons, dtype=float)
    if len(h) < 3:
        raise SchemaViolation(f"geometric fit needs >= 3 horizons, got {len(h)}")
    betas = np.asarray(irf.betas, dtype=float)
    flags: list[str] = []

    if method == "gmm":
        sigma = np.asarray(irf.covariance, dtype=float)
        W, fallback = _gmm_weighting(sigma)
        if fallback:
            flags.append("gmm-diagonal-fallback")
    elif method == "wls":
        ses = np.asarray(irf.ses, dtype=float)
        if np.all(ses > 0):
            W = np.diag(ses ** -2.0)
        else:
            W = np.eye(len(h))
            flags.append("wls-equal-weights")
    else:
        W = np.eye(len(h))

    clamp = method == "nls-constrained"

    def kappa_at(rho: float) -> float:
        k = profile_kappa(betas, _curve(rho, h, convention), W)
        if clamp and k < 0:
            return 0.0
        return k

    def objective(rho: float) -> float:
        g = _curve(rho, h, convention)
        m = betas - kappa_at(rho) * g
        return float(m @ W @ m)

    lo, hi = rho_bounds
    grid = np.linspace(lo, hi, grid_points)
    values = np.array([objective(rho) for rho in grid])
    i = int(np.argmin(values))
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, grid_points - 1)]
    rho_hat = _golden_min(objective, a, b)
    # polish against the raw grid winner in case of a flat objective
    if objective(grid[i]) < objective(rho_hat):
        rho_hat = float(grid[i])
    kappa_hat = kappa_at(rho_hat)

    if rho_hat <= lo + 1e-9 or rho_hat >= hi - 1e-9 or (clamp and kappa_hat == 0.0):
        flags.append("boundary-solution")

    g = _curve(rho_hat, h, convention)
    resid = betas - kappa_hat * g
    sse = float(resid @ resid)
    sst = float(np.sum((betas - betas.mean()) ** 2))
    r2 = 1.0 - sse / sst if sst > 0 else (1.0 if sse == 0 else 0.0)

    kappa_var = rho_var = None
    if compute_variance:
        kappa_var, rho_var, var_flag = _sandwich_variance(
            irf, kappa_hat, rho_hat, h, convention, W
        )
        if var_flag:
            flags.append(var_flag)

    return GeometricFit(
        kappa=float(kappa_hat),
        rho=float(rho_hat),
        half_life=half_life(rho_hat),
        objective=float(objective(rho_hat)),
        dof=len(h) - 2,
        r_squared=r2,
        method=method,
        convention=convention,
        units=irf.units,
        flags=tuple(flags),
        kappa_var=kappa_var,
        rho_var=rho_var,
    )


def _gmm_weighting(sigma: np.ndarray):
    """Inverse covariance, or diagonal fallback when near-singular."""
    diag = np.diag(sigma)
    try:
        cond = np.linalg.cond(sigma)
    except np.linalg.LinAlgError:
        cond = np.inf
    if np.isfinite(cond) and cond <= GMM_CONDITION_LIMIT:
        return np.linalg.inv(sigma), False
    safe = np.where(diag > 0, diag, 1.0)
    return np.diag(1.0 / safe), True


def _sandwich_variance(irf, kappa, rho, h, convention, W):
    """Minimum-distance variances of (kappa, rho).

    Var(theta) = (D'WD)^-1 D'W Sigma W D (D'WD)^-1 with D the Jacobian of
    kappa*g(rho). Returns (kappa_var, rho_var, flag).
    """
    sigma = np.asarray(irf.covariance, dtype=float)
    g = _curve(rho, h, convention)
    dg = _curve_drho(rho, h, convention)
    D = np.column_stack([g, kappa * dg])
    bread = D.T @ W @ D
    if np.linalg.matrix_rank(bread) < 2:
        return None, None, "variance-singular"
    bread_inv = np.linalg.inv(bread)
    meat = D.T @ W @ sigma @ W @ D
    V = bread_inv @ meat @ bread_inv
    return float(max(V[0, 0], 0.0)), float(max(V[1, 1], 0.0)), None


# ---------------------------------------------------------------------------
# rolling fits
# ---------------------------------------------------------------------------

def rolling_fit(
    shocks: ShockSeries,
    returns: MonthlySeries,
    window: int = 60,
    step: int = 1,
    horizons=(1, 3, 6, 12),
    method: str = "wls",
    convention: str = "level-h-minus-1",
    mode: str = "level",
) -> list[tuple[str, GeometricFit]]:
    """Geometric fits over rolling windows of formation months.

    Window i covers formation months [start+i, start+i+window-1] and needs
    returns through the window end plus the longest horizon; with step 1
    the window count is T - window - max(h) + 1 for level mode (T = number
    of return months).
    """
    horizons = tuple(int(h) for h in horizons)
    max_h = max(horizons)
    T = len(returns)
    if T < window + max_h:
        raise WindowTooLong(f"need T >= window + max horizon = {window + max_h}, got {T}")

    r0 = returns.start_code
    out = []
    i = 0
    while i + window + max_h <= T:
        f_lo = r0 + i
        f_hi = f_lo + window - 1
        sub_shocks = _slice_shocks(shocks, f_lo, f_hi)
        sub_returns = _slice_series(returns, f_lo, f_hi + max_h)
        irf = local_projection_irf(
            sub_shocks, sub_returns, horizons, mode=mode, min_obs=min(30, window)
        )
        fit = fit_geometric(irf, method=method, convention=convention)
        out.append((month_label(f_lo), fit))
        i += step
    return out


def _slice_shocks(shocks: ShockSeries, lo: int, hi: int) -> ShockSeries:
    a = max(lo - shocks.start_code, 0)
    b = min(hi - shocks.start_code + 1, len(shocks.eps))
    return ShockSeries(month_label(shocks.start_code + a), shocks.eps[a:b], shocks.flipped)


def _slice_series(series: MonthlySeries, lo: int, hi: int) -> MonthlySeries:
    a = max(lo - series.start_code, 0)
    b = min(hi - series.start_code + 1, len(series.values))
    return MonthlySeries(month_label(series.start_code + a), series.values[a:b])
