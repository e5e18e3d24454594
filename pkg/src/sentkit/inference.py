"""Resampling and multiple-testing machinery.

Moving-block / parametric / time-block / wild-cluster bootstraps, grouped
jackknife, Fisher-z boundary intervals, Holm and Romano-Wolf adjustments,
and the falsification tests (lead-lag, within-bin permutation).

All resamplers are deterministic given (seed, B) and use percentile
intervals throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import stats

from .econometrics import GeometricFit, IrfEstimate, fit_geometric
from .errors import (
    BlockTooLong,
    DrawOutOfRange,
    EmptyBin,
    MisalignedIndex,
    PvalOutOfRange,
    SchemaViolation,
    TooFewFirms,
)
from .panel import _codes, _frame, cluster_meat, within_demean
from .regression import ols_hac
from .series import MonthlySeries, ShockSeries
from .structural import RHO_INFINITY_CUTOFF, half_life


# =========================================================================
# containers
# =========================================================================

@dataclass(frozen=True)
class BootstrapSpec:
    scheme: str = "moving-block"
    block_len: int = 12
    B: int = 1000
    seed: int | None = 0
    cluster: str | None = None

    def __post_init__(self):
        if self.B < 1:
            raise SchemaViolation("bootstrap needs B >= 1")
        if self.block_len < 1:
            raise SchemaViolation("block length must be >= 1")


@dataclass(frozen=True)
class IntervalEstimate:
    """Point and percentile interval; boundary_flag marks an upper bound
    censored at infinity."""

    point: float
    lower: float
    upper: float
    level: float = 0.95
    boundary_flag: bool = False


@dataclass(frozen=True)
class PvalFamily:
    labels: tuple[str, ...]
    t_stats: np.ndarray
    raw_p: np.ndarray
    adjusted_p: dict[str, np.ndarray]
    flags: tuple[str, ...] = field(default=())


# =========================================================================
# moving-block bootstrap
# =========================================================================

def _block_index_matrix(rng, T: int, block_len: int, B: int) -> np.ndarray:
    """(B, T) index rows: overlapping blocks, no wrap, tail truncated."""
    n_blocks = int(math.ceil(T / block_len))
    starts = rng.integers(0, T - block_len + 1, size=(B, n_blocks))
    offsets = np.arange(block_len)
    idx = (starts[:, :, None] + offsets[None, None, :]).reshape(B, -1)
    return idx[:, :T]


def _series_values(data):
    if isinstance(data, MonthlySeries):
        return np.asarray(data.values, dtype=float)
    if isinstance(data, ShockSeries):
        return np.asarray(data.eps, dtype=float)
    return np.asarray(data, dtype=float)


def moving_block_bootstrap(data, statistic, spec: BootstrapSpec,
                           level: float = 0.95):
    """Percentile CI from overlapping-block resampling of aligned series.

    ``data`` is a single series/vector or a dict of equally long vectors
    (resampled with the same indices); ``statistic`` maps the (re)sampled
    data to a scalar. Returns (IntervalEstimate, draws).
    """
    if isinstance(data, dict):
        arrays = {k: _series_values(v) for k, v in data.items()}
        lengths = {len(v) for v in arrays.values()}
        if len(lengths) != 1:
            raise MisalignedIndex("bootstrap series must be equally long")
        T = lengths.pop()

        def take(idx):
            return {k: v[idx] for k, v in arrays.items()}

        original = arrays
    else:
        values = _series_values(data)
        T = len(values)

        def take(idx):
            return values[idx]

        original = values

    if spec.block_len > T:
        raise BlockTooLong(f"block length {spec.block_len} exceeds T={T}")

    rng = np.random.default_rng(spec.seed)
    idx = _block_index_matrix(rng, T, spec.block_len, spec.B)
    draws = np.array([statistic(take(idx[b])) for b in range(spec.B)], dtype=float)

    point = float(statistic(original))
    alpha = (1.0 - level) / 2.0
    lo, hi = np.percentile(np.sort(draws), [100 * alpha, 100 * (1 - alpha)])
    return IntervalEstimate(point, float(lo), float(hi), level), draws


# =========================================================================
# parametric IRF bootstrap
# =========================================================================

@dataclass(frozen=True)
class ParametricIrfBootstrap:
    intervals: dict[str, IntervalEstimate]
    draws: dict[str, np.ndarray]
    point: GeometricFit
    flags: tuple[str, ...] = field(default=())


def parametric_irf_bootstrap(
    irf: IrfEstimate,
    B: int = 1000,
    seed=0,
    method: str = "wls",
    convention: str = "level-h-minus-1",
    level: float = 0.95,
    rho_bounds: tuple[float, float] = (0.001, 1.0 - 1e-12),
) -> ParametricIrfBootstrap:
    """Draw beta ~ N(beta_hat, Sigma_hat), refit the geometric curve per
    draw, and report percentile intervals for kappa, rho, and half-life.

    The refit box for rho deliberately extends to 1 - 1e-12 (wider than the
    point-fit default) so that draws can hit the infinity-censoring
    threshold: whenever the rho upper percentile reaches 1 - 1e-9, the
    half-life upper bound is censored at +inf and flagged. A non-PSD
    covariance is repaired by clipping its eigenvalues at zero (flagged).
    """
    flags: list[str] = []
    betas = np.asarray(irf.betas, dtype=float)
    sigma = np.asarray(irf.covariance, dtype=float)
    sigma = 0.5 * (sigma + sigma.T)
    eigvals, eigvecs = np.linalg.eigh(sigma)
    if np.any(eigvals < -1e-12 * max(float(eigvals.max(initial=0.0)), 1.0)):
        flags.append("psd-repaired")
    root = eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))

    rng = np.random.default_rng(seed)
    z = rng.standard_normal((B, len(betas)))
    beta_draws = betas[None, :] + z @ root.T

    point = fit_geometric(irf, method=method, convention=convention,
                          rho_bounds=rho_bounds, compute_variance=False)

    kappa_d = np.empty(B)
    rho_d = np.empty(B)
    for b in range(B):
        draw_irf = IrfEstimate(
            horizons=irf.horizons,
            betas=beta_draws[b],
            ses=irf.ses,
            covariance=irf.covariance,
            shock_id=irf.shock_id,
            mode=irf.mode,
            units=irf.units,
        )
        fit = fit_geometric(draw_irf, method=method, convention=convention,
                            rho_bounds=rho_bounds, compute_variance=False)
        kappa_d[b] = fit.kappa
        rho_d[b] = fit.rho
    hl_d = np.array([half_life(r) for r in rho_d])

    alpha = (1.0 - level) / 2.0
    pct = [100 * alpha, 100 * (1 - alpha)]

    k_lo, k_hi = np.percentile(kappa_d, pct)
    r_lo, r_hi = np.percentile(rho_d, pct)
    with np.errstate(invalid="ignore"):
        h_lo, h_hi = np.percentile(hl_d, pct)
    # interpolating between two +inf order statistics yields nan; that
    # quantile is itself infinite
    h_lo = math.inf if math.isnan(h_lo) else h_lo
    h_hi = math.inf if math.isnan(h_hi) else h_hi

    censored = bool(r_hi >= RHO_INFINITY_CUTOFF)
    intervals = {
        "kappa": IntervalEstimate(point.kappa, float(k_lo), float(k_hi), level),
        "rho": IntervalEstimate(point.rho, float(r_lo), float(r_hi), level),
        "half_life": IntervalEstimate(
            point.half_life,
            float(h_lo),
            math.inf if censored else float(h_hi),
            level,
            boundary_flag=censored,
        ),
    }
    draws = {"kappa": kappa_d, "rho": rho_d, "half_life": hl_d}
    return ParametricIrfBootstrap(intervals=intervals, draws=draws,
                                  point=point, flags=tuple(flags))


# =========================================================================
# Fisher-z intervals
# =========================================================================

def fisher_z(rho: float) -> float:
    """z = 0.5 * log((1+rho)/(1-rho))."""
    return 0.5 * math.log((1.0 + rho) / (1.0 - rho))


def fisher_z_ci(rho_draws, level: float = 0.95) -> IntervalEstimate:
    """Percentile CI computed on the z scale, mapped back through tanh and
    truncated into (0, 1). Draws must lie in (-1, 1)."""
    draws = np.asarray(rho_draws, dtype=float)
    if np.any(draws <= -1.0) or np.any(draws >= 1.0) or not np.all(np.isfinite(draws)):
        raise DrawOutOfRange("rho draws must lie strictly inside (-1, 1)")
    z = np.arctanh(draws)
    alpha = (1.0 - level) / 2.0
    z_lo, z_hi = np.percentile(z, [100 * alpha, 100 * (1 - alpha)])
    tiny = 1e-12
    lo = min(max(math.tanh(z_lo), tiny), 1.0 - tiny)
    hi = min(max(math.tanh(z_hi), tiny), 1.0 - tiny)
    point = min(max(math.tanh(float(np.median(z))), tiny), 1.0 - tiny)
    return IntervalEstimate(point, lo, hi, level)


# =========================================================================
# Holm adjustment
# =========================================================================

def holm_adjust(raw_p) -> np.ndarray:
    """Holm stepdown: sort ascending, multiply p_(j) by (m - j + 1), enforce
    the running max, cap at 1, restore input order."""
    p = np.asarray(raw_p, dtype=float)
    if np.any(p < 0) or np.any(p > 1) or not np.all(np.isfinite(p)):
        raise PvalOutOfRange("p-values must lie in [0, 1]")
    m = len(p)
    order = np.argsort(p, kind="stable")
    adj = np.empty(m)
    running = 0.0
    for j, idx in enumerate(order):
        running = max(running, min(1.0, p[idx] * (m - j)))
        adj[idx] = running
    return adj


# =========================================================================
# Romano-Wolf stepdown (wild cluster bootstrap)
# =========================================================================

@dataclass(frozen=True)
class RwHypothesis:
    """One member of a testing family: a regression and its tested column."""

    label: str
    depvar: str
    regressors: tuple[str, ...]
    tested: str

    def __post_init__(self):
        if self.tested not in self.regressors:
            raise SchemaViolation(f"tested column {self.tested!r} not among regressors")


def romano_wolf_stepdown(
    panel,
    hypotheses: list[RwHypothesis],
    B: int = 1000,
    seed=0,
    fixed_effects: tuple[str, ...] = ("firm_id", "month_code"),
    cluster: str = "month_code",
    demean_tol: float = 1e-10,
) -> PvalFamily:
    """Stepdown familywise-adjusted p-values via a wild cluster bootstrap.

    For each hypothesis the full model gives a cluster-robust t-statistic.
    Null data are generated from the restricted model (tested column
    removed): its residuals get Rademacher sign flips drawn once per
    (cluster, draw) and shared across the family, the full model is refit,
    and the stepdown records the maximal |t*| across not-yet-rejected
    hypotheses. Adjusted p_(j) = share of draws with max_{k>=j} |t*_k| >=
    |t_(j)|, made monotone along the sorted order.

    Fewer than 8 clusters flags (not fails) the family as unreliable.
    """
    df = _frame(panel)
    if cluster not in df.columns:
        raise SchemaViolation(f"cluster column {cluster!r} not in panel")
    cl_codes = _codes(df[cluster])
    G = int(cl_codes.max()) + 1
    fe_codes = [_codes(df[c]) for c in fixed_effects]

    rng = np.random.default_rng(seed)
    signs = rng.choice([-1.0, 1.0], size=(G, B))
    sign_rows = signs[cl_codes]  # (n, B)

    J = len(hypotheses)
    t_obs = np.empty(J)
    t_star = np.empty((J, B))

    for j, hyp in enumerate(hypotheses):
        for col in (hyp.depvar, *hyp.regressors):
            if col not in df.columns:
                raise SchemaViolation(f"column {col!r} not in panel")
        y_raw = df[hyp.depvar].to_numpy(dtype=float)
        X_raw = df[list(hyp.regressors)].to_numpy(dtype=float)
        stacked = within_demean(np.column_stack([y_raw, X_raw]), fe_codes, tol=demean_tol)
        y = stacked[:, 0]
        X = stacked[:, 1:]
        k = X.shape[1]
        jt = hyp.regressors.index(hyp.tested)

        bread = np.linalg.inv(X.T @ X)
        beta = bread @ (X.T @ y)
        u = y - X @ beta
        meat = cluster_meat(X, u, cl_codes)
        se = math.sqrt(max((bread @ meat @ bread)[jt, jt], 0.0))
        t_obs[j] = beta[jt] / se if se > 0 else 0.0

        keep = [c for c in range(k) if c != jt]
        if keep:
            Xr = X[:, keep]
            beta_r = np.linalg.lstsq(Xr, y, rcond=None)[0]
            fitted = Xr @ beta_r
        else:
            fitted = np.zeros_like(y)
        e = y - fitted

        flipped = e[:, None] * sign_rows
        flipped = within_demean(flipped, fe_codes, tol=demean_tol)
        Ystar = fitted[:, None] + flipped
        Bstar = bread @ (X.T @ Ystar)  # (k, B)
        Ustar = Ystar - X @ Bstar
        z = X @ bread[:, jt]  # scores contracting to the tested coefficient
        q = np.zeros((G, B))
        np.add.at(q, cl_codes, z[:, None] * Ustar)
        var_star = (q * q).sum(axis=0)
        bad = var_star <= 0
        var_star[bad] = np.inf
        t_star[j] = Bstar[jt] / np.sqrt(var_star)

    abs_t = np.abs(t_obs)
    abs_star = np.abs(t_star)
    order = np.argsort(-abs_t, kind="stable")
    raw_p = (abs_star >= abs_t[:, None]).mean(axis=1)

    adjusted = np.empty(J)
    running = 0.0
    for r, j in enumerate(order):
        pool_max = abs_star[order[r:]].max(axis=0)
        share = float((pool_max >= abs_t[j]).mean())
        running = max(running, share)
        adjusted[j] = running

    flags = () if G >= 8 else ("too-few-clusters",)
    return PvalFamily(
        labels=tuple(h.label for h in hypotheses),
        t_stats=t_obs,
        raw_p=raw_p,
        adjusted_p={"rw": adjusted},
        flags=flags,
    )


# =========================================================================
# grouped jackknife and time-block bootstrap
# =========================================================================

def jackknife_se(panel, estimator, n_folds: int = 10, seed=0) -> np.ndarray:
    """Delete-one-group jackknife over firm folds.

    Firms are shuffled by the seed and chunked into ``n_folds`` near-equal
    folds; SE = sqrt((G-1)/G * sum_g (theta_(g) - theta_bar)^2) per
    coefficient.
    """
    df = _frame(panel)
    firms = np.asarray(sorted(pd.unique(df["firm_id"])))
    if len(firms) < n_folds:
        raise TooFewFirms(f"{len(firms)} firms cannot fill {n_folds} folds")
    rng = np.random.default_rng(seed)
    shuffled = firms[rng.permutation(len(firms))]
    folds = np.array_split(shuffled, n_folds)

    thetas = []
    for fold in folds:
        sub = df[~df["firm_id"].isin(fold)]
        thetas.append(np.atleast_1d(np.asarray(estimator(sub), dtype=float)))
    theta = np.vstack(thetas)
    G = n_folds
    dev = theta - theta.mean(axis=0, keepdims=True)
    return np.sqrt((G - 1) / G * (dev * dev).sum(axis=0))


@dataclass(frozen=True)
class TimeBlockResult:
    mean: np.ndarray
    sd: np.ndarray
    draws: np.ndarray


def time_block_bootstrap(panel, estimator, block_len: int = 6, B: int = 500,
                         seed=0) -> TimeBlockResult:
    """Resample months in contiguous blocks; all firms' rows for a sampled
    month move together. Sampled months are relabeled by draw position so
    repeated months act as distinct time clusters. block_len = T makes every
    draw the original sample (s.d. exactly 0)."""
    df = _frame(panel)
    if "month_code" not in df.columns:
        raise SchemaViolation("panel needs a month_code column (run validate_panel)")
    months = np.asarray(sorted(pd.unique(df["month_code"])))
    T = len(months)
    if block_len > T:
        raise BlockTooLong(f"block length {block_len} exceeds {T} months")

    pos_of_month = {m: i for i, m in enumerate(months)}
    row_pos = df["month_code"].map(pos_of_month).to_numpy()
    rows_by_month = [np.flatnonzero(row_pos == i) for i in range(T)]

    rng = np.random.default_rng(seed)
    idx_matrix = _block_index_matrix(rng, T, block_len, B)

    thetas = []
    for b in range(B):
        picked = idx_matrix[b]
        rows = np.concatenate([rows_by_month[i] for i in picked])
        sub = df.iloc[rows].copy()
        relabel = np.repeat(np.arange(T), [len(rows_by_month[i]) for i in picked])
        sub["month_code"] = relabel
        thetas.append(np.atleast_1d(np.asarray(estimator(sub), dtype=float)))
    draws = np.vstack(thetas)
    return TimeBlockResult(mean=draws.mean(axis=0), sd=draws.std(axis=0, ddof=1),
                           draws=draws)


# =========================================================================
# falsification tests
# =========================================================================

@dataclass(frozen=True)
class LeadLagResult:
    horizons: tuple[int, ...]
    coefficients: np.ndarray
    ses: np.ndarray
    t_stats: np.ndarray
    p_values: np.ndarray


def lead_lag_test(shocks: ShockSeries, returns: MonthlySeries, horizons=(1, 3, 6, 12)) -> LeadLagResult:
    """Do next month's shocks 'predict' past returns? They should not.

    For each horizon h the trailing h-month cumulative return ending at t is
    regressed on the shock observed at t+1, with HAC truncation h-1;
    p-values are two-sided normal.
    """
    s0 = shocks.start_code
    r0 = returns.start_code
    eps = np.asarray(shocks.eps, dtype=float)
    r = np.asarray(returns.values, dtype=float)
    s_last = s0 + len(eps) - 1
    r_last = r0 + len(r) - 1
    csum = np.concatenate([[0.0], np.cumsum(r)])

    coefs, ses, ts, ps = [], [], [], []
    for h in horizons:
        # need returns t-h+1..t and the shock at t+1
        lo = max(r0 + h - 1, s0 - 1)
        hi = min(r_last, s_last - 1)
        if hi < lo:
            raise MisalignedIndex(f"no usable sample at horizon {h}")
        t = np.arange(lo, hi + 1)
        a = t - h + 1 - r0
        y = csum[a + h] - csum[a]
        x = eps[t + 1 - s0]
        res = ols_hac(y, np.column_stack([np.ones_like(x), x]), lag=h - 1)
        c = float(res.coefficients[1])
        se = float(np.sqrt(res.covariance[1, 1]))
        tval = c / se if se > 0 else 0.0
        coefs.append(c)
        ses.append(se)
        ts.append(tval)
        ps.append(2.0 * float(stats.norm.sf(abs(tval))))
    return LeadLagResult(tuple(int(h) for h in horizons), np.array(coefs),
                         np.array(ses), np.array(ts), np.array(ps))


@dataclass(frozen=True)
class PermutationResult:
    p: float
    statistic: float
    draws: np.ndarray
    bins_used: int


def _bin_labels(shocks: ShockSeries, bins) -> np.ndarray:
    codes = shocks.month_codes()
    if isinstance(bins, str):
        if bins == "year-month":
            return codes.copy()
        if bins == "year":
            return codes // 12
        raise SchemaViolation(f"unknown bin key {bins!r}")
    labels = np.asarray(bins)
    if len(labels) != len(codes):
        raise EmptyBin("bin labels must cover every shock observation")
    if pd.isna(labels).any():
        raise EmptyBin("bin labels contain missing values")
    return labels


def permutation_falsification(
    shocks: ShockSeries,
    returns: MonthlySeries | None = None,
    bins="year-month",
    B: int = 999,
    seed=0,
    statistic=None,
) -> PermutationResult:
    """Within-bin permutation test of the shock-return relation.

    Shocks are shuffled within bins (the bin multisets are preserved
    exactly); the default statistic is the slope of the month-(t+1) return
    on the month-t shock. With one observation per bin ('year-month' on a
    monthly series) every permutation is the identity and p = 1. p = share
    of |stat*| >= |stat|.
    """
    labels = _bin_labels(shocks, bins)
    eps = np.asarray(shocks.eps, dtype=float)

    if statistic is None:
        if returns is None:
            raise SchemaViolation("default statistic needs a return series")
        s0 = shocks.start_code
        r0 = returns.start_code
        r = np.asarray(returns.values, dtype=float)
        lo = max(s0, r0 - 1)
        hi = min(s0 + len(eps) - 1, r0 + len(r) - 2)
        if hi < lo:
            raise MisalignedIndex("shock and return months do not overlap")
        si = np.arange(lo - s0, hi - s0 + 1)
        y = r[np.arange(lo + 1 - r0, hi + 2 - r0)]
        y_c = y - y.mean()

        def statistic(e):
            x = e[si]
            x = x - x.mean()
            denom = float(x @ x)
            return float(x @ y_c) / denom if denom > 0 else 0.0

    obs = float(statistic(eps))

    rng = np.random.default_rng(seed)
    perms = np.tile(np.arange(len(eps)), (B, 1))
    for lab in np.unique(labels):
        members = np.flatnonzero(labels == lab)
        if len(members) < 2:
            continue
        block = np.tile(members, (B, 1))
        block = rng.permuted(block, axis=1)
        perms[:, members] = block

    draws = np.empty(B)
    for b in range(B):
        draws[b] = statistic(eps[perms[b]])

    p = float((np.abs(draws) >= abs(obs)).mean())
    return PermutationResult(p=p, statistic=obs, draws=draws,
                             bins_used=int(len(np.unique(labels))))
