"""Firm-by-month panel regressions with absorbed fixed effects.

Within-transform by iterative demeaning, two-way clustered covariance in
the inclusion-exclusion form (firm + month - intersection), regime tagging
(breadth/retail terciles, VIX percentile, post-era dummies), and per-horizon
forward-return fits.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import (
    HorizonTooLong,
    MissingColumn,
    NoWithinVariation,
    SchemaViolation,
    SingularDesign,
)
from .series import ShockSeries, month_code

REQUIRED_COLUMNS = ("firm_id", "month", "ret")


def validate_panel(df: pd.DataFrame) -> pd.DataFrame:
    """Check the firm-month schema and attach an integer month code.

    Requires `firm_id,month,ret`; (firm_id, month) must be unique and ret
    finite. Months are ISO 'YYYY-MM' strings. Returns a copy sorted by
    (firm_id, month_code).
    """
    for col in REQUIRED_COLUMNS:
        if col not in df.columns:
            raise MissingColumn(f"panel is missing required column {col!r}")
    out = df.copy()
    if "month_code" not in out.columns:
        out["month_code"] = [month_code(str(m)) for m in out["month"]]
    dup = out.duplicated(subset=["firm_id", "month_code"])
    if dup.any():
        row = out.index[dup][0]
        raise SchemaViolation(f"duplicate (firm_id, month) at row {row}")
    if not np.all(np.isfinite(out["ret"].to_numpy(dtype=float))):
        raise SchemaViolation("panel returns contain non-finite values")
    return out.sort_values(["firm_id", "month_code"], kind="stable").reset_index(drop=True)


@dataclass(frozen=True)
class FirmMonthPanel:
    """Validated firm-month table; thin wrapper so types read clearly."""

    df: pd.DataFrame

    @classmethod
    def from_frame(cls, df: pd.DataFrame) -> "FirmMonthPanel":
        return cls(validate_panel(df))

    def __len__(self) -> int:
        return len(self.df)


def _frame(panel) -> pd.DataFrame:
    return panel.df if isinstance(panel, FirmMonthPanel) else panel


# ---------------------------------------------------------------------------
# regime tagging
# ---------------------------------------------------------------------------

def tag_regimes(
    panel,
    breadth_col: str | None = "breadth",
    retail_col: str | None = "retail",
    vix_col: str | None = "vix",
    vix_percentile: float = 0.75,
    post_dates: tuple[str, ...] = ("2019-10",),
) -> pd.DataFrame:
    """Attach regime indicator columns.

    low_breadth: bottom tercile of breadth within each month (ties go to the
    lower bucket: x <= q(1/3)). high_retail: top tercile within month
    (strict > q(2/3)). high_vix: the month-level VIX exceeds (strictly) its
    in-sample percentile. post_YYYY_MM: month at or after the given date.
    Pass None for a column to skip its tag; a named column that is absent
    raises MissingColumn.
    """
    df = _frame(panel)
    if "month_code" not in df.columns:
        df = validate_panel(df)
    out = df.copy()

    if breadth_col is not None:
        if breadth_col not in out.columns:
            raise MissingColumn(f"breadth column {breadth_col!r} not in panel")
        q = out.groupby("month_code")[breadth_col].transform(lambda s: s.quantile(1 / 3))
        out["low_breadth"] = (out[breadth_col] <= q).astype(int)

    if retail_col is not None:
        if retail_col not in out.columns:
            raise MissingColumn(f"retail column {retail_col!r} not in panel")
        q = out.groupby("month_code")[retail_col].transform(lambda s: s.quantile(2 / 3))
        out["high_retail"] = (out[retail_col] > q).astype(int)

    if vix_col is not None:
        if vix_col not in out.columns:
            raise MissingColumn(f"vix column {vix_col!r} not in panel")
        monthly = out.groupby("month_code")[vix_col].first()
        cutoff = float(np.quantile(monthly.to_numpy(dtype=float), vix_percentile))
        high = monthly > cutoff
        out["high_vix"] = out["month_code"].map(high).astype(int)

    for date in post_dates:
        code = month_code(date)
        out[f"post_{date.replace('-', '_')}"] = (out["month_code"] >= code).astype(int)

    return out


# ---------------------------------------------------------------------------
# within transform and clustered covariance
# ---------------------------------------------------------------------------

def within_demean(Y: np.ndarray, group_codes: list[np.ndarray], tol: float = 1e-10,
                  max_iter: int = 200) -> np.ndarray:
    """Iteratively demean columns of Y over each grouping until converged.

    For one grouping a single pass is exact; for two or more the alternating
    projections converge geometrically (balanced two-way panels converge in
    two passes). Convergence is declared when the largest applied group mean
    is below ``tol``.
    """
    Y = np.array(Y, dtype=float, copy=True)
    if Y.ndim == 1:
        Y = Y[:, None]
    counts = []
    sizes = []
    for codes in group_codes:
        n_groups = int(codes.max()) + 1 if len(codes) else 0
        sizes.append(n_groups)
        counts.append(np.bincount(codes, minlength=n_groups).astype(float)[:, None])
    for _ in range(max_iter):
        shift = 0.0
        for codes, cnt, n_groups in zip(group_codes, counts, sizes):
            sums = np.zeros((n_groups, Y.shape[1]))
            np.add.at(sums, codes, Y)
            means = sums / cnt
            Y -= means[codes]
            if means.size:
                shift = max(shift, float(np.max(np.abs(means))))
        if shift < tol:
            break
    return Y


def cluster_meat(X: np.ndarray, u: np.ndarray, codes: np.ndarray) -> np.ndarray:
    """Sum of per-cluster score outer products: sum_g (X_g'u_g)(X_g'u_g)'."""
    k = X.shape[1]
    n_groups = int(codes.max()) + 1
    scores = np.zeros((n_groups, k))
    np.add.at(scores, codes, X * u[:, None])
    return scores.T @ scores


def _codes(values) -> np.ndarray:
    codes, _ = pd.factorize(values, sort=True)
    return codes.astype(np.int64)


def drop_singletons(df: pd.DataFrame, fe_cols: list[str]) -> tuple[pd.DataFrame, int]:
    """Iteratively drop observations alone in any FE group; return count."""
    dropped = 0
    while True:
        mask = np.ones(len(df), dtype=bool)
        for col in fe_cols:
            sizes = df.groupby(col)[col].transform("size")
            mask &= sizes.to_numpy() > 1
        if mask.all():
            return df, dropped
        dropped += int((~mask).sum())
        df = df.loc[mask]
        if len(df) == 0:
            return df, dropped


@dataclass(frozen=True)
class PanelSpec:
    """What to regress on what: dependent column, regressors, FE, clusters."""

    depvar: str
    regressors: tuple[str, ...]
    fixed_effects: tuple[str, ...] = ("firm_id", "month_code")
    cluster: tuple[str, ...] = ("firm_id", "month_code")
    horizon: int | None = None


@dataclass(frozen=True)
class PanelFit:
    """Absorbed-FE panel regression with clustered standard errors."""

    coefficients: pd.Series
    covariance: np.ndarray
    nobs: int
    r_squared_within: float
    adj_r_squared: float
    fe_counts: dict
    dropped_singletons: int
    cluster: tuple[str, ...]
    flags: tuple[str, ...] = field(default=())

    @property
    def standard_errors(self) -> pd.Series:
        return pd.Series(np.sqrt(np.diag(self.covariance)), index=self.coefficients.index)

    @property
    def t_stats(self) -> pd.Series:
        return self.coefficients / self.standard_errors

    def summary(self) -> str:
        lines = [
            f"Panel FE regression  (N={self.nobs}, within R2={self.r_squared_within:.4f}, "
            f"clusters={'+'.join(self.cluster)})"
        ]
        if self.dropped_singletons:
            lines.append(f"  dropped {self.dropped_singletons} singleton rows")
        for name in self.coefficients.index:
            lines.append(
                f"  {name:<28s} {self.coefficients[name]: .6g}  "
                f"(se {self.standard_errors[name]:.6g})"
            )
        if self.flags:
            lines.append(f"  flags: {', '.join(self.flags)}")
        return "\n".join(lines)


def fit_panel_fe(panel, spec: PanelSpec, demean_tol: float = 1e-10) -> PanelFit:
    """Within-transform OLS with clustered covariance.

    Fixed effects are absorbed by iterative demeaning (to ``demean_tol``);
    the covariance follows the inclusion-exclusion two-way form
    V(first) + V(second) - V(intersection) when two cluster dimensions are
    given, with negative eigenvalues clipped at zero (flagged). Coefficients
    are in the natural units of the columns; basis-point reporting is a
    display transform applied downstream.
    """
    df = _frame(panel)
    needed = [spec.depvar, *spec.regressors, *spec.fixed_effects, *spec.cluster]
    for col in needed:
        if col not in df.columns:
            raise MissingColumn(f"panel is missing column {col!r}")
    cols = list(dict.fromkeys(needed))
    df = df[cols].dropna()
    df, dropped = drop_singletons(df, list(spec.fixed_effects))
    n = len(df)
    k = len(spec.regressors)
    if n <= k + 1:
        raise SingularDesign(f"{n} usable rows cannot identify {k} coefficients")

    fe_codes = [_codes(df[c]) for c in spec.fixed_effects]
    fe_counts = {c: int(codes.max()) + 1 for c, codes in zip(spec.fixed_effects, fe_codes)}

    y_raw = df[spec.depvar].to_numpy(dtype=float)
    X_raw = df[list(spec.regressors)].to_numpy(dtype=float)
    stacked = within_demean(np.column_stack([y_raw, X_raw]), fe_codes, tol=demean_tol)
    y = stacked[:, 0]
    X = stacked[:, 1:]

    scale = np.abs(X_raw).max(axis=0) + 1.0
    within_var = X.var(axis=0)
    dead = within_var < 1e-24 * scale ** 2
    if dead.any():
        names = [spec.regressors[i] for i in np.where(dead)[0]]
        raise NoWithinVariation(f"no within-FE variation in {names}")

    xtx = X.T @ X
    if np.linalg.matrix_rank(xtx, hermitian=True) < k:
        raise SingularDesign("regressors collinear after the within transform")
    bread = np.linalg.inv(xtx)
    beta = bread @ (X.T @ y)
    u = y - X @ beta

    flags: list[str] = []
    meat = _two_way_meat(df, X, u, spec.cluster)
    cov = bread @ meat @ bread
    cov = 0.5 * (cov + cov.T)
    eigvals, eigvecs = np.linalg.eigh(cov)
    if np.any(eigvals < 0):
        if np.any(eigvals < -1e-15 * max(eigvals.max(), 1.0)):
            flags.append("covariance-clipped")
        cov = (eigvecs * np.clip(eigvals, 0.0, None)) @ eigvecs.T

    sst = float(np.sum((y - y.mean()) ** 2))
    ssr = float(u @ u)
    r2w = 1.0 - ssr / sst if sst > 0 else 0.0
    n_fe_params = sum(fe_counts.values()) - (len(fe_counts) - 1)
    dof = n - k - n_fe_params
    adj = 1.0 - (1.0 - r2w) * (n - 1) / dof if dof > 0 else float("nan")

    return PanelFit(
        coefficients=pd.Series(beta, index=list(spec.regressors)),
        covariance=cov,
        nobs=n,
        r_squared_within=r2w,
        adj_r_squared=adj,
        fe_counts=fe_counts,
        dropped_singletons=dropped,
        cluster=tuple(spec.cluster),
        flags=tuple(flags),
    )


def _two_way_meat(df: pd.DataFrame, X: np.ndarray, u: np.ndarray,
                  cluster: tuple[str, ...]) -> np.ndarray:
    if len(cluster) == 1:
        return cluster_meat(X, u, _codes(df[cluster[0]]))
    if len(cluster) != 2:
        raise SchemaViolation("cluster must name one or two dimensions")
    a, b = cluster
    meat_a = cluster_meat(X, u, _codes(df[a]))
    meat_b = cluster_meat(X, u, _codes(df[b]))
    ca, cb = _codes(df[a]), _codes(df[b])
    pair = ca * (np.int64(cb.max()) + 1) + cb
    inter = np.unique(pair, return_inverse=True)[1].astype(np.int64)
    meat_ab = cluster_meat(X, u, inter)
    return meat_a + meat_b - meat_ab


# ---------------------------------------------------------------------------
# horizon table
# ---------------------------------------------------------------------------

def forward_cumulative(panel, h: int, out_col: str | None = None) -> pd.DataFrame:
    """Per-firm h-month-ahead cumulative return column (NaN when the firm's
    next h months are not all present)."""
    df = _frame(panel)
    if "month_code" not in df.columns:
        df = validate_panel(df)
    df = df.sort_values(["firm_id", "month_code"], kind="stable").reset_index(drop=True)
    name = out_col or f"fwd_ret_{h}"
    r = df["ret"].to_numpy(dtype=float)
    codes = df["month_code"].to_numpy(dtype=np.int64)
    firm_codes = _codes(df["firm_id"])
    fwd = np.full(len(df), np.nan)
    csum = np.concatenate([[0.0], np.cumsum(r)])
    n = len(df)
    idx = np.arange(n)
    # usable when the row h places ahead is the same firm exactly h months
    # later; sorted uniqueness then guarantees the window is gap-free
    valid = idx + h < n
    ahead = np.minimum(idx + h, n - 1)
    valid &= (codes[ahead] - codes) == h
    valid &= firm_codes[ahead] == firm_codes
    fwd[valid] = csum[idx[valid] + h + 1] - csum[idx[valid] + 1]
    df[name] = fwd
    return df


def panel_irf_by_horizon(panel, spec: PanelSpec, horizons) -> dict[int, PanelFit]:
    """One absorbed-FE fit per horizon, dependent = h-month-ahead cumulative
    firm return. The passed PanelSpec's depvar is ignored; its
    regressors/FE/clusters are reused at every horizon."""
    df = _frame(panel)
    if "month_code" not in df.columns:
        df = validate_panel(df)
    span = int(df["month_code"].max() - df["month_code"].min())
    out: dict[int, PanelFit] = {}
    for h in horizons:
        if h >= span + 1:
            raise HorizonTooLong(f"horizon {h} exceeds the panel month span {span}")
        with_dep = forward_cumulative(df, h)
        sub = PanelSpec(
            depvar=f"fwd_ret_{h}",
            regressors=spec.regressors,
            fixed_effects=spec.fixed_effects,
            cluster=spec.cluster,
            horizon=h,
        )
        out[h] = fit_panel_fe(with_dep, sub)
    return out


def attach_shocks(panel, shocks: ShockSeries, col: str = "eps",
                  split: bool = True) -> pd.DataFrame:
    """Merge a shock series onto panel rows by month; optionally add the
    positive/negative parts as `<col>_pos` / `<col>_neg`."""
    df = _frame(panel)
    if "month_code" not in df.columns:
        df = validate_panel(df)
    mapping = dict(zip(shocks.month_codes().tolist(), np.asarray(shocks.eps)))
    out = df.copy()
    out[col] = out["month_code"].map(mapping)
    if split:
        out[f"{col}_pos"] = np.maximum(out[col], 0.0)
        out[f"{col}_neg"] = np.minimum(out[col], 0.0)
    return out
