"""Signal-sorted portfolios: breakpoints, memberships, returns, costs.

Sorting follows the usual cross-sectional playbook: breakpoints from a
reference universe (all firms by default), right-closed bucket intervals,
signal observed in month t, return earned in month t+1, value weights
frozen at formation-month market equity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import (
    EmptyEndBucket,
    MissingColumn,
    MissingSignal,
    SchemaViolation,
    SeriesTooShort,
    TooFewInUniverse,
)
from .panel import _frame
from .regression import hac_long_run_variance
from .series import MonthlySeries, month_label


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SortConfig:
    signal: str
    n_buckets: int = 10
    universe_col: str | None = None
    weighting: str = "equal"
    skip_month: bool = True
    cost_bps_oneway: tuple[float, ...] = (0.0, 5.0, 10.0)
    me_col: str = "me"
    delist_col: str | None = "delist_ret"

    def __post_init__(self):
        if self.n_buckets < 2:
            raise SchemaViolation("need at least 2 buckets")
        if self.weighting not in ("equal", "value"):
            raise SchemaViolation("weighting must be 'equal' or 'value'")
        if any(c < 0 for c in self.cost_bps_oneway):
            raise SchemaViolation("costs must be nonnegative")


# ---------------------------------------------------------------------------
# breakpoints and membership
# ---------------------------------------------------------------------------

def compute_breakpoints(month_slice: pd.DataFrame, signal: str,
                        universe_col: str | None = None,
                        n_buckets: int = 10) -> np.ndarray:
    """Quantile cutoffs from the flagged universe, padded with +/-inf.

    Cutoffs sit at q/n_buckets of the universe_col-flagged subset (whole
    slice when the flag is None); assignment later applies them to every
    firm in the slice, which is the point of a reference universe.
    """
    if signal not in month_slice.columns:
        raise MissingSignal(f"signal column {signal!r} not in panel")
    values = month_slice[signal].to_numpy(dtype=float)
    if universe_col is not None:
        if universe_col not in month_slice.columns:
            raise MissingColumn(f"universe column {universe_col!r} not in panel")
        mask = month_slice[universe_col].to_numpy(dtype=bool)
        values = values[mask]
    values = values[np.isfinite(values)]
    if len(values) < n_buckets:
        raise TooFewInUniverse(
            f"{len(values)} usable observations for {n_buckets} buckets")
    qs = np.arange(1, n_buckets) / n_buckets
    inner = np.quantile(values, qs)
    return np.concatenate([[-np.inf], inner, [np.inf]])


def assign_buckets(values, cutoffs: np.ndarray) -> np.ndarray:
    """Right-closed membership: bucket q covers (B_{q-1}, B_q], so a value
    equal to a cutoff lands in the lower bucket. 1-based."""
    z = np.asarray(values, dtype=float)
    inner = cutoffs[1:-1]
    return np.searchsorted(inner, z, side="left").astype(np.int64) + 1


def form_portfolios(panel, cfg: SortConfig) -> pd.DataFrame:
    """Assign every firm-month with a finite signal to a bucket.

    Returns one row per assigned firm-month: firm_id, month_code, bucket.
    Duplicate cutoffs (mass ties) collapse the affected buckets; the frame's
    .attrs carry a 'collapsed-buckets' flag when that happens.
    """
    df = _frame(panel)
    if cfg.signal not in df.columns:
        raise MissingSignal(f"signal column {cfg.signal!r} not in panel")
    out = []
    collapsed = False
    for code, month_slice in df.groupby("month_code", sort=True):
        finite = month_slice[np.isfinite(month_slice[cfg.signal].to_numpy(dtype=float))]
        if finite.empty:
            continue
        cuts = compute_breakpoints(finite, cfg.signal, cfg.universe_col, cfg.n_buckets)
        if len(np.unique(cuts[1:-1])) < cfg.n_buckets - 1:
            collapsed = True
        buckets = assign_buckets(finite[cfg.signal].to_numpy(dtype=float), cuts)
        out.append(pd.DataFrame({
            "firm_id": finite["firm_id"].to_numpy(),
            "month_code": int(code),
            "bucket": buckets,
        }))
    if not out:
        raise MissingSignal(f"no finite {cfg.signal!r} values anywhere in the panel")
    memberships = pd.concat(out, ignore_index=True)
    memberships.attrs["flags"] = ("collapsed-buckets",) if collapsed else ()
    return memberships


# ---------------------------------------------------------------------------
# portfolio return series
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PortfolioSeries:
    """Bucket and long-short return series with per-month weight snapshots.

    months are holding-month labels (formation month + 1 under skip_month);
    holdings has one row per position with its formation weight and the
    realized holding-month return.
    """

    months: tuple[str, ...]
    bucket_returns: np.ndarray
    counts: np.ndarray
    long_short: np.ndarray
    holdings: pd.DataFrame
    n_buckets: int
    weighting: str
    skipped_months: tuple[str, ...] = ()
    flags: tuple[str, ...] = field(default=())

    def __post_init__(self):
        sums = self.holdings.groupby(["form_code", "bucket"])["weight"].sum()
        if len(sums) and np.abs(sums.to_numpy() - 1.0).max() > 1e-12:
            raise SchemaViolation("bucket weights must sum to 1 within 1e-12")


def portfolio_returns(memberships: pd.DataFrame, panel,
                      weighting: str = "equal",
                      cfg: SortConfig | None = None) -> PortfolioSeries:
    """Realize bucket returns one month after formation.

    Equal weighting averages members; value weighting uses formation-month
    market equity. A member with no holding-month row takes its delisting
    return when a delist column exists, otherwise it drops out and the rest
    renormalize. A month whose top or bottom bucket ends up empty is
    skipped and flagged rather than fatal.
    """
    if cfg is None:
        cfg = SortConfig(signal="_unused", weighting=weighting)
    if weighting not in ("equal", "value"):
        raise SchemaViolation("weighting must be 'equal' or 'value'")
    df = _frame(panel)
    offset = 1 if cfg.skip_month else 0
    n = cfg.n_buckets

    ret_map = df.set_index(["firm_id", "month_code"])["ret"]
    me_map = None
    if weighting == "value":
        if cfg.me_col not in df.columns:
            raise MissingColumn(f"market equity column {cfg.me_col!r} not in panel")
        me_map = df.set_index(["firm_id", "month_code"])[cfg.me_col]
    delist_map = None
    if cfg.delist_col is not None and cfg.delist_col in df.columns:
        delist_map = df.set_index(["firm_id", "month_code"])[cfg.delist_col]

    months: list[str] = []
    skipped: list[str] = []
    rows_r: list[np.ndarray] = []
    rows_c: list[np.ndarray] = []
    hold_frames: list[pd.DataFrame] = []

    last_code = int(df["month_code"].max())
    for code, group in memberships.groupby("month_code", sort=True):
        hold_code = int(code) + offset
        if hold_code > last_code:
            continue  # formation at the sample edge has no holding month yet
        firm = group["firm_id"].to_numpy()
        bucket = group["bucket"].to_numpy()

        idx = pd.MultiIndex.from_arrays([firm, np.full(len(firm), hold_code)])
        realized = ret_map.reindex(idx).to_numpy(dtype=float)
        if delist_map is not None:
            dl = delist_map.reindex(idx).to_numpy(dtype=float)
            use_dl = ~np.isfinite(realized) & np.isfinite(dl)
            realized = np.where(use_dl, dl, realized)
        alive = np.isfinite(realized)

        if weighting == "value":
            fidx = pd.MultiIndex.from_arrays([firm, np.full(len(firm), int(code))])
            raw_w = me_map.reindex(fidx).to_numpy(dtype=float)
        else:
            raw_w = np.ones(len(firm))
        alive &= np.isfinite(raw_w) & (raw_w > 0)

        label = month_label(hold_code)
        br = np.full(n, np.nan)
        ct = np.zeros(n, dtype=np.int64)
        weights = np.zeros(len(firm))
        for q in range(1, n + 1):
            members = alive & (bucket == q)
            ct[q - 1] = int(members.sum())
            if ct[q - 1] == 0:
                continue
            w = raw_w[members] / raw_w[members].sum()
            weights[members] = w
            br[q - 1] = float(w @ realized[members])
        if ct[0] == 0 or ct[n - 1] == 0:
            skipped.append(label)
            continue

        months.append(label)
        rows_r.append(br)
        rows_c.append(ct)
        keep = alive
        hold_frames.append(pd.DataFrame({
            "form_code": int(code),
            "hold_code": hold_code,
            "firm_id": firm[keep],
            "bucket": bucket[keep],
            "weight": weights[keep],
            "realized": realized[keep],
        }))

    if not months:
        raise EmptyEndBucket("every month lost its top or bottom bucket")

    bucket_returns = np.vstack(rows_r)
    counts = np.vstack(rows_c)
    long_short = bucket_returns[:, n - 1] - bucket_returns[:, 0]
    flags = ("months-skipped",) if skipped else ()
    return PortfolioSeries(
        months=tuple(months),
        bucket_returns=bucket_returns,
        counts=counts,
        long_short=long_short,
        holdings=pd.concat(hold_frames, ignore_index=True),
        n_buckets=n,
        weighting=weighting,
        skipped_months=tuple(skipped),
        flags=flags,
    )


# ---------------------------------------------------------------------------
# turnover and transaction costs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CostResult:
    months: tuple[str, ...]
    turnover_long: np.ndarray
    turnover_short: np.ndarray
    gross: np.ndarray
    net: dict[float, np.ndarray]

    @property
    def average_turnover(self) -> dict[str, float]:
        return {"long": float(self.turnover_long.mean()),
                "short": float(self.turnover_short.mean())}


def _leg_turnover(prev: pd.DataFrame | None, cur: pd.DataFrame) -> float:
    """One-way turnover: half the absolute weight change against the
    drift-adjusted prior book. No prior book means inception, turnover 0."""
    if prev is None:
        return 0.0
    grown = prev["weight"].to_numpy() * (1.0 + prev["realized"].to_numpy())
    total = grown.sum()
    drifted = dict(zip(prev["firm_id"], grown / total if total > 0 else grown * 0.0))
    current = dict(zip(cur["firm_id"], cur["weight"].to_numpy()))
    names = set(drifted) | set(current)
    change = sum(abs(current.get(f, 0.0) - drifted.get(f, 0.0)) for f in names)
    return 0.5 * change


def turnover_and_costs(series: PortfolioSeries,
                       cost_bps: tuple[float, ...] = (0.0, 5.0, 10.0)) -> CostResult:
    """Per-leg one-way turnover and cost-adjusted long-short returns.

    net = gross - (one-way cost, decimal) x (turnover_long + turnover_short),
    so a full rebalance of both legs at 10 bps one-way costs 20 bps. A gap in
    formation months restarts the book (inception treatment).
    """
    if len(series.months) < 2:
        raise SeriesTooShort("need at least 2 formation months for turnover")
    holdings = series.holdings
    top, bottom = series.n_buckets, 1
    form_codes = sorted(holdings["form_code"].unique())

    to_long = np.zeros(len(series.months))
    to_short = np.zeros(len(series.months))
    prev_long = prev_short = None
    prev_code = None
    for i, code in enumerate(form_codes):
        month = holdings[holdings["form_code"] == code]
        legs = {q: month[month["bucket"] == q] for q in (top, bottom)}
        if prev_code is not None and code != prev_code + 1:
            prev_long = prev_short = None
        to_long[i] = _leg_turnover(prev_long, legs[top])
        to_short[i] = _leg_turnover(prev_short, legs[bottom])
        prev_long, prev_short, prev_code = legs[top], legs[bottom], code

    net = {}
    for bps in cost_bps:
        drag = (bps / 1e4) * (to_long + to_short)
        net[float(bps)] = series.long_short - drag
    return CostResult(months=series.months, turnover_long=to_long,
                      turnover_short=to_short, gross=series.long_short.copy(),
                      net=net)


# ---------------------------------------------------------------------------
# Sharpe ratio with HAC standard error
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SharpeResult:
    sharpe: float
    se: float
    mean: float
    sd: float
    nobs: int

    def annualized(self) -> float:
        return self.sharpe * math.sqrt(12.0)


def sharpe_nw(series, lag: int = 12) -> SharpeResult:
    """Monthly Sharpe ratio, mean/sd, with a kernel-weighted standard error.

    The SE treats the volatility as fixed and propagates the HAC variance of
    the mean: se = sqrt(lrv/T)/sd. At lag 0 this collapses to the iid
    delta-method value.
    """
    if isinstance(series, PortfolioSeries):
        values = np.asarray(series.long_short, dtype=float)
    elif isinstance(series, MonthlySeries):
        values = series.values
    else:
        values = np.asarray(series, dtype=float)
    T = len(values)
    if T <= lag + 2:
        raise SeriesTooShort(f"need more than lag+2={lag + 2} observations, got {T}")
    mean = float(values.mean())
    sd = float(values.std(ddof=1))
    if sd == 0:
        raise SchemaViolation("zero-variance series has no Sharpe ratio")
    lrv = hac_long_run_variance(values, lag)
    se_mean = math.sqrt(lrv / T)
    return SharpeResult(sharpe=mean / sd, se=se_mean / sd, mean=mean, sd=sd, nobs=T)
