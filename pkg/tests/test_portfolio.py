import numpy as np
import pandas as pd
import pytest

import sentkit as sk
from sentkit.errors import SeriesTooShort, TooFewInUniverse
from sentkit.portfolio import assign_buckets, compute_breakpoints
from conftest import make_panel


def _grid_panel(n_firms, n_months, start_code=24000, me=None, signal=None, ret=None,
                rng_seed=0):
    """Balanced validated panel with deterministic or supplied columns.

    signal/ret/me may be callables (firm_index, month_index) -> value.
    """
    rng = np.random.default_rng(rng_seed)
    rows = []
    for i in range(n_firms):
        for t in range(n_months):
            rows.append({
                "firm_id": f"F{i:03d}",
                "month": sk.month_label(start_code + t),
                "ret": ret(i, t) if ret else rng.normal(0, 0.05),
                "me": me(i, t) if me else 1.0,
                "sig": signal(i, t) if signal else float(i),
            })
    return sk.validate_panel(pd.DataFrame(rows))


# --- breakpoints and bucket assignment ------------------------------------------

def test_breakpoints_match_quantiles_on_distinct_values():
    df = pd.DataFrame({"sig": np.arange(20, dtype=float)})
    cuts = compute_breakpoints(df, "sig", n_buckets=10)
    assert cuts[0] == -np.inf and cuts[-1] == np.inf
    inner = np.quantile(np.arange(20.0), np.linspace(0, 1, 11)[1:-1])
    np.testing.assert_allclose(cuts[1:-1], inner)


def test_bucket_assignment_is_right_closed():
    cuts = np.array([-np.inf, 1.0, 2.0, np.inf])
    vals = np.array([0.5, 1.0, 1.5, 2.0, 2.5])
    # a value sitting exactly on a cutoff belongs to the lower bucket
    np.testing.assert_array_equal(assign_buckets(vals, cuts), [1, 1, 2, 2, 3])


def test_breakpoints_from_universe_apply_to_everyone():
    df = pd.DataFrame({
        "sig": [0.0, 1.0, 2.0, 3.0, 100.0, 200.0],
        "nyse": [1, 1, 1, 1, 0, 0],
    })
    cuts = compute_breakpoints(df, "sig", universe_col="nyse", n_buckets=2)
    assert cuts[1] == pytest.approx(1.5)  # median of the flagged subset only
    assigned = assign_buckets(df["sig"].to_numpy(), cuts)
    # off-universe names still get assigned, here both to the top bucket
    np.testing.assert_array_equal(assigned, [1, 1, 2, 2, 2, 2])


def test_breakpoints_too_few_in_universe():
    df = pd.DataFrame({"sig": [1.0, 2.0], "u": [1, 0]})
    with pytest.raises(TooFewInUniverse):
        compute_breakpoints(df, "sig", universe_col="u", n_buckets=3)


def test_all_equal_signal_collapses_buckets():
    df = _grid_panel(12, 3, signal=lambda i, t: 7.0)
    cfg = sk.SortConfig(signal="sig", n_buckets=5, skip_month=False)
    memb = sk.form_portfolios(df, cfg)
    assert "collapsed-buckets" in memb.attrs["flags"]
    assert (memb["bucket"] == 1).all()


# --- portfolio returns: weighting, timing, long-short -----------------------------

def test_equal_weight_hand_oracle_and_long_short():
    # 4 firms, signal = firm index, 2 buckets; month-0 returns chosen by hand
    rets = {0: 0.01, 1: 0.03, 2: 0.05, 3: 0.07}
    df = _grid_panel(4, 2, ret=lambda i, t: rets[i] if t == 0 else 0.0)
    cfg = sk.SortConfig(signal="sig", n_buckets=2, skip_month=False)
    memb = sk.form_portfolios(df, cfg)
    series = sk.portfolio_returns(memb, df, weighting="equal", cfg=cfg)
    assert series.months[0] == sk.month_label(24000)
    first = series.bucket_returns[0]
    assert first[0] == pytest.approx(0.02)   # (0.01 + 0.03)/2
    assert first[1] == pytest.approx(0.06)   # (0.05 + 0.07)/2
    assert series.long_short[0] == pytest.approx(0.04)
    np.testing.assert_array_equal(series.counts[0], [2, 2])


def test_value_weight_hand_oracle():
    df = _grid_panel(4, 1,
                     me=lambda i, t: [1.0, 3.0, 2.0, 2.0][i],
                     signal=lambda i, t: float(i),
                     ret=lambda i, t: [0.04, 0.00, 0.06, 0.02][i])
    cfg = sk.SortConfig(signal="sig", n_buckets=2, weighting="value",
                        skip_month=False)
    memb = sk.form_portfolios(df, cfg)
    series = sk.portfolio_returns(memb, df, weighting="value", cfg=cfg)
    assert series.bucket_returns[0, 0] == pytest.approx(0.01)  # (1*.04 + 3*0)/4
    assert series.bucket_returns[0, 1] == pytest.approx(0.04)  # (2*.06 + 2*.02)/4


def test_equal_and_value_weights_coincide_with_flat_me():
    df = make_panel(n_firms=30, n_months=18, seed=21,
                    extra_cols={"sig": lambda r, n: r.normal(size=n)})
    df["me"] = 2.5
    panel = sk.validate_panel(df)
    cfg = sk.SortConfig(signal="sig", n_buckets=3, skip_month=True)
    memb = sk.form_portfolios(panel, cfg)
    ew = sk.portfolio_returns(memb, panel, weighting="equal", cfg=cfg)
    vw = sk.portfolio_returns(memb, panel, weighting="value", cfg=cfg)
    np.testing.assert_allclose(ew.bucket_returns, vw.bucket_returns, atol=1e-14)
    np.testing.assert_allclose(ew.long_short, vw.long_short, atol=1e-14)


def test_skip_month_shifts_holding_period():
    # the sort flips at t=2 just as the return spike lands there, so the
    # long-short return in the spike month changes sign with the timing:
    # under skip the month-1 book (long high-index firms) earns it, without
    # skip the freshly flipped month-2 book is short those same firms
    def signal(i, t):
        return float(i) if t < 2 else float(-i)

    df = _grid_panel(4, 3, signal=signal,
                     ret=lambda i, t: 0.10 * i if t == 2 else 0.0)
    base = dict(signal="sig", n_buckets=2)
    cfg_skip = sk.SortConfig(**base, skip_month=True)
    s_skip = sk.portfolio_returns(sk.form_portfolios(df, cfg_skip), df, cfg=cfg_skip)
    cfg_fast = sk.SortConfig(**base, skip_month=False)
    s_fast = sk.portfolio_returns(sk.form_portfolios(df, cfg_fast), df, cfg=cfg_fast)

    spike = sk.month_label(24002)
    assert s_skip.months == (sk.month_label(24001), spike)
    assert s_skip.long_short[1] == pytest.approx(+0.20)
    assert s_fast.months[-1] == spike
    assert s_fast.long_short[-1] == pytest.approx(-0.20)


def test_delisting_return_fallback():
    df = _grid_panel(4, 2, ret=lambda i, t: 0.02)
    df["delist_ret"] = np.nan
    # firm 3 has no usable holding-month return, only a delisting return
    hit = (df["firm_id"] == "F003") & (df["month_code"] == 24001)
    df.loc[hit, "ret"] = np.nan
    df.loc[hit, "delist_ret"] = -0.30
    cfg = sk.SortConfig(signal="sig", n_buckets=2, skip_month=True)
    memb = sk.form_portfolios(df, cfg)
    series = sk.portfolio_returns(memb, df, cfg=cfg)
    assert series.months[0] == sk.month_label(24001)
    top = series.bucket_returns[0, 1]
    assert top == pytest.approx((0.02 + (-0.30)) / 2)


def test_missing_firm_renormalizes_survivors():
    df = _grid_panel(4, 2, ret=lambda i, t: 0.02 * i)
    # firm 3 vanishes in the holding month with no delisting return
    df = df[~((df["firm_id"] == "F003") & (df["month_code"] == 24001))]
    cfg = sk.SortConfig(signal="sig", n_buckets=2, skip_month=True,
                        delist_col=None)
    memb = sk.form_portfolios(df, cfg)
    series = sk.portfolio_returns(memb, df, cfg=cfg)
    # top bucket had firms 2,3; only firm 2 remains -> full weight on it
    assert series.months[0] == sk.month_label(24001)
    assert series.bucket_returns[0, 1] == pytest.approx(0.04)
    assert series.counts[0, 1] == 1


def test_empty_end_bucket_skips_month_with_flag():
    df = _grid_panel(6, 3, signal=lambda i, t: float(i))
    # all top-bucket firms (4, 5) leave the sample after the formation month
    gone = df["firm_id"].isin(["F004", "F005"]) & (df["month_code"] > 24000)
    df = df[~gone]
    cfg = sk.SortConfig(signal="sig", n_buckets=3, skip_month=True,
                        delist_col=None)
    memb = sk.form_portfolios(df, cfg)
    series = sk.portfolio_returns(memb, df, cfg=cfg)
    assert "months-skipped" in series.flags
    assert sk.month_label(24001) in series.skipped_months
    assert sk.month_label(24001) not in series.months


# --- turnover and trading costs ------------------------------------------------------

def _alternating_series(n_months):
    """EW 2-bucket sort whose long and short legs swap wholesale every month."""
    df = _grid_panel(4, n_months, ret=lambda i, t: 0.0,
                     signal=lambda i, t: float(i if t % 2 == 0 else -i))
    cfg = sk.SortConfig(signal="sig", n_buckets=2, skip_month=False)
    memb = sk.form_portfolios(df, cfg)
    return sk.portfolio_returns(memb, df, cfg=cfg)


def test_turnover_zero_for_static_book_with_flat_returns():
    df = _grid_panel(6, 5, ret=lambda i, t: 0.0)
    cfg = sk.SortConfig(signal="sig", n_buckets=2, skip_month=False)
    memb = sk.form_portfolios(df, cfg)
    series = sk.portfolio_returns(memb, df, cfg=cfg)
    costs = sk.turnover_and_costs(series, cost_bps=(0.0, 20.0))
    np.testing.assert_allclose(costs.turnover_long, 0.0, atol=1e-14)
    np.testing.assert_allclose(costs.turnover_short, 0.0, atol=1e-14)
    # no trading, no drag
    np.testing.assert_allclose(costs.net[20.0], costs.gross, atol=1e-14)


def test_turnover_one_for_full_replacement():
    costs = sk.turnover_and_costs(_alternating_series(5), cost_bps=(0.0,))
    np.testing.assert_allclose(costs.turnover_long[1:], 1.0, atol=1e-14)
    np.testing.assert_allclose(costs.turnover_short[1:], 1.0, atol=1e-14)
    assert costs.turnover_long[0] == 0.0  # inception


def test_cost_drag_hand_oracle_and_monotonicity():
    costs = sk.turnover_and_costs(_alternating_series(5),
                                  cost_bps=(0.0, 20.0, 50.0))
    # full monthly replacement of both legs: drag = bps/1e4 * (1 + 1)
    drag = 20.0 / 1e4 * 2.0
    np.testing.assert_allclose(costs.net[20.0][1:], costs.gross[1:] - drag,
                               atol=1e-14)
    assert (costs.net[50.0][1:] < costs.net[20.0][1:]).all()
    assert (costs.net[20.0] <= costs.net[0.0] + 1e-15).all()
    assert costs.net[20.0][0] == costs.gross[0]  # no drag at inception


def test_average_turnover_includes_quiet_inception():
    costs = sk.turnover_and_costs(_alternating_series(5))
    assert costs.average_turnover["long"] == pytest.approx(4 / 5)
    assert costs.average_turnover["short"] == pytest.approx(4 / 5)


def test_turnover_requires_two_months():
    df = _grid_panel(6, 1)
    cfg = sk.SortConfig(signal="sig", n_buckets=2, skip_month=False)
    series = sk.portfolio_returns(sk.form_portfolios(df, cfg), df, cfg=cfg)
    with pytest.raises(SeriesTooShort):
        sk.turnover_and_costs(series)


def test_gap_in_formation_months_restarts_book():
    # two-month gap between the sample halves: the restart month must not be
    # charged turnover even though the book is "new" relative to the last one
    df1 = _grid_panel(4, 3, ret=lambda i, t: 0.0)
    df2 = _grid_panel(4, 3, start_code=24005, ret=lambda i, t: 0.0,
                      signal=lambda i, t: float(-i))  # reversed ranks
    df = pd.concat([df1, df2], ignore_index=True)
    cfg = sk.SortConfig(signal="sig", n_buckets=2, skip_month=False)
    memb = sk.form_portfolios(df, cfg)
    series = sk.portfolio_returns(memb, df, cfg=cfg)
    costs = sk.turnover_and_costs(series)
    restart = series.months.index(sk.month_label(24005))
    assert costs.turnover_long[restart] == 0.0
    assert costs.turnover_short[restart] == 0.0


# --- sharpe ratio with serial-correlation-robust standard error ----------------------

def test_sharpe_iid_reference():
    rng = np.random.default_rng(22)
    x = rng.normal(0.1, 1.0, size=100_000)
    res = sk.sharpe_nw(x, lag=12)
    assert res.sharpe == pytest.approx(x.mean() / x.std(ddof=1), rel=1e-12)
    assert res.sharpe == pytest.approx(0.1, abs=0.02)
    # iid: long-run variance ~ variance, so se ~ 1/sqrt(T)
    assert res.se == pytest.approx(1.0 / np.sqrt(100_000), rel=0.05)


def test_sharpe_lag_zero_matches_naive_se():
    rng = np.random.default_rng(23)
    x = rng.normal(0.05, 0.02, size=500)
    res = sk.sharpe_nw(x, lag=0)
    naive = np.sqrt(np.mean((x - x.mean()) ** 2) / 500) / x.std(ddof=1)
    assert res.se == pytest.approx(naive, rel=1e-10)


def test_sharpe_annualized_scaling():
    rng = np.random.default_rng(24)
    x = rng.normal(0.01, 0.04, size=240)
    res = sk.sharpe_nw(x, lag=3)
    assert res.annualized() == pytest.approx(res.sharpe * np.sqrt(12))


def test_sharpe_too_short():
    with pytest.raises(SeriesTooShort):
        sk.sharpe_nw(np.ones(10), lag=12)


def test_sharpe_accepts_portfolio_series():
    df = make_panel(n_firms=20, n_months=30, seed=25,
                    extra_cols={"sig": lambda r, n: r.normal(size=n)})
    panel = sk.validate_panel(df)
    cfg = sk.SortConfig(signal="sig", n_buckets=2, skip_month=False)
    memb = sk.form_portfolios(panel, cfg)
    series = sk.portfolio_returns(memb, panel, cfg=cfg)
    res = sk.sharpe_nw(series, lag=6)
    ref = sk.sharpe_nw(series.long_short, lag=6)
    assert res.sharpe == ref.sharpe and res.se == ref.se
