"""Report stage: delimited tables plus rendered figures.

Every table is a plain CSV with repr-formatted floats so reruns are
byte-identical; each figure gets a companion figure-data CSV holding
exactly what was drawn, so any plotting tool can reproduce it.
"""
from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .econometrics import _curve  # geometric IRF curve per convention
from .errors import MissingUpstream

_PNG_META = {"Software": "sentkit"}


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_table(path: Path, header: list[str], rows: list[list]) -> Path:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def _save(fig, path: Path) -> Path:
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)
    return path


def _calibration_table(outdir: Path, fit, bootstrap) -> Path:
    header = ["kappa_bps", "rho", "half_life_months", "objective", "dof",
              "r_squared", "method", "convention"]
    row = [fit.kappa_bps, fit.rho, fit.half_life, fit.objective, fit.dof,
           fit.r_squared, fit.method, fit.convention]
    if bootstrap is not None:
        header += ["kappa_bps_lo", "kappa_bps_hi", "rho_lo", "rho_hi",
                   "half_life_lo", "half_life_hi", "half_life_censored"]
        iv = bootstrap.intervals
        scale = 1e4 if fit.units == "decimal" else 1.0
        row += [iv["kappa"].lower * scale, iv["kappa"].upper * scale,
                iv["rho"].lower, iv["rho"].upper,
                iv["half_life"].lower, iv["half_life"].upper,
                iv["half_life"].boundary_flag]
    return write_table(outdir / "calibration.csv", header, [row])


def _irf_outputs(outdir: Path, irf, fit) -> list[Path]:
    h = np.asarray(irf.horizons, dtype=float)
    beta = np.asarray(irf.betas, dtype=float)
    se = np.asarray(irf.ses, dtype=float)
    lo = beta - 1.96 * se
    hi = beta + 1.96 * se
    fitted = None
    if fit is not None:
        fitted = fit.kappa * _curve(fit.rho, np.asarray(irf.horizons, dtype=float),
                                    fit.convention)

    header = ["horizon", "beta", "se", "ci_lo", "ci_hi"]
    rows = [[int(hh), b, s, l, u] for hh, b, s, l, u in zip(irf.horizons, beta, se, lo, hi)]
    if fitted is not None:
        header.append("fitted")
        rows = [row + [f] for row, f in zip(rows, fitted)]
    paths = [write_table(outdir / "irf_points.csv", header, rows)]

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.fill_between(h, lo, hi, alpha=0.25, color="tab:blue", label="95% band")
    ax.plot(h, beta, "o-", color="tab:blue", label="estimated response")
    if fitted is not None:
        grid = np.arange(int(h.min()), int(h.max()) + 1, dtype=float)
        curve = fit.kappa * _curve(fit.rho, grid, fit.convention)
        ax.plot(grid, curve, "--", color="tab:red", label="geometric fit")
    ax.axhline(0.0, lw=0.8, color="k")
    ax.set_xlabel("horizon (months)")
    ax.set_ylabel("response per unit shock")
    ax.legend(frameon=False)
    fig.tight_layout()
    paths.append(_save(fig, outdir / "irf_figure.png"))
    return paths


def pval_table(outdir: Path, pvals) -> Path:
    header = ["label", "t_stat", "raw_p"]
    columns = []
    for name, values in sorted(pvals.adjusted_p.items()):
        header.append(f"{name}_p")
        columns.append(values)
    rows = []
    for i, label in enumerate(pvals.labels):
        row = [label, float(pvals.t_stats[i]), float(pvals.raw_p[i])]
        row += [float(col[i]) for col in columns]
        rows.append(row)
    return write_table(outdir / "adjusted_p.csv", header, rows)


def portfolio_tables(outdir: Path, series, costs) -> list[Path]:
    """bucket_returns.csv and (with costs) long_short.csv; shared with the
    sorts stage so both emit byte-identical files."""
    paths = []
    rows = []
    for i, month in enumerate(series.months):
        for q in range(series.n_buckets):
            rows.append([month, q + 1, float(series.bucket_returns[i, q]),
                         int(series.counts[i, q])])
    paths.append(write_table(outdir / "bucket_returns.csv",
                             ["month", "bucket", "ret", "count"], rows))

    if costs is not None:
        header = ["month", "ls_gross"]
        cost_keys = sorted(costs.net)
        for bps in cost_keys:
            header.append(f"ls_net_{int(bps)}bps" if float(bps).is_integer()
                          else f"ls_net_{bps}bps")
        header += ["turnover_long", "turnover_short"]
        rows = []
        for i, month in enumerate(costs.months):
            row = [month, float(costs.gross[i])]
            row += [float(costs.net[bps][i]) for bps in cost_keys]
            row += [float(costs.turnover_long[i]), float(costs.turnover_short[i])]
            rows.append(row)
        paths.append(write_table(outdir / "long_short.csv", header, rows))
    return paths


def _portfolio_figure(outdir: Path, costs) -> Path:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    x = np.arange(len(costs.months))
    ax.plot(x, np.cumsum(costs.gross), label="gross")
    for bps in sorted(costs.net):
        if bps > 0:
            ax.plot(x, np.cumsum(costs.net[bps]), label=f"net {bps:g} bps")
    ax.set_xlabel("month index")
    ax.set_ylabel("cumulative long-short return")
    ax.legend(frameon=False)
    fig.tight_layout()
    return _save(fig, outdir / "long_short_figure.png")


def _panel_table(outdir: Path, fits: dict) -> Path:
    rows = []
    for h in sorted(fits):
        fit = fits[h]
        ses = fit.standard_errors
        for name in fit.coefficients.index:
            rows.append([int(h), name, float(fit.coefficients[name]),
                         float(ses[name]), int(fit.nobs)])
    return write_table(outdir / "panel_by_horizon.csv",
                       ["horizon", "regressor", "coef", "se", "nobs"], rows)


def emit_report(context: dict, outdir: str | Path) -> list[Path]:
    """Write every table/figure the run's context supports.

    Raises MissingUpstream when the context holds nothing reportable.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    irf = context.get("irf")
    fit = context.get("fit")
    bootstrap = context.get("bootstrap")
    pvals = context.get("pvals")
    series = context.get("portfolio")
    costs = context.get("costs")
    panel_fits = context.get("panel_fits")

    if fit is not None:
        written.append(_calibration_table(outdir, fit, bootstrap))
    if irf is not None:
        written.extend(_irf_outputs(outdir, irf, fit))
    if pvals is not None:
        written.append(pval_table(outdir, pvals))
    if series is not None:
        written.extend(portfolio_tables(outdir, series, costs))
        if costs is not None:
            written.append(_portfolio_figure(outdir, costs))
    if panel_fits:
        written.append(_panel_table(outdir, panel_fits))

    if not written:
        raise MissingUpstream("nothing to report: run estimation stages first")
    return written
