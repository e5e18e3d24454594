"""Stage orchestration: shocks -> LP -> fit -> bootstrap -> panel -> sorts
-> adjustments -> falsifications -> report.

Stages run in canonical order, each seeded from a fixed substream of the
master seed (SeedSequence spawn keyed by canonical stage index), so a rerun
with the same config and inputs is byte-identical. Dependency problems are
caught before anything executes.
"""
from __future__ import annotations

import time
from pathlib import Path

import numpy as np

from . import report as report_mod
from .config import CANONICAL_STAGES, RunConfig
from .econometrics import fit_geometric, local_projection_irf, rolling_fit  # noqa: F401
from .errors import SchemaViolation, StageDependencyMissing, StageError
from .inference import (
    RwHypothesis,
    holm_adjust,
    lead_lag_test,
    parametric_irf_bootstrap,
    permutation_falsification,
    romano_wolf_stepdown,
    PvalFamily,
)
from .io import Dataset, ingest
from .manifest import RunManifest
from .panel import PanelSpec, attach_shocks, panel_irf_by_horizon, tag_regimes
from .portfolio import SortConfig, form_portfolios, portfolio_returns, turnover_and_costs
from .report import pval_table, write_table
from .series import estimate_ar1, standardize_shocks, write_series_csv
from .structural import FeedbackParams, simulate_feedback


def stage_seed(master: int | None, stage: str):
    """Deterministic per-stage seed substream from the master seed."""
    idx = CANONICAL_STAGES.index(stage)
    return np.random.SeedSequence(0 if master is None else master, spawn_key=(idx,))


# ---------------------------------------------------------------------------
# pre-flight dependency planning
# ---------------------------------------------------------------------------

def _plan_resources(config: RunConfig) -> None:
    """Walk scheduled stages in order, tracking what each can consume."""
    have = set()
    if config.input_path("sentiment"):
        have.add("sentiment")
    if config.input_path("market"):
        have.add("returns")
    if config.input_path("panel"):
        have.add("panel")

    reportable = False
    for stage in config.stages:
        if stage == "simulate":
            have |= {"returns", "shocks"}
        elif stage == "shocks":
            if "sentiment" not in have and "shocks" not in have:
                raise StageDependencyMissing(
                    "shocks stage needs a sentiment input or a simulate stage")
            have.add("shocks")
        elif stage == "irf":
            missing = {"shocks", "returns"} - have
            if missing:
                raise StageDependencyMissing(f"irf stage missing {sorted(missing)}")
            have.add("irf")
            reportable = True
        elif stage in ("fit", "bootstrap"):
            if "irf" not in have:
                raise StageDependencyMissing(f"{stage} stage needs the irf stage")
            have.add(stage)
            reportable = True
        elif stage in ("panel", "sorts", "adjustments"):
            if "panel" not in have:
                raise StageDependencyMissing(f"{stage} stage needs a panel input")
            if stage == "sorts" and "signal" not in config.block("sorts"):
                raise SchemaViolation("[sort] block needs a signal column name")
            if stage == "adjustments" and not config.block("adjustments").get("hypotheses"):
                raise SchemaViolation("[adjust] block needs a hypotheses list")
            reportable = True
        elif stage == "falsifications":
            missing = {"shocks", "returns"} - have
            if missing:
                raise StageDependencyMissing(
                    f"falsifications stage missing {sorted(missing)}")
        elif stage == "report":
            if not reportable:
                raise StageDependencyMissing(
                    "report stage needs at least one estimation stage upstream")


# ---------------------------------------------------------------------------
# stage bodies
# ---------------------------------------------------------------------------

def _stage_simulate(ctx, config, outdir, written):
    block = config.block("simulate")
    params = FeedbackParams(kappa=float(block.get("kappa_bps", 1.06)),
                            rho=float(block.get("rho", 0.94)))
    returns, shocks = simulate_feedback(
        params,
        T=int(block.get("T", 420)),
        seed=stage_seed(config.seed, "simulate"),
        start_month=str(block.get("start_month", "2000-01")),
        burn_in=int(block.get("burn_in", 0)),
        return_shocks=True,
    )
    ctx["returns"], ctx["shocks"] = returns, shocks
    path = outdir / "returns.csv"
    write_series_csv(returns, path, value_name="ret")
    written.append(path)
    path = outdir / "shocks.csv"
    write_series_csv(shocks, path, value_name="eps")
    written.append(path)


def _stage_shocks(ctx, config, outdir, written):
    block = config.block("shocks")
    if ctx.get("sentiment") is not None:
        fit = estimate_ar1(ctx["sentiment"], hac_lag=int(block.get("hac_lag", 12)),
                           demean=bool(block.get("demean", True)))
        shocks = standardize_shocks(fit, flip=bool(block.get("flip", False)))
        ctx["ar1"], ctx["shocks"] = fit, shocks
        path = outdir / "shocks.csv"
        write_series_csv(shocks, path, value_name="eps")
        written.append(path)
    elif ctx.get("shocks") is not None:
        pass  # simulate already produced unit-variance innovations
    else:
        raise StageDependencyMissing("no sentiment series and no simulated shocks")


def _stage_irf(ctx, config, outdir, written):
    block = config.block("irf")
    irf = local_projection_irf(
        ctx["shocks"],
        ctx["returns"],
        horizons=tuple(int(h) for h in block.get("horizons", (1, 3, 6, 12))),
        mode=str(block.get("mode", "level")),
        min_obs=int(block.get("min_obs", 30)),
        cross_cov=str(block.get("cross_cov", "diagonal")),
        block_len=int(block.get("block_len", 12)),
        joint_draws=int(block.get("joint_draws", 200)),
        seed=stage_seed(config.seed, "irf"),
    )
    ctx["irf"] = irf
    rows = [[int(h), float(b), float(s), int(n)] for h, b, s, n in
            zip(irf.horizons, irf.betas, irf.ses, irf.nobs)]
    path = write_table(outdir / "irf.csv", ["horizon", "beta", "se", "nobs"], rows)
    written.append(path)


def _stage_fit(ctx, config, outdir, written):
    block = config.block("fit")
    fit = fit_geometric(
        ctx["irf"],
        method=str(block.get("method", "wls")),
        convention=str(block.get("convention", "level-h-minus-1")),
    )
    ctx["fit"] = fit
    rows = [[fit.kappa_bps, fit.rho, fit.half_life, fit.objective, fit.dof,
             fit.r_squared, fit.method, fit.convention, "|".join(fit.flags)]]
    path = write_table(outdir / "fit.csv",
                       ["kappa_bps", "rho", "half_life_months", "objective",
                        "dof", "r_squared", "method", "convention", "flags"], rows)
    written.append(path)


def _stage_bootstrap(ctx, config, outdir, written):
    block = config.block("bootstrap")
    fit_block = config.block("fit")
    boot = parametric_irf_bootstrap(
        ctx["irf"],
        B=int(block.get("B", 1000)),
        seed=stage_seed(config.seed, "bootstrap"),
        method=str(block.get("method", fit_block.get("method", "wls"))),
        convention=str(block.get("convention",
                                 fit_block.get("convention", "level-h-minus-1"))),
        level=float(block.get("level", 0.95)),
    )
    ctx["bootstrap"] = boot
    kappa_scale = 1e4 if boot.point.units == "decimal" else 1.0
    rows = []
    for name in ("kappa", "rho", "half_life"):
        iv = boot.intervals[name]
        scale = kappa_scale if name == "kappa" else 1.0
        label = "kappa_bps" if name == "kappa" else name
        rows.append([label, iv.point * scale, iv.lower * scale, iv.upper * scale,
                     iv.level, iv.boundary_flag])
    path = write_table(outdir / "bootstrap.csv",
                       ["parameter", "point", "lower", "upper", "level", "censored"],
                       rows)
    written.append(path)


def _stage_panel(ctx, config, outdir, written):
    block = config.block("panel")
    panel = ctx["panel"]
    if ctx.get("shocks") is not None and bool(block.get("attach_shocks", True)):
        panel = attach_shocks(panel, ctx["shocks"], split=bool(block.get("split", True)))
    if bool(block.get("tag_regimes", False)):
        panel = tag_regimes(panel)
    ctx["panel"] = panel

    regressors = block.get("regressors")
    fixed_effects = block.get("fixed_effects")
    if regressors is None:
        cols = (panel.df if hasattr(panel, "df") else panel).columns
        regressors = [c for c in ("eps_pos", "eps_neg") if c in cols] or ["eps"]
        if fixed_effects is None:
            # the attached innovations are common to every firm in a month,
            # so a month effect would absorb them; identify off time instead
            fixed_effects = ("firm_id",)
    if fixed_effects is None:
        fixed_effects = ("firm_id", "month_code")
    spec = PanelSpec(
        depvar=str(block.get("depvar", "ret")),
        regressors=tuple(str(r) for r in regressors),
        fixed_effects=tuple(str(f) for f in fixed_effects),
        cluster=tuple(block.get("cluster", ("firm_id", "month_code"))),
    )
    horizons = tuple(int(h) for h in block.get("horizons", (1, 3, 6, 12)))
    fits = panel_irf_by_horizon(panel, spec, horizons)
    ctx["panel_fits"] = fits
    rows = []
    for h in sorted(fits):
        fit = fits[h]
        ses = fit.standard_errors
        for name in fit.coefficients.index:
            rows.append([int(h), name, float(fit.coefficients[name]),
                         float(ses[name]), int(fit.nobs)])
    path = write_table(outdir / "panel_fits.csv",
                       ["horizon", "regressor", "coef", "se", "nobs"], rows)
    written.append(path)


def _stage_sorts(ctx, config, outdir, written):
    block = config.block("sorts")
    if "signal" not in block:
        raise SchemaViolation("[sort] block needs a signal column name")
    cfg = SortConfig(
        signal=str(block["signal"]),
        n_buckets=int(block.get("n_buckets", 10)),
        universe_col=block.get("universe_col"),
        weighting=str(block.get("weighting", "equal")),
        skip_month=bool(block.get("skip_month", True)),
        cost_bps_oneway=tuple(float(c) for c in block.get("cost_bps_oneway", (0.0, 5.0, 10.0))),
        me_col=str(block.get("me_col", "me")),
    )
    memberships = form_portfolios(ctx["panel"], cfg)
    series = portfolio_returns(memberships, ctx["panel"], weighting=cfg.weighting, cfg=cfg)
    costs = turnover_and_costs(series, cost_bps=cfg.cost_bps_oneway)
    ctx["portfolio"], ctx["costs"] = series, costs
    written.extend(report_mod.portfolio_tables(outdir, series, costs))


def _stage_adjustments(ctx, config, outdir, written):
    block = config.block("adjustments")
    hyp_rows = block.get("hypotheses")
    if not hyp_rows:
        raise SchemaViolation("[adjust] block needs a hypotheses list")
    hyps = [RwHypothesis(label=str(r["label"]), depvar=str(r["depvar"]),
                         regressors=tuple(str(x) for x in r["regressors"]),
                         tested=str(r["tested"]))
            for r in hyp_rows]
    family = romano_wolf_stepdown(
        ctx["panel"], hyps,
        B=int(block.get("B", 1000)),
        seed=stage_seed(config.seed, "adjustments"),
        fixed_effects=tuple(block.get("fixed_effects", ("firm_id", "month_code"))),
        cluster=str(block.get("cluster", "month_code")),
    )
    adjusted = dict(family.adjusted_p)
    adjusted["holm"] = holm_adjust(family.raw_p)
    family = PvalFamily(labels=family.labels, t_stats=family.t_stats,
                        raw_p=family.raw_p, adjusted_p=adjusted, flags=family.flags)
    ctx["pvals"] = family
    written.append(pval_table(outdir, family))


def _stage_falsifications(ctx, config, outdir, written):
    block = config.block("falsifications")
    horizons = tuple(int(h) for h in block.get("horizons", (1, 3, 6, 12)))
    lead_lag = lead_lag_test(ctx["shocks"], ctx["returns"], horizons=horizons)
    perm = permutation_falsification(
        ctx["shocks"], ctx["returns"],
        bins=block.get("bins", "year-month"),
        B=int(block.get("B", 999)),
        seed=stage_seed(config.seed, "falsifications"),
    )
    ctx["lead_lag"], ctx["permutation"] = lead_lag, perm
    rows = [["lead-lag", int(h), float(c), float(s), float(t), float(p)]
            for h, c, s, t, p in zip(lead_lag.horizons, lead_lag.coefficients,
                                     lead_lag.ses, lead_lag.t_stats, lead_lag.p_values)]
    rows.append(["permutation", perm.bins_used, perm.statistic, float("nan"),
                 float("nan"), perm.p])
    path = write_table(outdir / "falsification.csv",
                       ["test", "horizon_or_bins", "statistic", "se", "t", "p"], rows)
    written.append(path)


def _stage_report(ctx, config, outdir, written):
    written.extend(report_mod.emit_report(ctx, outdir))


_STAGE_FNS = {
    "simulate": _stage_simulate,
    "shocks": _stage_shocks,
    "irf": _stage_irf,
    "fit": _stage_fit,
    "bootstrap": _stage_bootstrap,
    "panel": _stage_panel,
    "sorts": _stage_sorts,
    "adjustments": _stage_adjustments,
    "falsifications": _stage_falsifications,
    "report": _stage_report,
}


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def run_pipeline(config: RunConfig, version: str = "0.0.0") -> tuple[Path, dict]:
    """Execute the configured stages and write the provenance manifest.

    Returns (output directory, manifest dict). Dependency and configuration
    problems raise ValidationError subclasses before any stage runs; stage
    crashes are wrapped in StageError with the stage name.
    """
    _plan_resources(config)
    outdir = Path(config.out)
    outdir.mkdir(parents=True, exist_ok=True)

    dataset: Dataset = ingest(config)
    ctx: dict = {
        "sentiment": dataset.sentiment,
        "returns": dataset.market,
        "panel": dataset.panel,
    }

    manifest = RunManifest(config, version)
    written: list[Path] = []
    for stage in config.stages:
        fn = _STAGE_FNS[stage]
        t0 = time.perf_counter()
        try:
            fn(ctx, config, outdir, written)
        except StageError:
            raise
        except Exception as exc:
            raise StageError(stage, exc) from exc
        manifest.record_stage(stage, time.perf_counter() - t0)

    for path in written:
        manifest.record_output(outdir, path)
    manifest_path = manifest.write(outdir)
    written.append(manifest_path)
    return outdir, manifest.data
