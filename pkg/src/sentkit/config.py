"""Run configuration: one declarative TOML file drives a whole run.

Grammar (all sections optional unless a scheduled stage needs them):

    seed = 42                     # master seed, required for stochastic stages
    out = "runs/demo"             # output directory
    stages = ["simulate", "shocks", "irf", "fit", "report"]

    [inputs]
    sentiment = "sentiment.csv"   # month,value
    market = "market.csv"         # month,ret
    panel = "panel.csv"           # firm_id,month,ret,...
    ret_units = "decimal"         # or "bps" (divided by 1e4 at ingest)
    quarterly_carry = ["breadth"] # columns carried from quarter to months

    [simulate]                    # synthetic series instead of input files
    kappa_bps = 1.06
    rho = 0.94
    T = 420
    start_month = "1990-01"
    burn_in = 120

    [shocks]   hac_lag, demean, flip
    [irf]      horizons, mode, min_obs, cross_cov, block_len, joint_draws
    [fit]      method, convention
    [bootstrap] B, method, convention, level
    [panel]    depvar, regressors, fixed_effects, cluster, horizons,
               attach_shocks, tag_regimes
    [sort]     signal, n_buckets, weighting, universe_col, skip_month,
               cost_bps_oneway, me_col
    [adjust]   B, hypotheses = [{label, depvar, regressors, tested}, ...],
               fixed_effects, cluster
    [falsify]  horizons, bins, B

Unknown keys are rejected so typos fail loudly.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import SchemaViolation

CANONICAL_STAGES = (
    "simulate", "shocks", "irf", "fit", "bootstrap",
    "panel", "sorts", "adjustments", "falsifications", "report",
)

# subcommand aliases accepted in stage lists
_STAGE_ALIASES = {
    "sort": "sorts",
    "adjust": "adjustments",
    "falsify": "falsifications",
}

STOCHASTIC_STAGES = frozenset({"simulate", "bootstrap", "adjustments", "falsifications"})

_TOP_KEYS = {"seed", "out", "stages", "threads", "inputs"} | set(CANONICAL_STAGES) | {
    "sort", "adjust", "falsify",
}
_INPUT_KEYS = {"sentiment", "market", "panel", "factors", "ret_units", "quarterly_carry"}


@dataclass(frozen=True)
class RunConfig:
    seed: int | None
    out: Path
    stages: tuple[str, ...]
    inputs: dict
    blocks: dict
    source_path: Path | None = None
    raw: dict = field(default_factory=dict, repr=False)

    def block(self, name: str) -> dict:
        return dict(self.blocks.get(name, {}))

    def input_path(self, key: str) -> Path | None:
        value = self.inputs.get(key)
        return None if value is None else Path(value)


def _canonical_stage(name: str) -> str:
    name = _STAGE_ALIASES.get(name, name)
    if name not in CANONICAL_STAGES:
        raise SchemaViolation(f"unknown stage {name!r}; valid: {', '.join(CANONICAL_STAGES)}")
    return name


def load_config(path: str | Path | None = None, overrides: dict | None = None,
                data: dict | None = None) -> RunConfig:
    """Parse and validate a config file (or an already-parsed dict).

    ``overrides`` (seed/out/threads, from CLI flags) win over file values.
    Referenced input files must exist; stochastic stages demand a seed.
    """
    if data is None:
        if path is None:
            raise SchemaViolation("a config file is required")
        path = Path(path)
        if not path.exists():
            raise SchemaViolation(f"config file {path} does not exist")
        with open(path, "rb") as fh:
            try:
                data = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise SchemaViolation(f"config parse error: {exc}") from exc
        source = path
    else:
        source = Path(path) if path is not None else None

    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise SchemaViolation(f"unknown config keys: {sorted(unknown)}")
    inputs = dict(data.get("inputs", {}))
    bad_inputs = set(inputs) - _INPUT_KEYS
    if bad_inputs:
        raise SchemaViolation(f"unknown [inputs] keys: {sorted(bad_inputs)}")

    overrides = overrides or {}
    seed = overrides.get("seed", data.get("seed"))
    if seed is not None and not isinstance(seed, int):
        raise SchemaViolation("seed must be an integer")
    out = Path(overrides.get("out") or data.get("out", "out"))

    raw_stages = data.get("stages")
    if raw_stages is None:
        stages = tuple(s for s in CANONICAL_STAGES)
    else:
        if not isinstance(raw_stages, list) or not raw_stages:
            raise SchemaViolation("stages must be a nonempty list")
        stages = tuple(_canonical_stage(str(s)) for s in raw_stages)
    # run in canonical order regardless of listing order
    stages = tuple(s for s in CANONICAL_STAGES if s in set(stages))

    blocks = {}
    for key in CANONICAL_STAGES:
        alias = {v: k for k, v in _STAGE_ALIASES.items()}.get(key)
        block = data.get(key, data.get(alias, {}) if alias else {})
        if block:
            blocks[key] = dict(block)

    for key in ("sentiment", "market", "panel"):
        value = inputs.get(key)
        if value is not None:
            base = source.parent if source is not None else Path(".")
            resolved = (base / value) if not Path(value).is_absolute() else Path(value)
            if not resolved.exists():
                raise SchemaViolation(f"input file {resolved} does not exist")
            inputs[key] = str(resolved)

    units = inputs.get("ret_units", "decimal")
    if units not in ("decimal", "bps"):
        raise SchemaViolation("ret_units must be 'decimal' or 'bps'")

    scheduled_stochastic = STOCHASTIC_STAGES.intersection(stages)
    if scheduled_stochastic and seed is None:
        raise SchemaViolation(
            f"stochastic stages {sorted(scheduled_stochastic)} require a seed")

    return RunConfig(seed=seed, out=out, stages=stages, inputs=inputs,
                     blocks=blocks, source_path=source, raw=data)
