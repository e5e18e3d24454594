"""Command-line interface.

    sentkit <subcommand> --config run.toml [--seed N] [--out DIR] [--threads N]

Each subcommand runs the named stage plus whatever upstream stages the
config makes runnable; `pipeline` runs the config's full stage list. Exit
codes: 0 success, 2 validation error, 3 stage error.
"""
from __future__ import annotations

import argparse
import sys

from . import __version__
from .config import CANONICAL_STAGES, STOCHASTIC_STAGES, RunConfig, load_config
from .errors import SchemaViolation, SentkitError, StageError, ValidationError
from .pipeline import run_pipeline

_SUBCOMMAND_STAGE = {
    "simulate": "simulate",
    "shocks": "shocks",
    "irf": "irf",
    "fit": "fit",
    "bootstrap": "bootstrap",
    "panel": "panel",
    "sort": "sorts",
    "adjust": "adjustments",
    "falsify": "falsifications",
    "report": "report",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sentkit",
        description="Simulation and estimation toolkit for feedback dynamics "
                    "in monthly return data.",
    )
    parser.add_argument("--version", action="version", version=f"sentkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (*_SUBCOMMAND_STAGE, "pipeline"):
        p = sub.add_parser(name, help=f"run the {name} stage" if name != "pipeline"
                           else "run every stage in the config")
        p.add_argument("--config", required=True, metavar="PATH",
                       help="TOML run configuration")
        p.add_argument("--seed", type=int, default=None, metavar="N",
                       help="master seed (overrides the config)")
        p.add_argument("--out", default=None, metavar="DIR",
                       help="output directory (overrides the config)")
        p.add_argument("--threads", type=int, default=1, metavar="N",
                       help="worker threads; results are identical at any count")
    return parser


def _stages_for(command: str, config: RunConfig) -> tuple[str, ...]:
    """The named stage plus the runnable upstream closure.

    simulate is pulled in only when the config declares a [simulate] block
    and no equivalent input file exists; estimation prerequisites (shocks,
    irf) join automatically when the target needs them.
    """
    if command == "pipeline":
        return config.stages
    target = _SUBCOMMAND_STAGE[command]
    wanted = {target}
    has_simulate = bool(config.block("simulate")) or (
        "simulate" in config.stages and not config.input_path("market"))

    def need_series():
        if config.input_path("sentiment"):
            wanted.add("shocks")
        elif has_simulate:
            wanted.add("simulate")

    if target in ("fit", "bootstrap"):
        wanted.add("irf")
    if target in ("irf", "falsifications") or "irf" in wanted:
        need_series()
    if target == "shocks" and not config.input_path("sentiment") and has_simulate:
        wanted.add("simulate")
    if target == "simulate":
        wanted.add("simulate")
    if target == "report":
        wanted.update(config.stages)
        wanted.add("report")
    if target == "panel":
        need_series()  # innovations to attach, when any source exists
    return tuple(s for s in CANONICAL_STAGES if s in wanted)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out"] = args.out

    try:
        config = load_config(args.config, overrides=overrides)
        stages = _stages_for(args.command, config)
        scheduled_stochastic = STOCHASTIC_STAGES.intersection(stages)
        if scheduled_stochastic and config.seed is None:
            raise SchemaViolation(
                f"stochastic stages {sorted(scheduled_stochastic)} require a seed")
        config = RunConfig(seed=config.seed, out=config.out, stages=stages,
                           inputs=config.inputs, blocks=config.blocks,
                           source_path=config.source_path, raw=config.raw)
        outdir, manifest = run_pipeline(config, version=__version__)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except SentkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3

    n_out = len(manifest["outputs"])
    print(f"wrote {n_out} file(s) to {outdir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
