"""
Command-line entry point.

Examples:
    loraee generate --gws 3 --eds 160 --seed 42 --out runs/s42
    loraee analyze --scenario runs/s42/scenario.yaml --policy sf12
    loraee optimize --scenario runs/s42/scenario.yaml --episodes 50 --out runs/s42/opt
    loraee compare --sweep eds --values 40 80 120 --seeds 0 1 2 --algorithms rcst adr eflora
    loraee validate --sweep ps --seeds 0 1 2
"""

import argparse
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any, NoReturn

from pydantic import ValidationError

from loraee import core
from loraee.allocators import ALLOCATORS
from loraee.domain.schemas import ChannelPlan, ExperimentConfig, MaacHyperparams, NetworkScenario
from loraee.exceptions import LoraEEException, NumericalDivergenceError
from loraee.io import load_config, load_scenario
from loraee.maac.checkpoint import load_bundles
from loraee.utils.logging import logger, setup_logging

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2
EXIT_DIVERGED = 3

# CLI flag -> MaacHyperparams field
HYPERPARAM_FLAGS = {
    "episodes": "episodes",
    "slots": "slots_per_episode",
    "buffer": "buffer_size",
    "batch": "batch_size",
    "lr": "learning_rate",
    "discount": "discount",
    "target_rate": "target_rate",
    "heads_count": "heads",
    "temperature": "temperature",
    "levels": "power_levels",
    "update_every": "update_every",
    "attention": "attention",
    "denominator": "reward_denominator",
}


class LoraeeArgumentParser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with code 1."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def non_negative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _global_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="Experiment config YAML.")
    common.add_argument("--seed", type=int, help="Master seed (default: first seed of the config, else 0).")
    common.add_argument("--out", type=Path, help="Output directory (default: config output_dir).")
    common.add_argument("--workers", type=positive_int, help="Worker processes for independent jobs.")
    common.add_argument("--format", choices=("csv", "json"), dest="output_format", help="Table format.")
    common.add_argument("--log-level", help="Overrides LORAEE_LOG_LEVEL.")
    return common


def _scenario_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", type=Path, help="Scenario YAML (default: config scenario_path).")
    p.add_argument("--channels", type=positive_int, help="Number of channels C.")
    p.add_argument("--bandwidth", type=float, help="Channel bandwidth in Hz (125e3, 250e3 or 500e3).")
    p.add_argument("--quota", type=positive_int, help="Max EDs per channel (default ceil(N/C)).")
    p.add_argument("--fading", choices=("expected-fading", "mean-fading"), help="Capture-probability reading.")


def _assignment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--assignment", type=Path, help="Assignment CSV (ed_id, channel, sf, tp_dbm).")
    p.add_argument("--policy", default="distance", choices=core.ASSIGNMENT_POLICIES, help="Used without --assignment.")


def _hyperparam_flags(p: argparse.ArgumentParser, with_dth: bool = True) -> None:
    g = p.add_argument_group("training hyperparameters")
    g.add_argument("--episodes", type=positive_int)
    g.add_argument("--slots", type=positive_int, help="Slots per episode.")
    g.add_argument("--buffer", type=positive_int, help="Replay buffer capacity.")
    g.add_argument("--batch", type=positive_int, help="Mini-batch size.")
    g.add_argument("--lr", type=float, help="Learning rate.")
    g.add_argument("--discount", type=float)
    g.add_argument("--target-rate", type=float, dest="target_rate")
    g.add_argument("--attention-heads", type=positive_int, dest="heads_count")
    g.add_argument("--temperature", type=float)
    g.add_argument("--levels", type=positive_int, help="Number of TP levels J.")
    g.add_argument("--update-every", type=positive_int, dest="update_every")
    g.add_argument("--attention", choices=("learned", "uniform"))
    g.add_argument("--denominator", choices=("group", "total"), help="N in the reward's counterfactual term.")
    if with_dth:
        g.add_argument("--dth", type=float, help="PDR threshold D_th.")


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = LoraeeArgumentParser(
        prog="loraee", description="Energy-efficiency modelling and CH/SF/TP optimisation for multi-gateway LoRa."
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=LoraeeArgumentParser)

    p = sub.add_parser("generate", parents=[common], help="Draw a random scenario.")
    p.add_argument("--gws", type=positive_int, required=True)
    p.add_argument("--eds", type=non_negative_int, required=True)
    p.add_argument("--area", type=float, default=20_000.0, help="Side of the square area in meters.")
    p.add_argument("--spacing", type=float, default=12_000.0, help="Minimum GW spacing in meters.")
    p.add_argument("--radius", type=float, default=12_000.0, help="Cell radius in meters.")

    p = sub.add_parser("analyze", parents=[common], help="Analytical PDR / EE of an assignment.")
    _scenario_flags(p)
    _assignment_flags(p)

    p = sub.add_parser("simulate", parents=[common], help="Monte-Carlo PDR / EE of an assignment.")
    _scenario_flags(p)
    _assignment_flags(p)
    p.add_argument("--packets", type=positive_int, help="Target packets per ED.")
    p.add_argument("--replications", type=positive_int)
    p.add_argument("--trace", action="store_true", help="Also write the per-packet trace of replication 0.")

    p = sub.add_parser("match", parents=[common], help="Swap-matching channel assignment.")
    _scenario_flags(p)

    p = sub.add_parser("train", parents=[common], help="Matching, then MAAC training; writes a checkpoint.")
    _scenario_flags(p)
    _hyperparam_flags(p)

    p = sub.add_parser("optimize", parents=[common], help="Full two-stage pipeline with evaluation.")
    _scenario_flags(p)
    _hyperparam_flags(p)
    p.add_argument("--checkpoint", type=Path, help="Reuse a trained policy instead of training.")
    p.add_argument("--packets", type=positive_int)
    p.add_argument("--replications", type=positive_int)

    p = sub.add_parser("compare", parents=[common], help="MMALoRa against the baselines on identical seeds.")
    _scenario_flags(p)
    _hyperparam_flags(p, with_dth=False)
    p.add_argument("--sweep", choices=("eds", "gws"), help="Generate one scenario per value instead of --scenario.")
    p.add_argument("--values", type=positive_int, nargs="+", default=[])
    p.add_argument("--gws", type=positive_int, default=3, help="GW count for an ED sweep.")
    p.add_argument("--eds", type=positive_int, default=100, help="ED count for a GW sweep.")
    p.add_argument("--seeds", type=int, nargs="+")
    p.add_argument("--algorithms", nargs="+", choices=sorted(ALLOCATORS), default=list(core.DEFAULT_ALGORITHMS))
    p.add_argument("--heads", type=positive_int, nargs="+", default=[], help="Extra mmalora-h{n} variants.")
    p.add_argument("--dth", type=float, nargs="+", default=[], help="Extra mmalora@{dth} variants.")
    p.add_argument("--checkpoint", type=Path, help="Trained policy for the mmalora entry (scenario mode).")
    p.add_argument("--gnuplot", action="store_true", help="Also write a gnuplot script.")

    p = sub.add_parser("validate", parents=[common], help="Analytical vs simulated PDR (MAE with 95% CI).")
    p.add_argument("--sweep", choices=("eds", "gws", "ps"), required=True)
    p.add_argument("--values", nargs="+", help="Defaults: eds 60 100 160, gws 2 3 4, ps ps1 ps2 ps3.")
    p.add_argument("--gws", type=positive_int, default=3)
    p.add_argument("--eds", type=positive_int, default=160)
    p.add_argument("--seeds", type=int, nargs="+")
    p.add_argument("--packets", type=positive_int)
    p.add_argument("--replications", type=positive_int)
    p.add_argument("--fading", choices=("expected-fading", "mean-fading"))
    return parser


VALIDATE_DEFAULTS: dict[str, list[Any]] = {
    "eds": [60, 100, 160],
    "gws": [2, 3, 4],
    "ps": ["ps1", "ps2", "ps3"],
}


# -------------------------------------------------------------------
#  Argument resolution
# -------------------------------------------------------------------


def _first(*values: Any) -> Any:
    return next((v for v in values if v is not None), None)


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    updates: dict[str, Any] = {}
    for flag, field_name in (
        ("channels", "channel_count"),
        ("bandwidth", "bandwidth_hz"),
        ("quota", "quota"),
        ("out", "output_dir"),
        ("workers", "workers"),
        ("output_format", "output_format"),
        ("fading", "fading_mode"),
        ("packets", "packets_per_ed"),
        ("replications", "replications"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            updates[field_name] = value
    if isinstance(getattr(args, "dth", None), float):
        updates["pdr_threshold"] = args.dth
    if getattr(args, "seeds", None):
        updates["seeds"] = args.seeds
    return ExperimentConfig.model_validate({**config.model_dump(), **updates})


def resolve_hyperparams(args: argparse.Namespace, config: ExperimentConfig) -> MaacHyperparams:
    overrides = {
        field: getattr(args, flag) for flag, field in HYPERPARAM_FLAGS.items() if getattr(args, flag, None) is not None
    }
    overrides["pdr_threshold"] = config.pdr_threshold
    return MaacHyperparams.model_validate({**config.hyperparams.model_dump(), **overrides})


def resolve_scenario(args: argparse.Namespace, config: ExperimentConfig, parser: argparse.ArgumentParser) -> NetworkScenario:
    path = _first(getattr(args, "scenario", None), config.scenario_path)
    if path is None:
        parser.error(f"{args.command} needs --scenario or a config with scenario_path")
    return load_scenario(Path(path))


def make_context(args: argparse.Namespace, config: ExperimentConfig, extra: dict[str, Any]) -> core.RunContext:
    seed = _first(args.seed, config.seeds[0])
    inputs = [p for p in (getattr(args, "scenario", None) or config.scenario_path, args.config) if p is not None]
    for name in ("assignment", "checkpoint"):
        if getattr(args, name, None) is not None:
            inputs.append(getattr(args, name))
    return core.RunContext(
        command=args.command,
        out_dir=config.output_dir,
        seed=int(seed),
        output_format=config.output_format,
        workers=config.workers,
        config={**config.model_dump(mode="json", exclude={"scenario_path", "output_dir", "workers"}), **extra},
        input_files=[Path(p) for p in inputs],
    )


def _plan(config: ExperimentConfig, scenario: NetworkScenario) -> ChannelPlan:
    return config.plan_for(scenario.ed_count)


# -------------------------------------------------------------------
#  Dispatch
# -------------------------------------------------------------------


def dispatch(args: argparse.Namespace, parser: argparse.ArgumentParser) -> None:
    config = resolve_config(args)
    cmd = args.command

    if cmd == "generate":
        ctx = make_context(
            args,
            config,
            {"gws": args.gws, "eds": args.eds, "area": args.area, "spacing": args.spacing, "radius": args.radius},
        )
        core.cmd_generate(ctx, args.gws, args.eds, args.area, args.spacing, args.radius)
        return

    if cmd == "validate":
        values = args.values or VALIDATE_DEFAULTS[args.sweep]
        if args.sweep != "ps":
            try:
                values = [int(v) for v in values]
            except ValueError:
                parser.error(f"--values must be integers for the '{args.sweep}' sweep")
        ctx = make_context(args, config, {"sweep": args.sweep, "values": values, "gws": args.gws, "eds": args.eds})
        core.cmd_validate(
            ctx,
            args.sweep,
            values,
            config.seeds,
            args.gws,
            args.eds,
            config.packets_per_ed,
            config.replications,
            config.fading_mode,
        )
        return

    if cmd == "compare":
        hp = resolve_hyperparams(args, config)
        scenario = None
        if args.sweep is None:
            scenario = resolve_scenario(args, config, parser)
        elif not args.values:
            parser.error("--sweep needs --values")
        elif args.checkpoint is not None:
            parser.error("--checkpoint applies to a single --scenario, not to a --sweep")
        bundles = load_bundles(args.checkpoint) if args.checkpoint else None
        allocators = core.build_allocators(args.algorithms, hp, args.heads, args.dth, bundles, config.fading_mode)
        ctx = make_context(
            args,
            config,
            {
                "algorithms": [a.name for a in allocators],
                "sweep": args.sweep,
                "values": args.values,
                "hyperparams": hp.model_dump(mode="json"),
            },
        )
        core.cmd_compare(
            ctx,
            allocators,
            config.seeds,
            scenario,
            args.sweep,
            args.values,
            args.gws,
            args.eds,
            config.channel_count,
            config.bandwidth_hz,
            config.quota,
            config.fading_mode,
            args.gnuplot,
        )
        return

    scenario = resolve_scenario(args, config, parser)
    plan = _plan(config, scenario)

    if cmd in ("analyze", "simulate"):
        ctx = make_context(args, config, {"policy": args.policy})
        assignment = core.resolve_assignment(scenario, plan, ctx.seed, args.assignment, args.policy)
        if cmd == "analyze":
            core.cmd_analyze(ctx, scenario, plan, assignment, config.fading_mode)
        else:
            core.cmd_simulate(
                ctx, scenario, plan, assignment, config.packets_per_ed, config.replications, config.fading_mode, args.trace
            )
    elif cmd == "match":
        core.cmd_match(make_context(args, config, {}), scenario, plan, config.fading_mode)
    elif cmd == "train":
        hp = resolve_hyperparams(args, config)
        ctx = make_context(args, config, {"hyperparams": hp.model_dump(mode="json")})
        core.cmd_train(ctx, scenario, plan, hp, config.fading_mode)
    elif cmd == "optimize":
        hp = resolve_hyperparams(args, config)
        ctx = make_context(args, config, {"hyperparams": hp.model_dump(mode="json")})
        core.cmd_optimize(
            ctx, scenario, plan, hp, config.fading_mode, args.checkpoint, config.packets_per_ed, config.replications
        )


def run(argv: Sequence[str] | None = None) -> int:
    """Parses, dispatches and maps failures to exit codes (1 usage, 2 infeasible input, 3 divergence)."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.log_level:
        setup_logging(args.log_level)
    try:
        dispatch(args, parser)
    except NumericalDivergenceError as e:
        logger.error(f"Training diverged: {e}")
        return EXIT_DIVERGED
    except (LoraEEException, ValidationError) as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_INFEASIBLE
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
