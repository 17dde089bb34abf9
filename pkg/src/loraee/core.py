"""
Experiment pipelines behind the CLI subcommands.

Every pipeline receives a `RunContext` (command, seed, output directory and
format) and writes its tables plus a `.meta.json` sidecar per table. Stage
errors are re-raised with a `[stage]` prefix and their original type.
"""

import math
from collections import defaultdict
from collections.abc import Iterator, Mapping, Sequence
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal

import numpy as np
from tqdm import tqdm

from loraee.allocators import ALLOCATORS, Allocation, MmaloraAllocator, get_allocator
from loraee.allocators.base_allocator import BaseAllocator, round_robin_channels
from loraee.analytical import AnalyticalModel, EeReport, mae
from loraee.domain.constraints import validate_assignment
from loraee.domain.radio import default_sf_by_distance
from loraee.domain.scenario import generate_scenario
from loraee.domain.schemas import (
    AggregateRow,
    AlgorithmResult,
    Assignment,
    ChannelPlan,
    EdRecord,
    MaacHyperparams,
    NetworkScenario,
    ResultBundle,
    SimStats,
)
from loraee.exceptions import LoraEEException, SchemaLogicError
from loraee.io import (
    ASSIGNMENT_COLUMNS,
    OutputFormat,
    load_assignment,
    save_json,
    save_positions,
    save_scenario,
    write_gnuplot,
    write_meta,
    write_table,
)
from loraee.maac.bundle import AgentBundle
from loraee.maac.checkpoint import load_bundles, save_bundles
from loraee.maac.trainer import TrainingResult, execute_policy, train
from loraee.matching import MatchingRun, run_matching
from loraee.simulator import horizon_for_packets, run_simulation, simulate_once
from loraee.typing import FadingMode
from loraee.utils.hashing import derive_seed, generate_config_hash, generate_run_hash, get_file_hash
from loraee.utils.logging import logger
from loraee.utils.stats import mean_confidence_interval

Sweep = Literal["eds", "gws", "ps"]

# SF, bandwidth (Hz), coding rate denominator
PARAMETER_SETTINGS: dict[str, tuple[int, float, int]] = {
    "ps1": (7, 500e3, 5),
    "ps2": (12, 125e3, 8),
    "ps3": (12, 125e3, 5),
}
ASSIGNMENT_POLICIES = ("distance", "sf12", *sorted(k for k in ALLOCATORS if not k.startswith("mmalora")))
DEFAULT_ALGORITHMS = ("mmalora", "adr", "eflora", "rcst")


# -------------------------------------------------------------------
#  Run context and stages
# -------------------------------------------------------------------


@dataclass
class RunContext:
    """Identity and output settings shared by every table a command writes."""

    command: str
    out_dir: Path
    seed: int = 0
    output_format: OutputFormat = "csv"
    workers: int = 1
    config: dict[str, Any] = field(default_factory=dict)
    input_files: list[Path] = field(default_factory=list)
    written: list[Path] = field(default_factory=list)

    @property
    def config_hash(self) -> str:
        return generate_config_hash({"command": self.command, "seed": self.seed, **self.config})

    @property
    def run_hash(self) -> str:
        hashes = [get_file_hash(p) for p in self.input_files] + [self.config_hash]
        return generate_run_hash(self.command, hashes, self.seed)

    def meta_extra(self, extra: Mapping[str, Any] | None = None) -> dict[str, Any]:
        return {"input_files": [p.name for p in self.input_files], **(extra or {})}

    def path(self, name: str, suffix: str | None = None) -> Path:
        return self.out_dir / f"{name}.{suffix or self.output_format}"

    def emit(
        self,
        name: str,
        rows: Sequence[Mapping[str, Any]],
        columns: Sequence[str],
        extra: Mapping[str, Any] | None = None,
    ) -> Path:
        """Writes one table in the run's format and its metadata sidecar."""
        path = write_table(rows, self.path(name), columns)
        write_meta(path, self.command, self.config_hash, self.seed, self.run_hash, self.meta_extra(extra))
        self.written.append(path)
        logger.info(f"Wrote {len(rows)} rows to {path}")
        return path

    def emit_json(self, name: str, data: Mapping[str, Any]) -> Path:
        path = self.path(name, "json")
        save_json(data, path)
        write_meta(path, self.command, self.config_hash, self.seed, self.run_hash, self.meta_extra())
        self.written.append(path)
        return path


@contextmanager
def stage(name: str) -> Iterator[None]:
    """Logs stage banners and tags any package error with the stage name, keeping its type."""
    logger.info(f"--- Starting stage '{name}' ---")
    try:
        yield
    except LoraEEException as e:
        logger.error(f"Stage '{name}' failed: {e}")
        raise type(e)(f"[{name}] {e}") from e
    logger.info(f"--- Stage '{name}' Complete ---")


@contextmanager
def pipeline(ctx: RunContext) -> Iterator[None]:
    logger.info(f"--- Starting loraee '{ctx.command}' (seed {ctx.seed}) ---")
    ctx.out_dir.mkdir(parents=True, exist_ok=True)
    logger.info(f"Run hash: '{ctx.run_hash}'")
    yield
    logger.info(f"--- '{ctx.command}' Complete. {len(ctx.written)} files written to {ctx.out_dir} ---")


# -------------------------------------------------------------------
#  Assignment helpers
# -------------------------------------------------------------------


def fixed_assignment(
    scenario: NetworkScenario, plan: ChannelPlan, sf: int | None = None, tp_dbm: float | None = None
) -> Assignment:
    """
    Round-robin channels with one SF for everyone (or the distance table) and one TP (p_max by default).
    """
    n = scenario.ed_count
    channels = round_robin_channels(n, plan)
    if sf is None:
        sfs = np.array(
            [default_sf_by_distance(float(d), scenario.cell_radius_m) for d in scenario.nearest_gw_distance()],
            dtype=np.int64,
        )
    else:
        sfs = np.full(n, sf, dtype=np.int64)
    tps = np.full(n, scenario.tp_max_dbm if tp_dbm is None else tp_dbm)
    return Assignment.from_arrays(channels, sfs, tps)


def resolve_assignment(
    scenario: NetworkScenario,
    plan: ChannelPlan,
    seed: int,
    assignment_path: Path | None = None,
    policy: str = "distance",
) -> Assignment:
    """An assignment from a CSV file, or produced by a named policy or baseline allocator."""
    if assignment_path is not None:
        assignment = load_assignment(assignment_path)
    elif policy == "distance":
        assignment = fixed_assignment(scenario, plan)
    elif policy == "sf12":
        assignment = fixed_assignment(scenario, plan, sf=12)
    elif policy in ALLOCATORS and not policy.startswith("mmalora"):
        assignment = get_allocator(policy).allocate(scenario, plan, seed).assignment
    else:
        raise SchemaLogicError(f"Unknown assignment policy '{policy}'. Choices: {', '.join(ASSIGNMENT_POLICIES)}")
    return validate_assignment(assignment, scenario, plan)


def ed_records(assignment: Assignment, report: EeReport) -> list[EdRecord]:
    return [
        EdRecord(
            ed_id=i,
            channel=assignment.channels[i],
            sf=assignment.sfs[i],
            tp_dbm=assignment.tps_dbm[i],
            pdr=float(report.pdr.multi_gw[i]),
            ee_bits_per_joule=float(report.per_ed[i]),
        )
        for i in range(assignment.ed_count)
    ]


ED_COLUMNS = ("ed_id", "channel", "sf", "tp_dbm", "pdr", "ee_bits_per_joule")


def assignment_rows(assignment: Assignment) -> list[dict[str, Any]]:
    return [
        {"ed_id": i, "channel": c, "sf": m, "tp_dbm": float(p)}
        for i, (c, m, p) in enumerate(zip(assignment.channels, assignment.sfs, assignment.tps_dbm, strict=True))
    ]


# -------------------------------------------------------------------
#  generate / analyze / simulate
# -------------------------------------------------------------------


def cmd_generate(
    ctx: RunContext,
    gw_count: int,
    ed_count: int,
    area_m: float = 20_000.0,
    min_gw_spacing_m: float = 12_000.0,
    cell_radius_m: float = 12_000.0,
    **scenario_fields: Any,
) -> NetworkScenario:
    """Writes `scenario.yaml` and a positions table for plotting."""
    with pipeline(ctx), stage("generate"):
        scenario = generate_scenario(
            ctx.seed, gw_count, ed_count, area_m, min_gw_spacing_m, cell_radius_m, **scenario_fields
        )
        path = ctx.out_dir / "scenario.yaml"
        save_scenario(scenario, path)
        ctx.written.append(path)
        positions = save_positions(scenario, ctx.path("positions"))
        write_meta(positions, ctx.command, ctx.config_hash, ctx.seed, ctx.run_hash, ctx.meta_extra())
        ctx.written.append(positions)
    return scenario


def cmd_analyze(
    ctx: RunContext,
    scenario: NetworkScenario,
    plan: ChannelPlan,
    assignment: Assignment,
    fading_mode: FadingMode = "expected-fading",
) -> EeReport:
    """Per-(ED, GW) PDR, per-ED PDR/EE and the channel/system EE summary."""
    with pipeline(ctx), stage("analytical"):
        validate_assignment(assignment, scenario, plan)
        report = AnalyticalModel(scenario, plan, fading_mode).evaluate(assignment)
        d = scenario.distances()
        gw_rows = [
            {"ed_id": i, "gw_id": k, "d_m": float(d[i, k]), "pdr_gw": float(report.pdr.per_gw[i, k])}
            for i in range(scenario.ed_count)
            for k in range(scenario.gw_count)
        ]
        ctx.emit("pdr_per_gw", gw_rows, ("ed_id", "gw_id", "d_m", "pdr_gw"))
        ctx.emit("analysis", [r.model_dump() for r in ed_records(assignment, report)], ED_COLUMNS)
        ctx.emit_json(
            "analysis_summary",
            {
                "system_ee": report.system,
                "per_channel_ee": [float(x) for x in report.per_channel],
                "mean_pdr": float(report.pdr.multi_gw.mean()) if scenario.ed_count else 0.0,
                "fading_mode": fading_mode,
            },
        )
        logger.info(f"System EE {report.system:.6g} bit/J")
    return report


def _trace_rows(
    scenario: NetworkScenario, plan: ChannelPlan, assignment: Assignment, horizon: float, seed: int
) -> Iterator[dict[str, Any]]:
    """Per-packet rows of the first replication (same child seed as `run_simulation`)."""
    first = np.random.SeedSequence(seed).spawn(1)[0]
    rep = simulate_once(scenario, plan, assignment, horizon, first)
    ok = rep.outcome.ok
    delivered = rep.outcome.delivered()
    for e in range(len(rep.trace)):
        yield {
            "ed_id": int(rep.trace.ed_id[e]),
            "start_s": float(rep.trace.start_s[e]),
            "end_s": float(rep.trace.start_s[e] + rep.trace.toa_s[e]),
            "channel": int(rep.trace.channel[e]),
            "sf": int(rep.trace.sf[e]),
            "tp_dbm": float(rep.trace.tp_dbm[e]),
            "delivered": int(delivered[e]),
            "gateways_ok": ";".join(str(k) for k in np.flatnonzero(ok[e])),
        }


def cmd_simulate(
    ctx: RunContext,
    scenario: NetworkScenario,
    plan: ChannelPlan,
    assignment: Assignment,
    packets_per_ed: int = 10_000,
    replications: int = 1,
    fading_mode: FadingMode = "expected-fading",
    trace: bool = False,
) -> SimStats:
    """Monte-Carlo PDR/EE per ED next to the analytical values."""
    with pipeline(ctx):
        with stage("simulation"):
            validate_assignment(assignment, scenario, plan)
            horizon = horizon_for_packets(scenario, plan, assignment, packets_per_ed)
            stats = run_simulation(scenario, plan, assignment, horizon, replications, ctx.seed, ctx.workers)
        with stage("evaluation"):
            report = AnalyticalModel(scenario, plan, fading_mode).evaluate(assignment)
            rows = [
                {
                    "ed_id": i,
                    "sent": stats.sent[i],
                    "delivered": stats.delivered[i],
                    "pdr_hat": stats.pdr_hat[i],
                    "ee_hat": stats.ee_hat[i],
                    "pdr": float(report.pdr.multi_gw[i]),
                    "ee_bits_per_joule": float(report.per_ed[i]),
                }
                for i in range(scenario.ed_count)
            ]
            under = scenario.ed_count > 0 and stats.min_sent < 100
            ctx.emit(
                "simulation",
                rows,
                ("ed_id", "sent", "delivered", "pdr_hat", "ee_hat", "pdr", "ee_bits_per_joule"),
                extra={"horizon_s": horizon, "replications": replications, "under_sampled": under},
            )
            ctx.emit_json(
                "simulation_summary",
                {
                    "system_ee_hat": float(sum(stats.ee_hat)),
                    "system_ee": report.system,
                    "mae_pdr": mae(report.pdr.multi_gw, stats.pdr_hat),
                    "min_sent": stats.min_sent if scenario.ed_count else 0,
                    "under_sampled": under,
                    "horizon_s": horizon,
                },
            )
            if trace:
                ctx.emit(
                    "trace",
                    list(_trace_rows(scenario, plan, assignment, horizon, ctx.seed)),
                    ("ed_id", "start_s", "end_s", "channel", "sf", "tp_dbm", "delivered", "gateways_ok"),
                )
    return stats


# -------------------------------------------------------------------
#  match / train / optimize
# -------------------------------------------------------------------


def _emit_matching(ctx: RunContext, run: MatchingRun) -> None:
    ctx.emit(
        "matching",
        [{"ed_id": i, "channel": c} for i, c in enumerate(run.matching.channel_of)],
        ("ed_id", "channel"),
        extra={"converged": run.converged, "scans": run.scans, "system_ee": run.system_ee},
    )
    ctx.emit(
        "swaps",
        [
            {
                "iteration": s.iteration,
                "i": s.ed_a,
                "i_prime": s.ed_b,
                "c": s.channel_a,
                "c_prime": s.channel_b,
                "ee_before": s.ee_before,
                "ee_after": s.ee_after,
            }
            for s in run.swaps
        ],
        ("iteration", "i", "i_prime", "c", "c_prime", "ee_before", "ee_after"),
    )


def cmd_match(
    ctx: RunContext, scenario: NetworkScenario, plan: ChannelPlan, fading_mode: FadingMode = "expected-fading"
) -> MatchingRun:
    with pipeline(ctx), stage("matching"):
        run = run_matching(scenario, plan, ctx.seed, fading_mode, progress=True)
        _emit_matching(ctx, run)
    return run


CURVE_COLUMNS = ("episode", "mean_reward", "system_ee", "actor_loss", "critic_loss")


def _train_stages(
    ctx: RunContext, scenario: NetworkScenario, plan: ChannelPlan, hp: MaacHyperparams, fading_mode: FadingMode
) -> TrainingResult:
    with stage("matching"):
        run = run_matching(scenario, plan, ctx.seed, fading_mode, progress=True)
        _emit_matching(ctx, run)
    with stage("maac"):
        result = train(scenario, plan, run.matching, hp, ctx.seed, fading_mode, ctx.workers)
        ctx.emit(
            "curve",
            [p.model_dump() for p in result.curve],
            CURVE_COLUMNS,
            extra={"hyperparams": hp.model_dump(mode="json")},
        )
        manifest = save_bundles(result.bundles, ctx.out_dir / "checkpoint.npz")
        ctx.written.append(manifest)
    return result


def cmd_train(
    ctx: RunContext,
    scenario: NetworkScenario,
    plan: ChannelPlan,
    hp: MaacHyperparams,
    fading_mode: FadingMode = "expected-fading",
) -> TrainingResult:
    """Matching, then MAAC training; writes the checkpoint and the learning curve."""
    with pipeline(ctx):
        return _train_stages(ctx, scenario, plan, hp, fading_mode)


def cmd_optimize(
    ctx: RunContext,
    scenario: NetworkScenario,
    plan: ChannelPlan,
    hp: MaacHyperparams,
    fading_mode: FadingMode = "expected-fading",
    checkpoint: Path | None = None,
    packets_per_ed: int = 10_000,
    replications: int = 1,
) -> Assignment:
    """
    Full two-stage pipeline: matching, MAAC training (or a loaded checkpoint),
    greedy execution, then analytical and simulated evaluation.
    """
    with pipeline(ctx):
        if checkpoint is None:
            bundles = _train_stages(ctx, scenario, plan, hp, fading_mode).bundles
        else:
            with stage("checkpoint"):
                bundles = load_bundles(checkpoint)
        with stage("execution"):
            assignment = execute_policy(bundles, scenario, plan, fading_mode=fading_mode)
            validate_assignment(assignment, scenario, plan)
            ctx.emit("assignment", assignment_rows(assignment), ASSIGNMENT_COLUMNS)
        with stage("evaluation"):
            report = AnalyticalModel(scenario, plan, fading_mode).evaluate(assignment)
            horizon = horizon_for_packets(scenario, plan, assignment, packets_per_ed)
            stats = run_simulation(scenario, plan, assignment, horizon, replications, ctx.seed, ctx.workers)
            rows = [
                {**rec.model_dump(), "pdr_hat": stats.pdr_hat[rec.ed_id], "ee_hat": stats.ee_hat[rec.ed_id]}
                for rec in ed_records(assignment, report)
            ]
            flagged = [r["ed_id"] for r in rows if r["pdr"] < hp.pdr_threshold]
            ctx.emit("evaluation", rows, (*ED_COLUMNS, "pdr_hat", "ee_hat"))
            ctx.emit_json(
                "evaluation_summary",
                {
                    "system_ee": report.system,
                    "system_ee_hat": float(sum(stats.ee_hat)),
                    "mean_pdr": float(report.pdr.multi_gw.mean()) if scenario.ed_count else 0.0,
                    "mean_pdr_hat": float(np.mean(stats.pdr_hat)) if scenario.ed_count else 0.0,
                    "pdr_threshold": hp.pdr_threshold,
                    "flagged": flagged,
                },
            )
    return assignment


# -------------------------------------------------------------------
#  compare
# -------------------------------------------------------------------


@dataclass(frozen=True)
class CompareCell:
    seed: int
    x_name: str
    x_value: float
    scenario: NetworkScenario
    plan: ChannelPlan
    allocators: tuple[BaseAllocator, ...]
    fading_mode: FadingMode


def build_allocators(
    algorithms: Sequence[str],
    hp: MaacHyperparams,
    heads: Sequence[int] = (),
    thresholds: Sequence[float] = (),
    bundles: list[AgentBundle] | None = None,
    fading_mode: FadingMode = "expected-fading",
) -> list[BaseAllocator]:
    """
    Instantiates the algorithms to compare.

    Head counts add `mmalora-h{n}` variants and PDR thresholds add `mmalora@{dth}`
    variants, each trained separately.
    """
    allocators: list[BaseAllocator] = []
    for name in algorithms:
        if name == "mmalora":
            allocators.append(MmaloraAllocator(hp, fading_mode, bundles=bundles))
        elif name == "mmalora-u":
            allocators.append(get_allocator(name, hyperparams=hp, fading_mode=fading_mode))
        elif name == "eflora":
            allocators.append(get_allocator(name, levels=hp.power_levels, fading_mode=fading_mode))
        else:
            allocators.append(get_allocator(name, levels=hp.power_levels))
    for h in heads:
        variant = MaacHyperparams.model_validate({**hp.model_dump(), "heads": h})
        allocators.append(MmaloraAllocator(variant, fading_mode, label=f"mmalora-h{h}"))
    for dth in thresholds:
        variant = hp.model_copy(update={"pdr_threshold": dth})
        allocators.append(MmaloraAllocator(variant, fading_mode, label=f"mmalora@{dth:g}"))
    return allocators


def _evaluate_cell(cell: CompareCell) -> list[AlgorithmResult]:
    model = AnalyticalModel(cell.scenario, cell.plan, cell.fading_mode)
    results = []
    for allocator in cell.allocators:
        allocation: Allocation = allocator.allocate(cell.scenario, cell.plan, cell.seed)
        report = model.evaluate(allocation.assignment)
        n = cell.scenario.ed_count
        results.append(
            AlgorithmResult(
                seed=cell.seed,
                algorithm=allocator.name,
                x_name=cell.x_name,
                x_value=cell.x_value,
                system_ee=report.system,
                mean_pdr=float(report.pdr.multi_gw.mean()) if n else 0.0,
                flagged=len(allocation.flagged),
                per_ed=ed_records(allocation.assignment, report),
            )
        )
    return results


def aggregate(results: Sequence[AlgorithmResult]) -> list[AggregateRow]:
    """Seed mean and 95 % Student-t half-width per (algorithm, x); CI is None for a single seed."""
    groups: dict[tuple[str, str, float], list[AlgorithmResult]] = defaultdict(list)
    for r in results:
        groups[(r.algorithm, r.x_name, r.x_value)].append(r)
    rows = []
    for (algorithm, x_name, x_value), members in groups.items():
        ee_mean, ee_ci = mean_confidence_interval([m.system_ee for m in members])
        pdr_mean, pdr_ci = mean_confidence_interval([m.mean_pdr for m in members])
        rows.append(
            AggregateRow(
                algorithm=algorithm,
                x_name=x_name,
                x_value=x_value,
                n_seeds=len(members),
                system_ee_mean=ee_mean,
                system_ee_ci95=ee_ci,
                mean_pdr_mean=pdr_mean,
                mean_pdr_ci95=pdr_ci,
            )
        )
    return sorted(rows, key=lambda r: (r.x_value, r.algorithm))


def _run_cells(cells: list[CompareCell], workers: int) -> list[AlgorithmResult]:
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            nested = list(tqdm(pool.map(_evaluate_cell, cells), total=len(cells), desc="Sweep cells"))
    else:
        nested = [_evaluate_cell(c) for c in tqdm(cells, desc="Sweep cells")]
    return [r for chunk in nested for r in chunk]


RESULT_COLUMNS = ("seed", "algorithm", "x_name", "x_value", "system_ee", "mean_pdr", "flagged")
AGGREGATE_COLUMNS = (
    "algorithm",
    "x_name",
    "x_value",
    "n_seeds",
    "system_ee_mean",
    "system_ee_ci95",
    "mean_pdr_mean",
    "mean_pdr_ci95",
)


def cmd_compare(
    ctx: RunContext,
    allocators: Sequence[BaseAllocator],
    seeds: Sequence[int],
    scenario: NetworkScenario | None = None,
    sweep: Literal["eds", "gws"] | None = None,
    values: Sequence[int] = (),
    gw_count: int = 3,
    ed_count: int = 100,
    channel_count: int = 4,
    bandwidth_hz: float = 125e3,
    quota: int | None = None,
    fading_mode: FadingMode = "expected-fading",
    gnuplot: bool = False,
) -> ResultBundle:
    """
    Evaluates every allocator on identical (seed, x) cells.

    With a scenario the single cell is x = its ED count. With a sweep every seed
    draws one scenario per value, from a seed derived from (seed, sweep, value).
    """
    with pipeline(ctx):
        with stage("setup"):
            cells: list[CompareCell] = []
            for seed in seeds:
                if scenario is not None:
                    plan = ChannelPlan.for_devices(scenario.ed_count, channel_count, bandwidth_hz, quota)
                    cells.append(
                        CompareCell(seed, "eds", float(scenario.ed_count), scenario, plan, tuple(allocators), fading_mode)
                    )
                    continue
                if sweep is None:
                    raise SchemaLogicError("compare needs a scenario or a sweep (--sweep eds|gws).")
                for x in values:
                    k, n = (gw_count, x) if sweep == "eds" else (x, ed_count)
                    cell_scenario = generate_scenario(_cell_seed(seed, sweep, x), k, n)
                    plan = ChannelPlan.for_devices(n, channel_count, bandwidth_hz, quota)
                    cells.append(CompareCell(seed, sweep, float(x), cell_scenario, plan, tuple(allocators), fading_mode))
        with stage("allocation"):
            results = _run_cells(cells, ctx.workers)
        with stage("report"):
            bundle = ResultBundle(results=results, aggregates=aggregate(results))
            if ctx.output_format == "json":
                ctx.emit_json("compare", bundle.model_dump(mode="json"))
            else:
                ctx.emit("compare", [r.model_dump(exclude={"per_ed"}) for r in results], RESULT_COLUMNS)
                ctx.emit("compare_summary", [a.model_dump() for a in bundle.aggregates], AGGREGATE_COLUMNS)
                ctx.emit(
                    "compare_per_ed",
                    [
                        {"seed": r.seed, "algorithm": r.algorithm, "x_value": r.x_value, **rec.model_dump()}
                        for r in results
                        for rec in r.per_ed
                    ],
                    ("seed", "algorithm", "x_value", *ED_COLUMNS),
                )
                if gnuplot:
                    summary = ctx.path("compare_summary")
                    script = write_gnuplot(
                        ctx.out_dir / "compare.gp",
                        summary,
                        "x_value",
                        ("system_ee_mean", "mean_pdr_mean"),
                        "algorithm",
                        [a.name for a in allocators],
                    )
                    ctx.written.append(script)
    return bundle


def _cell_seed(seed: int, *labels: object) -> int:
    return derive_seed(seed, *labels) % (2**32)


# -------------------------------------------------------------------
#  validate
# -------------------------------------------------------------------


def validation_cell(
    seed: int,
    sweep: Sweep,
    value: int | str,
    gw_count: int = 3,
    ed_count: int = 160,
    packets_per_ed: int = 10_000,
    replications: int = 1,
    fading_mode: FadingMode = "expected-fading",
) -> dict[str, Any]:
    """
    Analytical vs simulated PDR for one sweep cell: all EDs on one channel at p_max.

    ED and GW sweeps use SF12 on 125 kHz with CR 4/5; PS cells take SF, bandwidth
    and coding rate from the parameter-setting table.
    """
    sf, bw, cr = PARAMETER_SETTINGS["ps3"]
    k, n = gw_count, ed_count
    if sweep == "eds":
        n = int(value)
    elif sweep == "gws":
        k = int(value)
    else:
        if value not in PARAMETER_SETTINGS:
            raise SchemaLogicError(f"Unknown parameter setting '{value}'. Choices: {sorted(PARAMETER_SETTINGS)}")
        sf, bw, cr = PARAMETER_SETTINGS[str(value)]

    scenario = generate_scenario(_cell_seed(seed, "validate", sweep, value), k, n, coding_rate=cr)
    plan = ChannelPlan.for_devices(n, channel_count=1, bandwidth_hz=bw)
    assignment = fixed_assignment(scenario, plan, sf=sf)
    report = AnalyticalModel(scenario, plan, fading_mode).evaluate(assignment)
    horizon = horizon_for_packets(scenario, plan, assignment, packets_per_ed)
    stats = run_simulation(scenario, plan, assignment, horizon, replications, _cell_seed(seed, "sim", sweep, value))
    return {
        "sweep": sweep,
        "x_value": value,
        "seed": seed,
        "mae": mae(report.pdr.multi_gw, stats.pdr_hat),
        "pdr_mean": float(report.pdr.multi_gw.mean()) if n else 0.0,
        "pdr_hat_mean": float(np.mean(stats.pdr_hat)) if n else 0.0,
        "min_sent": stats.min_sent if n else 0,
        "under_sampled": bool(n and stats.min_sent < 100),
    }


def _validation_job(args: tuple[Any, ...]) -> dict[str, Any]:
    return validation_cell(*args)


def cmd_validate(
    ctx: RunContext,
    sweep: Sweep,
    values: Sequence[int | str],
    seeds: Sequence[int],
    gw_count: int = 3,
    ed_count: int = 160,
    packets_per_ed: int = 10_000,
    replications: int = 1,
    fading_mode: FadingMode = "expected-fading",
) -> list[dict[str, Any]]:
    """MAE between analytical and simulated per-ED PDR, per sweep value and seed, with 95 % CIs."""
    with pipeline(ctx), stage("validation"):
        jobs = [
            (seed, sweep, v, gw_count, ed_count, packets_per_ed, replications, fading_mode)
            for v in values
            for seed in seeds
        ]
        if ctx.workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=ctx.workers) as pool:
                rows = list(tqdm(pool.map(_validation_job, jobs), total=len(jobs), desc="Validation cells"))
        else:
            rows = [_validation_job(job) for job in tqdm(jobs, desc="Validation cells")]

        if any(r["under_sampled"] for r in rows):
            logger.warning("Some validation cells are under-sampled (< 100 packets for an ED); see 'under_sampled'.")
        ctx.emit(
            "validate",
            rows,
            ("sweep", "x_value", "seed", "mae", "pdr_mean", "pdr_hat_mean", "min_sent", "under_sampled"),
        )

        summary = []
        for v in values:
            maes = [r["mae"] for r in rows if r["x_value"] == v]
            mean, ci = mean_confidence_interval(maes)
            summary.append(
                {
                    "sweep": sweep,
                    "x_value": v,
                    "n_seeds": len(maes),
                    "mae_mean": mean,
                    "mae_ci95": ci,
                    "mae_median": float(np.median(maes)) if maes else math.nan,
                }
            )
        ctx.emit("validate_summary", summary, ("sweep", "x_value", "n_seeds", "mae_mean", "mae_ci95", "mae_median"))
    return rows
