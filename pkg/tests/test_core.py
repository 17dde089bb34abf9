"""Tests for the pipelines in loraee.core."""

import json
from pathlib import Path

import pytest
from pytest_mock import MockerFixture

from loraee.core import (
    RunContext,
    aggregate,
    build_allocators,
    cmd_analyze,
    cmd_compare,
    cmd_generate,
    cmd_validate,
    resolve_assignment,
    stage,
    validation_cell,
)
from loraee.domain.schemas import AlgorithmResult, Assignment, ChannelPlan, MaacHyperparams, NetworkScenario
from loraee.exceptions import SchemaLogicError
from loraee.io import load_json, load_scenario, read_table, save_assignment


class TestRunContext:
    def test_config_hash_depends_on_seed_and_config(self, tmp_path: Path) -> None:
        """Tests that the hash covers the seed and the config but not the output directory."""
        base = RunContext("analyze", tmp_path / "a", seed=1, config={"channel_count": 4})
        moved = RunContext("analyze", tmp_path / "b", seed=1, config={"channel_count": 4})
        reseeded = RunContext("analyze", tmp_path / "a", seed=2, config={"channel_count": 4})
        assert base.config_hash == moved.config_hash
        assert base.config_hash != reseeded.config_hash

    def test_run_hash_covers_inputs(self, tmp_path: Path) -> None:
        """Tests that editing an input file changes the run hash."""
        # Arrange
        source = tmp_path / "scenario.yaml"
        source.write_text("seed: 1\n")
        ctx = RunContext("analyze", tmp_path, input_files=[source])
        before = ctx.run_hash

        # Act
        source.write_text("seed: 2\n")

        # Assert
        assert ctx.run_hash != before
        assert ctx.run_hash.startswith("loraee-run-")

    def test_emit_writes_table_and_sidecar(self, tmp_path: Path) -> None:
        """Tests that a table is written in the run's format next to its metadata."""
        ctx = RunContext("analyze", tmp_path, seed=5, output_format="json")
        path = ctx.emit("rows", [{"a": 1}], ("a",), extra={"note": "x"})
        meta = load_json(tmp_path / "rows.meta.json")
        assert path == tmp_path / "rows.json"
        assert ctx.written == [path]
        assert meta["seed"] == 5
        assert meta["note"] == "x"
        assert meta["config_hash"] == ctx.config_hash
        assert meta["input_files"] == []


def test_stage_prefixes_errors() -> None:
    """Tests that stage errors keep their type and gain the stage name."""
    with pytest.raises(SchemaLogicError, match=r"^\[setup\] bad value"), stage("setup"):
        raise SchemaLogicError("bad value")


class TestResolveAssignment:
    def test_distance_policy(self, two_gw_scenario: NetworkScenario, two_channel_plan: ChannelPlan) -> None:
        """Tests round-robin channels, distance SFs and p_max."""
        assignment = resolve_assignment(two_gw_scenario, two_channel_plan, seed=0)
        assert assignment.channels == [0, 1, 0, 1, 0, 1, 0, 1]
        assert assignment.sfs[0] == 7
        assert all(7 <= sf <= 12 for sf in assignment.sfs)
        assert set(assignment.tps_dbm) == {two_gw_scenario.tp_max_dbm}

    def test_sf12_policy(self, two_gw_scenario: NetworkScenario, two_channel_plan: ChannelPlan) -> None:
        assignment = resolve_assignment(two_gw_scenario, two_channel_plan, seed=0, policy="sf12")
        assert set(assignment.sfs) == {12}

    def test_file_wins_over_policy(
        self, tmp_path: Path, two_gw_scenario: NetworkScenario, two_channel_plan: ChannelPlan, sf7_assignment: Assignment
    ) -> None:
        """Tests that an assignment file is loaded and validated."""
        path = save_assignment(sf7_assignment, tmp_path / "assignment.csv")
        assert resolve_assignment(two_gw_scenario, two_channel_plan, 0, path, policy="sf12") == sf7_assignment

    def test_unknown_policy(self, two_gw_scenario: NetworkScenario, two_channel_plan: ChannelPlan) -> None:
        with pytest.raises(SchemaLogicError, match="Unknown assignment policy 'mmalora'"):
            resolve_assignment(two_gw_scenario, two_channel_plan, seed=0, policy="mmalora")


def test_cmd_generate_is_deterministic(tmp_path: Path) -> None:
    """Tests that generate writes the scenario and positions, identically for one seed."""
    # Act
    first = cmd_generate(RunContext("generate", tmp_path / "a", seed=9), gw_count=2, ed_count=12)
    second = cmd_generate(RunContext("generate", tmp_path / "b", seed=9), gw_count=2, ed_count=12)

    # Assert
    assert first == second
    assert load_scenario(tmp_path / "a" / "scenario.yaml") == first
    assert len(read_table(tmp_path / "a" / "positions.csv")) == 14
    assert (tmp_path / "a" / "positions.meta.json").is_file()
    assert (tmp_path / "a" / "scenario.yaml").read_text() == (tmp_path / "b" / "scenario.yaml").read_text()


def test_cmd_analyze_outputs(
    tmp_path: Path, two_gw_scenario: NetworkScenario, two_channel_plan: ChannelPlan, sf7_assignment: Assignment
) -> None:
    """Tests the per-GW table, the per-ED table and the summary."""
    # Arrange
    ctx = RunContext("analyze", tmp_path, seed=0)

    # Act
    report = cmd_analyze(ctx, two_gw_scenario, two_channel_plan, sf7_assignment)

    # Assert
    per_gw = read_table(tmp_path / "pdr_per_gw.csv")
    per_ed = read_table(tmp_path / "analysis.csv")
    summary = load_json(tmp_path / "analysis_summary.json")
    assert len(per_gw) == 16
    assert len(per_ed) == 8
    assert summary["system_ee"] == pytest.approx(report.system)
    assert summary["system_ee"] == pytest.approx(sum(float(r["ee_bits_per_joule"]) for r in per_ed))
    assert len(summary["per_channel_ee"]) == 2
    assert (tmp_path / "analysis.meta.json").is_file()


def _result(seed: int, algorithm: str, ee: float) -> AlgorithmResult:
    return AlgorithmResult(seed=seed, algorithm=algorithm, x_name="eds", x_value=10.0, system_ee=ee, mean_pdr=0.5)


def test_aggregate() -> None:
    """Tests seed means, the CI half-width and the single-seed case."""
    # Arrange
    results = [_result(0, "adr", 1.0), _result(1, "adr", 3.0), _result(0, "rcst", 2.0)]

    # Act
    rows = aggregate(results)

    # Assert
    adr, rcst = rows
    assert adr.algorithm == "adr"
    assert adr.n_seeds == 2
    assert adr.system_ee_mean == pytest.approx(2.0)
    assert adr.system_ee_ci95 == pytest.approx(12.706204736, rel=1e-6)
    assert rcst.system_ee_ci95 is None
    assert rcst.mean_pdr_mean == pytest.approx(0.5)


def test_build_allocators_variants() -> None:
    """Tests base names plus head-count and threshold variants."""
    allocators = build_allocators(["rcst", "adr", "mmalora"], MaacHyperparams(), heads=[2], thresholds=[0.9])
    assert [a.name for a in allocators] == ["rcst", "adr", "mmalora", "mmalora-h2", "mmalora@0.9"]


class TestCompare:
    def test_sweep_over_gateways(self, tmp_path: Path) -> None:
        """Tests that every (seed, x) cell is evaluated for every allocator and aggregated."""
        # Arrange
        ctx = RunContext("compare", tmp_path, seed=0)
        allocators = build_allocators(["rcst", "adr"], MaacHyperparams())

        # Act
        bundle = cmd_compare(
            ctx, allocators, seeds=[0, 1], sweep="gws", values=[1, 2], ed_count=10, channel_count=2, gnuplot=True
        )

        # Assert
        assert len(bundle.results) == 8
        assert len(bundle.aggregates) == 4
        assert all(a.n_seeds == 2 for a in bundle.aggregates)
        assert len(read_table(tmp_path / "compare.csv")) == 8
        assert len(read_table(tmp_path / "compare_summary.csv")) == 4
        assert len(read_table(tmp_path / "compare_per_ed.csv")) == 80
        assert "compare_summary.csv" in (tmp_path / "compare.gp").read_text()

    def test_scenario_cell_in_json(self, tmp_path: Path, two_gw_scenario: NetworkScenario) -> None:
        """Tests a single-scenario comparison written as one JSON bundle."""
        ctx = RunContext("compare", tmp_path, seed=0, output_format="json")
        bundle = cmd_compare(ctx, build_allocators(["rcst"], MaacHyperparams()), seeds=[3], scenario=two_gw_scenario)
        data = json.loads((tmp_path / "compare.json").read_text())
        assert bundle.results[0].x_value == 8.0
        assert data["results"][0]["algorithm"] == "rcst"
        assert not (tmp_path / "compare.csv").exists()

    def test_needs_scenario_or_sweep(self, tmp_path: Path) -> None:
        ctx = RunContext("compare", tmp_path)
        with pytest.raises(SchemaLogicError, match=r"^\[setup\] compare needs a scenario or a sweep"):
            cmd_compare(ctx, [], seeds=[0])


class TestValidate:
    def test_small_cell(self) -> None:
        """Tests that one cell compares analytical and simulated PDR."""
        row = validation_cell(3, "eds", 4, gw_count=1, packets_per_ed=50)
        assert row["sweep"] == "eds"
        assert row["x_value"] == 4
        assert 0.0 <= row["mae"] <= 1.0
        assert 0.0 <= row["pdr_mean"] <= 1.0

    def test_unknown_parameter_setting(self) -> None:
        with pytest.raises(SchemaLogicError, match="Unknown parameter setting 'ps9'"):
            validation_cell(0, "ps", "ps9")

    def test_summary_per_value(self, tmp_path: Path, mocker: MockerFixture) -> None:
        """Tests that cell rows are summarised per sweep value over seeds."""
        # Arrange
        def fake_cell(seed: int, sweep: str, value: int, *_: object) -> dict[str, object]:
            return {
                "sweep": sweep,
                "x_value": value,
                "seed": seed,
                "mae": 0.01 * (seed + 1),
                "pdr_mean": 0.8,
                "pdr_hat_mean": 0.8,
                "min_sent": 500,
                "under_sampled": False,
            }

        mock_cell = mocker.patch("loraee.core.validation_cell", side_effect=fake_cell)
        ctx = RunContext("validate", tmp_path)

        # Act
        rows = cmd_validate(ctx, "eds", [20, 40], seeds=[0, 1, 2])

        # Assert
        assert mock_cell.call_count == 6
        assert len(rows) == 6
        summary = read_table(tmp_path / "validate_summary.csv")
        assert [r["x_value"] for r in summary] == ["20", "40"]
        assert all(r["n_seeds"] == "3" for r in summary)
        assert float(summary[0]["mae_mean"]) == pytest.approx(0.02)
        assert float(summary[0]["mae_median"]) == pytest.approx(0.02)
