"""Tests for the loraee.io module: JSON/YAML, scenario files, tables, assignments and sidecars."""

import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from loraee import __version__
from loraee.domain.schemas import Assignment, NetworkScenario
from loraee.exceptions import LoraEEIOException, LoraEESerializationError, SchemaLogicError
from loraee.io import (
    load_assignment,
    load_config,
    load_json,
    load_scenario,
    load_yaml,
    meta_path,
    read_table,
    save_assignment,
    save_json,
    save_positions,
    save_scenario,
    scenario_from_document,
    scenario_to_document,
    write_gnuplot,
    write_meta,
    write_table,
)


class TestJsonAndYaml:
    def test_save_json_sorts_keys(self, tmp_path: Path) -> None:
        """Tests that JSON output is sorted and loads back."""
        path = tmp_path / "nested" / "data.json"
        save_json({"b": 1, "a": [1.5, 2]}, path)
        assert path.read_text().index('"a"') < path.read_text().index('"b"')
        assert load_json(path) == {"a": [1.5, 2], "b": 1}

    def test_save_json_unserializable(self, tmp_path: Path) -> None:
        """Tests that non-JSON data raises the serialization error."""
        with pytest.raises(LoraEESerializationError):
            save_json({"x": object()}, tmp_path / "bad.json")

    def test_load_json_requires_object(self, tmp_path: Path) -> None:
        """Tests that a top-level list is refused."""
        path = tmp_path / "list.json"
        path.write_text("[1, 2]")
        with pytest.raises(LoraEEIOException, match="Expected a JSON object"):
            load_json(path)

    def test_load_json_missing(self, tmp_path: Path) -> None:
        """Tests that a missing file is an I/O error."""
        with pytest.raises(LoraEEIOException):
            load_json(tmp_path / "missing.json")

    def test_load_yaml_empty_and_invalid(self, tmp_path: Path) -> None:
        """Tests that an empty file is an empty mapping and a list is refused."""
        empty = tmp_path / "empty.yaml"
        empty.write_text("")
        listed = tmp_path / "list.yaml"
        listed.write_text("- 1\n- 2\n")
        assert load_yaml(empty) == {}
        with pytest.raises(LoraEEIOException, match="YAML mapping"):
            load_yaml(listed)


class TestScenarioFiles:
    def test_document_sections(self, two_gw_scenario: NetworkScenario) -> None:
        """Tests the sectioned layout of a scenario document."""
        doc = scenario_to_document(two_gw_scenario)
        assert set(doc) == {"seed", "geometry", "radio", "traffic", "energy"}
        assert doc["geometry"]["gw_positions"][0] == [4_000.0, 10_000.0]
        assert doc["traffic"]["send_rate"] == 0.001

    def test_save_and_load_scenario(self, tmp_path: Path, two_gw_scenario: NetworkScenario) -> None:
        """Tests that a scenario written to YAML reads back equal."""
        path = tmp_path / "scenario.yaml"
        save_scenario(two_gw_scenario, path)
        assert load_scenario(path) == two_gw_scenario

    def test_unknown_section_and_key(self, two_gw_scenario: NetworkScenario) -> None:
        """Tests that typos in a scenario file are reported."""
        doc = scenario_to_document(two_gw_scenario)
        with pytest.raises(SchemaLogicError, match="Unknown scenario sections"):
            scenario_from_document({**doc, "extras": {}})
        doc["radio"]["frequency"] = 915e6
        with pytest.raises(SchemaLogicError, match=r"Unknown keys in \[radio\]"):
            scenario_from_document(doc)

    def test_invalid_scenario(self) -> None:
        """Tests that violated invariants surface as SchemaLogicError."""
        doc = {"geometry": {"gw_positions": [[0.0, 0.0]], "ed_positions": [[50_000.0, 0.0]]}}
        with pytest.raises(SchemaLogicError, match="Invalid scenario"):
            scenario_from_document(doc)

    def test_load_config_resolves_relative_scenario(self, tmp_path: Path, two_gw_scenario: NetworkScenario) -> None:
        """Tests that scenario_path is relative to the config file."""
        # Arrange
        save_scenario(two_gw_scenario, tmp_path / "scen" / "s.yaml")
        config_path = tmp_path / "config.yaml"
        config_path.write_text(yaml.safe_dump({"scenario_path": "scen/s.yaml", "channel_count": 2, "seeds": [4]}))

        # Act
        config = load_config(config_path)

        # Assert
        assert config.scenario_path == tmp_path / "scen" / "s.yaml"
        assert config.channel_count == 2
        assert config.seeds == [4]

    def test_load_config_invalid(self, tmp_path: Path) -> None:
        """Tests that a bad field value is a SchemaLogicError."""
        config_path = tmp_path / "config.yaml"
        config_path.write_text("channel_count: 0\n")
        with pytest.raises(SchemaLogicError, match="Invalid experiment config"):
            load_config(config_path)


class TestTables:
    def test_csv_uses_repr_floats(self, tmp_path: Path) -> None:
        """Tests header order, repr precision and numpy scalars in CSV output."""
        # Arrange
        rows = [{"x": 0.1, "y": np.float64(1 / 3), "n": np.int64(4)}]

        # Act
        path = write_table(rows, tmp_path / "t.csv", ("n", "x", "y"))

        # Assert
        lines = path.read_text().splitlines()
        assert lines[0] == "n,x,y"
        assert lines[1] == f"4,0.1,{1 / 3!r}"
        assert read_table(path) == [{"n": "4", "x": "0.1", "y": repr(1 / 3)}]

    def test_json_table(self, tmp_path: Path) -> None:
        """Tests that a .json suffix switches to a JSON list of rows."""
        path = write_table([{"a": np.float64(0.5), "b": None}], tmp_path / "t.json", ("a", "b"))
        assert json.loads(path.read_text()) == [{"a": 0.5, "b": None}]

    def test_assignment_csv(self, tmp_path: Path, sf7_assignment: Assignment) -> None:
        """Tests that an assignment survives CSV and rows may be shuffled."""
        # Arrange
        path = save_assignment(sf7_assignment, tmp_path / "assignment.csv")
        header, *body = path.read_text().splitlines()
        path.write_text("\n".join([header, *reversed(body)]) + "\n")

        # Act
        loaded = load_assignment(path)

        # Assert
        assert loaded == sf7_assignment

    def test_assignment_with_gap(self, tmp_path: Path) -> None:
        """Tests that ED ids must be contiguous from zero."""
        path = tmp_path / "a.csv"
        path.write_text("ed_id,channel,sf,tp_dbm\n0,0,7,2.0\n2,0,7,2.0\n")
        with pytest.raises(LoraEEIOException, match="without gaps"):
            load_assignment(path)

    def test_assignment_missing_column(self, tmp_path: Path) -> None:
        """Tests that a missing column is reported by name."""
        path = tmp_path / "a.csv"
        path.write_text("ed_id,channel,sf\n0,0,7\n")
        with pytest.raises(LoraEEIOException, match="tp_dbm"):
            load_assignment(path)

    def test_positions(self, tmp_path: Path, two_gw_scenario: NetworkScenario) -> None:
        """Tests one row per gateway and device."""
        rows = read_table(save_positions(two_gw_scenario, tmp_path / "positions.csv"))
        assert len(rows) == 10
        assert rows[0]["kind"] == "gw"
        assert rows[-1] == {"kind": "ed", "id": "7", "x_m": "16000.0", "y_m": "4000.0"}


def test_write_meta(tmp_path: Path) -> None:
    """Tests the sidecar's name and identity fields."""
    # Act
    target = write_meta(tmp_path / "compare.csv", "compare", "sha256-abc", 3, "loraee-run-xyz", {"rows": 4})

    # Assert
    assert target == meta_path(tmp_path / "compare.csv") == tmp_path / "compare.meta.json"
    meta = load_json(target)
    assert meta["tool_version"] == __version__
    assert meta["output_file"] == "compare.csv"
    assert meta["seed"] == 3
    assert meta["rows"] == 4
    assert meta["timestamp_utc"].endswith("+00:00")


def test_write_gnuplot(tmp_path: Path) -> None:
    """Tests that the script plots every y column once per group."""
    script = write_gnuplot(
        tmp_path / "compare.gp", tmp_path / "summary.csv", "x_value", ("system_ee_mean",), "algorithm", ["adr", "rcst"]
    )
    text = script.read_text()
    assert "data = 'summary.csv'" in text
    assert 'groups = "adr rcst"' in text
    assert "set output 'compare-system_ee_mean.png'" in text
