import csv
import datetime
import json
from collections.abc import Mapping, Sequence
from pathlib import Path
from typing import Any, Literal

import numpy as np
import yaml
from pydantic import ValidationError

from loraee import __version__
from loraee.domain.schemas import Assignment, ExperimentConfig, NetworkScenario
from loraee.exceptions import LoraEEIOException, LoraEESerializationError, SchemaLogicError
from loraee.utils.logging import logger

OutputFormat = Literal["csv", "json"]

# scenario file section -> NetworkScenario fields
SCENARIO_SECTIONS: dict[str, tuple[str, ...]] = {
    "geometry": ("area_m", "min_gw_spacing_m", "cell_radius_m", "gw_positions", "ed_positions"),
    "radio": (
        "carrier_frequency_hz",
        "path_loss_exponent",
        "light_speed_m_s",
        "preamble_symbols",
        "coding_rate",
        "tp_min_dbm",
        "tp_max_dbm",
    ),
    "traffic": ("send_rate", "duty_cycle", "payload_bytes"),
}


# -------------------------------------------------------------------
#  Plain JSON / YAML
# -------------------------------------------------------------------


def save_json(data: Mapping[str, Any] | Sequence[Any], path: Path) -> None:
    """Saves JSON-serialisable data to an uncompressed, sorted-key JSON file."""
    try:
        text = json.dumps(data, indent=2, sort_keys=True)
    except (TypeError, ValueError) as e:
        logger.error(f"Data for {path} is not JSON serializable: {e}")
        raise LoraEESerializationError(f"Data serialization error for {path}: {e}") from e
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text + "\n", encoding="utf-8")
    except OSError as e:
        logger.error(f"Failed to write to JSON file: {path}")
        raise LoraEEIOException(f"Data saving error on {path}: {e}") from e


def load_json(path: Path) -> dict[str, Any]:
    """
    Loads a JSON object into a dictionary.

    This is a low-level loader. It performs no validation beyond ensuring
    the file contains a JSON object.
    """
    try:
        with path.open("r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        logger.error(f"Failed to read or parse JSON file: {path}")
        raise LoraEEIOException(f"Data loading error on {path}: {e}") from e
    if not isinstance(data, dict):
        raise LoraEEIOException(f"Expected a JSON object (dict), but found {type(data)} in {path}")
    return data


def load_yaml(path: Path) -> dict[str, Any]:
    try:
        with path.open("r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except (OSError, yaml.YAMLError) as e:
        logger.error(f"Failed to read or parse YAML file: {path}")
        raise LoraEEIOException(f"Data loading error on {path}: {e}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise LoraEEIOException(f"Expected a YAML mapping at the top of {path}, found {type(data).__name__}")
    return data


def save_yaml(data: Mapping[str, Any], path: Path) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as f:
            yaml.safe_dump(dict(data), f, sort_keys=False, default_flow_style=None)
    except yaml.YAMLError as e:
        raise LoraEESerializationError(f"Data serialization error for {path}: {e}") from e
    except OSError as e:
        logger.error(f"Failed to write YAML file: {path}")
        raise LoraEEIOException(f"Data saving error on {path}: {e}") from e


# -------------------------------------------------------------------
#  Scenario files and experiment configs
# -------------------------------------------------------------------


def scenario_to_document(scenario: NetworkScenario) -> dict[str, Any]:
    """Sectioned, YAML-ready view of a scenario (tuples become lists)."""
    flat = scenario.model_dump(mode="json")
    doc: dict[str, Any] = {"seed": flat["seed"]}
    for section, fields in SCENARIO_SECTIONS.items():
        doc[section] = {name: flat[name] for name in fields}
    doc["geometry"]["gw_positions"] = [list(p) for p in scenario.gw_positions]
    doc["geometry"]["ed_positions"] = [list(p) for p in scenario.ed_positions]
    doc["energy"] = scenario.energy.model_dump(exclude_none=True)
    return doc


def scenario_from_document(doc: Mapping[str, Any], source: str = "<document>") -> NetworkScenario:
    """
    Builds a scenario from the sectioned mapping.

    Raises:
        SchemaLogicError: on unknown sections/keys or any violated scenario invariant.
    """
    unknown = set(doc) - {"seed", "energy", *SCENARIO_SECTIONS}
    if unknown:
        raise SchemaLogicError(f"Unknown scenario sections in {source}: {sorted(unknown)}")
    fields: dict[str, Any] = {"seed": doc.get("seed")}
    for section, allowed in SCENARIO_SECTIONS.items():
        values = doc.get(section) or {}
        extra = set(values) - set(allowed)
        if extra:
            raise SchemaLogicError(f"Unknown keys in [{section}] of {source}: {sorted(extra)}")
        fields.update(values)
    if doc.get("energy"):
        fields["energy"] = doc["energy"]
    for key in ("gw_positions", "ed_positions"):
        if key in fields:
            fields[key] = [tuple(p) for p in fields[key] or []]
    try:
        return NetworkScenario(**fields)
    except ValidationError as e:
        logger.error(f"Scenario in {source} is invalid")
        raise SchemaLogicError(f"Invalid scenario in {source}: {e}") from e


def load_scenario(path: Path) -> NetworkScenario:
    logger.info(f"Loading scenario from {path}")
    scenario = scenario_from_document(load_yaml(path), str(path))
    logger.info(f"Scenario has {scenario.gw_count} GWs and {scenario.ed_count} EDs")
    return scenario


def save_scenario(scenario: NetworkScenario, path: Path) -> None:
    save_yaml(scenario_to_document(scenario), path)


def load_config(path: Path) -> ExperimentConfig:
    """Loads an experiment config; relative scenario paths resolve against the config's directory."""
    data = load_yaml(path)
    scenario_path = data.get("scenario_path")
    if scenario_path is not None and not Path(scenario_path).is_absolute():
        data["scenario_path"] = path.parent / scenario_path
    try:
        return ExperimentConfig(**data)
    except ValidationError as e:
        logger.error(f"Experiment config {path} is invalid")
        raise SchemaLogicError(f"Invalid experiment config {path}: {e}") from e


# -------------------------------------------------------------------
#  Tables, assignments and metadata sidecars
# -------------------------------------------------------------------


def _plain(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    return value


def _cell(value: Any) -> Any:
    value = _plain(value)
    if isinstance(value, float):
        return repr(value)
    return value


def write_table(rows: Sequence[Mapping[str, Any]], path: Path, fieldnames: Sequence[str]) -> Path:
    """
    Writes rows as CSV (header + rows, '\\n' line endings, repr floats) or JSON.

    The format follows the suffix of `path` (.csv or .json).
    """
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if path.suffix == ".json":
            save_json([{k: _plain(row.get(k)) for k in fieldnames} for row in rows], path)
            return path
        with path.open("w", encoding="utf-8", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=list(fieldnames), lineterminator="\n", extrasaction="ignore")
            writer.writeheader()
            for row in rows:
                writer.writerow({k: _cell(v) for k, v in row.items()})
    except OSError as e:
        logger.error(f"Failed to write table: {path}")
        raise LoraEEIOException(f"Data saving error on {path}: {e}") from e
    return path


def read_table(path: Path) -> list[dict[str, str]]:
    try:
        with path.open("r", encoding="utf-8", newline="") as f:
            reader = csv.DictReader(f)
            if not reader.fieldnames:
                logger.warning(f"CSV file {path} is empty or has no header")
                return []
            return list(reader)
    except OSError as e:
        logger.error(f"Failed to read CSV file: {path}")
        raise LoraEEIOException(f"Data loading error on {path}: {e}") from e
    except csv.Error as e:
        logger.error(f"Failed to parse CSV file: {path}")
        raise LoraEEIOException(f"CSV parsing error on {path}: {e}") from e


ASSIGNMENT_COLUMNS = ("ed_id", "channel", "sf", "tp_dbm")


def save_assignment(assignment: Assignment, path: Path) -> Path:
    rows = [
        {"ed_id": i, "channel": c, "sf": m, "tp_dbm": float(p)}
        for i, (c, m, p) in enumerate(zip(assignment.channels, assignment.sfs, assignment.tps_dbm, strict=True))
    ]
    return write_table(rows, path, ASSIGNMENT_COLUMNS)


def load_assignment(path: Path) -> Assignment:
    """
    Reads an assignment CSV (ed_id, channel, sf, tp_dbm); rows may come in any order.

    Raises:
        LoraEEIOException: on a missing column or non-contiguous ED ids.
    """
    rows = read_table(path)
    try:
        parsed = sorted((int(r["ed_id"]), int(r["channel"]), int(r["sf"]), float(r["tp_dbm"])) for r in rows)
    except KeyError as e:
        raise LoraEEIOException(f"CSV column {e} not found in {path}") from e
    except ValueError as e:
        raise LoraEEIOException(f"Malformed value in {path}: {e}") from e
    if [p[0] for p in parsed] != list(range(len(parsed))):
        raise LoraEEIOException(f"ED ids in {path} must be 0..N-1 without gaps")
    try:
        return Assignment(
            channels=[p[1] for p in parsed], sfs=[p[2] for p in parsed], tps_dbm=[p[3] for p in parsed]
        )
    except ValidationError as e:
        raise SchemaLogicError(f"Invalid assignment in {path}: {e}") from e


def save_positions(scenario: NetworkScenario, path: Path) -> Path:
    rows = [{"kind": "gw", "id": k, "x_m": x, "y_m": y} for k, (x, y) in enumerate(scenario.gw_positions)]
    rows += [{"kind": "ed", "id": i, "x_m": x, "y_m": y} for i, (x, y) in enumerate(scenario.ed_positions)]
    return write_table(rows, path, ("kind", "id", "x_m", "y_m"))


def meta_path(path: Path) -> Path:
    return path.with_name(f"{path.stem}.meta.json")


def write_meta(
    path: Path, command: str, config_hash: str, seed: int, run_hash: str, extra: Mapping[str, Any] | None = None
) -> Path:
    """
    Writes the `<name>.meta.json` sidecar of an output file.

    The UTC timestamp is the only field that differs between identical re-runs.
    """
    meta: dict[str, Any] = {
        "tool_version": __version__,
        "command": command,
        "config_hash": config_hash,
        "seed": seed,
        "run_hash": run_hash,
        "output_file": path.name,
        "timestamp_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
    }
    if extra:
        meta.update(extra)
    target = meta_path(path)
    save_json(meta, target)
    return target


def write_gnuplot(
    script: Path, table: Path, x_column: str, y_columns: Sequence[str], group_column: str, groups: Sequence[str]
) -> Path:
    """Emits a gnuplot script drawing every y column of a CSV table against x, one line per group value."""
    lines = [
        "# generated by loraee",
        "set datafile separator ','",
        "set key outside",
        "set terminal pngcairo size 800,500",
        f"set xlabel '{x_column}'",
        f"data = '{table.name}'",
        f"groups = \"{' '.join(groups)}\"",
    ]
    for y in y_columns:
        lines += [
            "",
            f"set output '{script.stem}-{y}.png'",
            f"set ylabel '{y}'",
            f"plot for [g in groups] data using (strcol('{group_column}') eq g ? column('{x_column}') : 1/0)"
            f":'{y}' with linespoints title g",
        ]
    try:
        script.parent.mkdir(parents=True, exist_ok=True)
        script.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as e:
        logger.error(f"Failed to write gnuplot script: {script}")
        raise LoraEEIOException(f"Data saving error on {script}: {e}") from e
    return script
