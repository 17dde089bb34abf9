"""
Checkpoints of trained bundles.

Parameters of every bundle go into one `.npz` archive keyed
`g{group}/{network}/{name}`; a JSON manifest next to it carries the format
version, the hyperparameters and the expected shape of every array.
"""

import zipfile
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import ValidationError

from loraee.domain.schemas import MaacHyperparams
from loraee.exceptions import LoraEEIOException, LoraEESerializationError
from loraee.io import load_json, save_json
from loraee.maac.bundle import AgentBundle
from loraee.utils.logging import logger

CHECKPOINT_FORMAT_VERSION = 1
NETWORKS = ("actor", "actor_target", "critic", "critic_target")


def manifest_path(path: Path) -> Path:
    return path.with_suffix(".manifest.json")


def save_bundles(bundles: list[AgentBundle], path: Path) -> Path:
    """Writes `path` (.npz) and its manifest; returns the manifest path."""
    path = path.with_suffix(".npz")
    arrays: dict[str, np.ndarray] = {}
    groups: list[dict[str, Any]] = []
    for g, bundle in enumerate(bundles):
        shapes: dict[str, dict[str, list[int]]] = {}
        for net in NETWORKS:
            params = getattr(bundle, net)
            shapes[net] = {name: list(value.shape) for name, value in params.items()}
            for name, value in params.items():
                arrays[f"g{g}/{net}/{name}"] = value
        groups.append(
            {
                "channel": bundle.channel,
                "agent_ids": bundle.agent_ids,
                "power_grid": list(bundle.power_grid),
                "obs_dim": bundle.obs_dim,
                "shapes": shapes,
            }
        )

    hyperparams = bundles[0].hyperparams.model_dump(mode="json") if bundles else None
    manifest = {"format_version": CHECKPOINT_FORMAT_VERSION, "hyperparams": hyperparams, "groups": groups}
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez(path, **arrays)
    except OSError as e:
        logger.error(f"Failed to write checkpoint: {path}")
        raise LoraEEIOException(f"Checkpoint saving error on {path}: {e}") from e
    target = manifest_path(path)
    save_json(manifest, target)
    logger.info(f"Saved {len(bundles)} bundles to {path}")
    return target


def load_bundles(path: Path) -> list[AgentBundle]:
    """
    Restores bundles written by `save_bundles`.

    Raises:
        LoraEESerializationError: on a version mismatch, a missing array or a shape that disagrees with the manifest.
        LoraEEIOException: when either file cannot be read.
    """
    path = path.with_suffix(".npz")
    manifest = load_json(manifest_path(path))
    version = manifest.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise LoraEESerializationError(
            f"Checkpoint format {version} is not supported (expected {CHECKPOINT_FORMAT_VERSION})."
        )
    try:
        hyperparams = MaacHyperparams.model_validate(manifest["hyperparams"] or {})
    except ValidationError as e:
        raise LoraEESerializationError(f"Checkpoint hyperparameters are invalid: {e}") from e

    try:
        with np.load(path) as archive:
            stored = {key: archive[key] for key in archive.files}
    except (OSError, ValueError, zipfile.BadZipFile) as e:
        logger.error(f"Failed to read checkpoint: {path}")
        raise LoraEEIOException(f"Checkpoint loading error on {path}: {e}") from e

    bundles = []
    for g, group in enumerate(manifest.get("groups", [])):
        nets: dict[str, dict[str, np.ndarray]] = {}
        for net in NETWORKS:
            nets[net] = {}
            for name, shape in group["shapes"][net].items():
                key = f"g{g}/{net}/{name}"
                if key not in stored:
                    raise LoraEESerializationError(f"Checkpoint {path} is missing array '{key}'.")
                if list(stored[key].shape) != shape:
                    raise LoraEESerializationError(
                        f"Array '{key}' has shape {list(stored[key].shape)}, manifest says {shape}."
                    )
                nets[net][name] = stored[key]
        bundles.append(
            AgentBundle(
                channel=int(group["channel"]),
                agent_ids=[int(i) for i in group["agent_ids"]],
                power_grid=tuple(float(p) for p in group["power_grid"]),
                obs_dim=int(group["obs_dim"]),
                hyperparams=hyperparams,
                **nets,
            )
        )
    logger.info(f"Loaded {len(bundles)} bundles from {path}")
    return bundles
