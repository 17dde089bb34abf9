import hashlib
import json
from pathlib import Path
from typing import Any

from loraee.exceptions import LoraEEException
from loraee.utils.logging import logger


def get_file_hash(path: Path) -> str:
    """Computes the sha256 hash of a file's content."""
    try:
        with path.open("rb") as f:
            file_bytes = f.read()
            return hashlib.sha256(file_bytes).hexdigest()
    except OSError as e:
        logger.error(f"Could not read file for hashing: {path}")
        raise LoraEEException(f"File I/O error on {path}: {e}") from e


def generate_config_hash(config: dict[str, Any]) -> str:
    """
    Generates a deterministic hash for a configuration mapping.

    Keys are sorted and floats are written with repr precision, so two configs
    hash equal iff they are equal as JSON documents.

    Returns:
        A 'sha256-' prefixed hex digest.
    """
    try:
        canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    except (TypeError, ValueError) as e:
        raise LoraEEException(f"Config is not hashable as JSON: {e}") from e
    return f"sha256-{hashlib.sha256(canonical.encode('utf-8')).hexdigest()}"


def generate_run_hash(command: str, input_hashes: list[str], seed: int) -> str:
    """
    Generates a deterministic ID for an experiment run from the command name,
    the hashes of all its inputs and the master seed.

    Args:
        command: The CLI command (e.g. 'validate').
        input_hashes: Hashes of the scenario file, config and checkpoint, in any order.
        seed: The master seed.

    Returns:
        A 'loraee-run-' prefixed sha256 hex digest.
    """
    sorted_hashes = sorted(input_hashes)
    run_signature = f"{command}|{seed}|" + "".join(sorted_hashes)
    hasher = hashlib.sha256(run_signature.encode("utf-8"))
    return f"loraee-run-{hasher.hexdigest()}"


def derive_seed(master_seed: int, *labels: object) -> int:
    """
    Derives a stable child seed from a master seed and a path of labels.

    The same (master_seed, labels) always yields the same 63-bit integer, across
    processes and platforms, so sweep cells can run in any order or in parallel.
    """
    path = "/".join(str(label) for label in (master_seed, *labels))
    digest = hashlib.sha256(path.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1
