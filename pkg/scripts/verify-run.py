"""
Verifies that a loraee output table belongs to the inputs it claims.

This script reads the `.meta.json` sidecar of an output file, locates the
input files the run consumed (scenario, config, assignment, checkpoint), and
re-computes the run hash from their contents, the recorded config hash and the
seed. A match proves the output was produced from exactly these inputs.

Example Usage:
    python scripts/verify-run.py \
        --meta "runs/s42/analysis.meta.json" \
        --input-dir "runs/s42"
"""

import argparse
import json
import sys
from pathlib import Path

from loraee.exceptions import LoraEEIOException
from loraee.utils.hashing import generate_run_hash, get_file_hash
from loraee.utils.logging import logger

# ANSI color codes for pretty printing
GREEN = "\033[92m"
RED = "\033[91m"
RESET = "\033[0m"


def main() -> None:
    parser = argparse.ArgumentParser(description="Verify the provenance of a loraee output table.")
    parser.add_argument("--meta", type=Path, required=True, help="Path to the <name>.meta.json sidecar.")
    parser.add_argument(
        "--input-dir",
        type=Path,
        required=True,
        help="Directory holding the ORIGINAL input files named in the sidecar.",
    )
    args = parser.parse_args()

    try:
        logger.info(f"Loading sidecar from: {args.meta}")
        with args.meta.open("r") as f:
            meta = json.load(f)

        recorded = meta["run_hash"]
        command = meta["command"]
        seed = meta["seed"]
        logger.info(f"Verifying '{command}' output '{meta['output_file']}' (seed {seed})")
        logger.info(f"Recorded run hash: {recorded}")

        hashes = []
        for filename in meta["input_files"]:
            file_path = args.input_dir / filename
            if not file_path.is_file():
                logger.error(f"{RED}FAILURE: Input file '{filename}' not found at expected path: {file_path}{RESET}")
                sys.exit(1)
            file_hash = get_file_hash(file_path)
            hashes.append(file_hash)
            logger.info(f"  - Calculated hash for '{filename}': {file_hash[:12]}...")
        hashes.append(meta["config_hash"])

        recalculated = generate_run_hash(command, hashes, seed)
        logger.info(f"Recalculated run hash: {recalculated}")

        if recalculated == recorded:
            logger.info(f"{GREEN}---> SUCCESS: Verification passed. The hashes match! <---{RESET}")
        else:
            logger.error(f"{RED}---> FAILURE: Verification FAILED. The hashes DO NOT match. <---{RESET}")
            logger.error("An input file changed after the run, or the sidecar was edited.")
            sys.exit(1)

    except FileNotFoundError:
        logger.error(f"{RED}FAILURE: Sidecar not found at: {args.meta}{RESET}")
        sys.exit(1)
    except (json.JSONDecodeError, KeyError) as e:
        logger.error(f"{RED}FAILURE: Sidecar is corrupted or malformed. Error: {e}{RESET}")
        sys.exit(1)
    except LoraEEIOException as e:
        logger.error(f"{RED}FAILURE: An I/O error occurred while reading an input file: {e}{RESET}")
        sys.exit(1)


if __name__ == "__main__":
    main()
