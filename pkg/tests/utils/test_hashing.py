from pathlib import Path

import pytest

from loraee.exceptions import LoraEEException
from loraee.utils.hashing import derive_seed, generate_config_hash, generate_run_hash, get_file_hash


def test_generate_config_hash_ignores_key_order() -> None:
    """Tests that two equal configs hash equal regardless of key insertion order."""
    # Arrange
    config_a = {"channel_count": 4, "seeds": [0, 1], "bandwidth_hz": 125000.0}
    config_b = {"bandwidth_hz": 125000.0, "channel_count": 4, "seeds": [0, 1]}

    # Act
    hash_a = generate_config_hash(config_a)
    hash_b = generate_config_hash(config_b)

    # Assert
    assert hash_a == hash_b
    assert hash_a.startswith("sha256-")


def test_generate_config_hash_is_sensitive() -> None:
    """Tests that changing one value changes the config hash."""
    # Arrange
    base = {"channel_count": 4, "quota": 25}

    # Act
    changed = generate_config_hash({**base, "quota": 26})

    # Assert
    assert changed != generate_config_hash(base)


def test_generate_run_hash_is_deterministic_and_order_invariant() -> None:
    """Tests that input hash order does not affect the run hash."""
    # Arrange
    hashes_1 = ["hash_a", "hash_b", "hash_c"]
    hashes_2 = ["hash_c", "hash_a", "hash_b"]

    # Act
    run_hash_1 = generate_run_hash("compare", hashes_1, 0)
    run_hash_2 = generate_run_hash("compare", hashes_2, 0)

    # Assert
    assert run_hash_1 == run_hash_2
    assert run_hash_1.startswith("loraee-run-")


@pytest.mark.parametrize(
    "command, seed",
    [("validate", 0), ("compare", 1)],
)
def test_generate_run_hash_is_sensitive_to_command_and_seed(command: str, seed: int) -> None:
    """Tests that the command name and the seed both enter the run hash."""
    # Arrange
    reference = generate_run_hash("compare", ["hash_a"], 0)

    # Act
    other = generate_run_hash(command, ["hash_a"], seed)

    # Assert
    assert other != reference


def test_get_file_hash(tmp_path: Path) -> None:
    """Tests that identical file contents hash equal and differ from other contents."""
    # Arrange
    a = tmp_path / "a.yaml"
    b = tmp_path / "b.yaml"
    c = tmp_path / "c.yaml"
    a.write_text("seed: 1\n")
    b.write_text("seed: 1\n")
    c.write_text("seed: 2\n")

    # Act / Assert
    assert get_file_hash(a) == get_file_hash(b)
    assert get_file_hash(a) != get_file_hash(c)
    assert len(get_file_hash(a)) == 64


def test_get_file_hash_missing_file_raises(tmp_path: Path) -> None:
    """Tests that hashing a missing file raises the project exception."""
    with pytest.raises(LoraEEException, match="File I/O error"):
        get_file_hash(tmp_path / "missing.yaml")


def test_derive_seed_is_stable_and_label_sensitive() -> None:
    """Tests that child seeds depend only on the master seed and labels."""
    # Act
    first = derive_seed(42, "eds", 100)
    second = derive_seed(42, "eds", 100)

    # Assert
    assert first == second
    assert 0 <= first < 2**63
    assert derive_seed(42, "eds", 120) != first
    assert derive_seed(43, "eds", 100) != first
