import numpy as np
import pytest
from scipy import stats

from loraee.exceptions import SchemaLogicError
from loraee.maac.buffer import ReplayBuffer, Transition


def _transition(value: float, n: int = 2, d: int = 3) -> Transition:
    return Transition(
        obs=np.full((n, d), value),
        actions=np.full(n, int(value), dtype=np.int64),
        rewards=np.full(n, value),
        next_obs=np.full((n, d), value + 1.0),
    )


def test_ring_buffer_overwrites_oldest() -> None:
    """Tests that the buffer keeps only the last `capacity` transitions."""
    # Arrange
    buffer = ReplayBuffer(capacity=3, n_agents=2, obs_dim=3)

    # Act
    for v in range(5):
        buffer.push(_transition(float(v)))

    # Assert
    assert len(buffer) == 3
    assert sorted(buffer.rewards[:, 0].tolist()) == [2.0, 3.0, 4.0]


def test_sample_is_without_replacement(rng: np.random.Generator) -> None:
    """Tests batch shapes and distinct rows inside one batch."""
    # Arrange
    buffer = ReplayBuffer(capacity=10, n_agents=2, obs_dim=3)
    for v in range(6):
        buffer.push(_transition(float(v)))

    # Act
    batch = buffer.sample(6, rng)

    # Assert
    assert batch.batch_size == 6
    assert batch.obs.shape == (6, 2, 3)
    assert sorted(batch.rewards[:, 0].tolist()) == [0.0, 1.0, 2.0, 3.0, 4.0, 5.0]
    np.testing.assert_array_equal(batch.next_obs, batch.obs + 1.0)


def test_sampling_is_uniform_over_stored_transitions(rng: np.random.Generator) -> None:
    """Tests that 10^5 sampled rows spread evenly over a full 100-item buffer."""
    # Arrange
    buffer = ReplayBuffer(capacity=100, n_agents=2, obs_dim=3)
    for v in range(100):
        buffer.push(_transition(float(v)))

    # Act
    drawn = np.concatenate([buffer.sample(10, rng).rewards[:, 0] for _ in range(10_000)])

    # Assert
    counts = np.bincount(drawn.astype(np.int64), minlength=100)
    assert counts.sum() == 100_000
    assert stats.chisquare(counts).pvalue > 1e-3
    assert np.all(np.abs(counts - 1_000) < 5 * np.sqrt(1_000))


def test_sample_larger_than_content_raises(rng: np.random.Generator) -> None:
    """Tests that a batch cannot exceed the stored transitions."""
    buffer = ReplayBuffer(capacity=10, n_agents=2, obs_dim=3)
    buffer.push(_transition(0.0))
    with pytest.raises(SchemaLogicError):
        buffer.sample(2, rng)


def test_transition_checks_agent_arity() -> None:
    """Tests that all fields must describe the same agents."""
    with pytest.raises(SchemaLogicError, match="arity"):
        Transition(obs=np.zeros((2, 3)), actions=np.zeros(3, dtype=np.int64), rewards=np.zeros(2), next_obs=np.zeros((2, 3)))


def test_buffer_needs_capacity() -> None:
    """Tests the capacity guard."""
    with pytest.raises(SchemaLogicError):
        ReplayBuffer(capacity=0, n_agents=1, obs_dim=1)
