import numpy as np
import pytest

from loraee.domain.schemas import MaacHyperparams
from loraee.exceptions import SchemaLogicError
from loraee.maac.bundle import AgentBundle, attention_critic_forward
from loraee.maac.nn import critic_forward


def _bundle(n: int, hp: MaacHyperparams, rng: np.random.Generator) -> AgentBundle:
    return AgentBundle.initialize(0, list(range(n)), 4, (2.0, 11.0, 20.0), hp, rng)


class TestAttentionCritic:
    def test_matches_batched_forward(self, tiny_hyperparams: MaacHyperparams, rng: np.random.Generator) -> None:
        """Tests that the single-step Q equals the batched critic output."""
        # Arrange
        bundle = _bundle(3, tiny_hyperparams, rng)
        obs = rng.uniform(size=(3, 4))
        actions = np.array([0, 5, 17])

        # Act
        q = [attention_critic_forward(bundle, obs, actions, i) for i in range(3)]

        # Assert
        batched, _ = critic_forward(bundle.critic, obs[None], actions[None], tiny_hyperparams.leaky_slope)
        np.testing.assert_allclose(q, batched[0])

    def test_attention_weights_sum_to_one(
        self, tiny_hyperparams: MaacHyperparams, rng: np.random.Generator
    ) -> None:
        """Tests that every head's weights cover the other agents only and sum to one."""
        bundle = _bundle(4, tiny_hyperparams, rng)
        _, cache = critic_forward(
            bundle.critic, rng.uniform(size=(2, 4, 4)), rng.integers(0, 18, size=(2, 4)), 0.01
        )
        np.testing.assert_allclose(cache.attention.sum(axis=-1), 1.0)
        assert np.all(np.diagonal(cache.attention, axis1=2, axis2=3) == 0.0)

    def test_two_agents_attend_fully_to_each_other(
        self, tiny_hyperparams: MaacHyperparams, rng: np.random.Generator
    ) -> None:
        bundle = _bundle(2, tiny_hyperparams, rng)
        _, cache = critic_forward(bundle.critic, rng.uniform(size=(1, 2, 4)), np.array([[3, 9]]), 0.01)
        np.testing.assert_allclose(cache.attention[0, :, 0, 1], 1.0)
        np.testing.assert_allclose(cache.attention[0, :, 1, 0], 1.0)

    def test_unknown_agent(self, tiny_hyperparams: MaacHyperparams, rng: np.random.Generator) -> None:
        bundle = _bundle(2, tiny_hyperparams, rng)
        with pytest.raises(SchemaLogicError, match="not in a group of 2"):
            attention_critic_forward(bundle, np.zeros((2, 4)), np.zeros(2, dtype=np.int64), 2)
