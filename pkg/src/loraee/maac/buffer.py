from dataclasses import dataclass

import numpy as np

from loraee.exceptions import SchemaLogicError
from loraee.typing import FloatArray, IntArray


@dataclass(frozen=True)
class Transition:
    """(o, a, r, o') for every agent of a group; a leading batch axis is optional."""

    obs: FloatArray
    actions: IntArray
    rewards: FloatArray
    next_obs: FloatArray

    def __post_init__(self) -> None:
        n = self.actions.shape[-1]
        if self.obs.shape[-2] != n or self.next_obs.shape[-2] != n or self.rewards.shape[-1] != n:
            raise SchemaLogicError(
                f"Agent arity mismatch: obs {self.obs.shape}, actions {self.actions.shape}, "
                f"rewards {self.rewards.shape}, next_obs {self.next_obs.shape}"
            )

    @property
    def batch_size(self) -> int:
        return int(self.actions.shape[0]) if self.actions.ndim == 2 else 1


class ReplayBuffer:
    """Fixed-capacity ring buffer of group transitions."""

    def __init__(self, capacity: int, n_agents: int, obs_dim: int) -> None:
        if capacity < 1:
            raise SchemaLogicError(f"Replay capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.obs = np.zeros((capacity, n_agents, obs_dim))
        self.actions = np.zeros((capacity, n_agents), dtype=np.int64)
        self.rewards = np.zeros((capacity, n_agents))
        self.next_obs = np.zeros((capacity, n_agents, obs_dim))
        self._cursor = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def push(self, transition: Transition) -> None:
        i = self._cursor
        self.obs[i] = transition.obs
        self.actions[i] = transition.actions
        self.rewards[i] = transition.rewards
        self.next_obs[i] = transition.next_obs
        self._cursor = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> Transition:
        """Uniform mini-batch, without replacement inside the batch."""
        if batch_size > self._size:
            raise SchemaLogicError(f"Cannot sample {batch_size} transitions from a buffer holding {self._size}")
        idx = rng.choice(self._size, size=batch_size, replace=False)
        return Transition(
            obs=self.obs[idx],
            actions=self.actions[idx],
            rewards=self.rewards[idx],
            next_obs=self.next_obs[idx],
        )
