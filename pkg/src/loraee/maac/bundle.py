from dataclasses import dataclass

import numpy as np

from loraee.domain.radio import SPREADING_FACTORS
from loraee.domain.schemas import MaacHyperparams
from loraee.exceptions import SchemaLogicError
from loraee.maac.nn import (
    Params,
    actor_forward,
    agent_logits,
    critic_forward,
    init_actor,
    init_critic,
    sample_categorical,
    softmax,
)
from loraee.typing import FloatArray, IntArray


@dataclass
class AgentBundle:
    """Actors, attention critic and their targets for the devices of one channel."""

    channel: int
    agent_ids: list[int]
    power_grid: tuple[float, ...]
    obs_dim: int
    hyperparams: MaacHyperparams
    actor: Params
    actor_target: Params
    critic: Params
    critic_target: Params

    @classmethod
    def initialize(
        cls,
        channel: int,
        agent_ids: list[int],
        obs_dim: int,
        power_grid: tuple[float, ...],
        hyperparams: MaacHyperparams,
        rng: np.random.Generator,
    ) -> "AgentBundle":
        n = len(agent_ids)
        if n == 0:
            raise SchemaLogicError(f"Channel {channel} has no agents to train.")
        action_count = len(SPREADING_FACTORS) * len(power_grid)
        actor = init_actor(rng, n, obs_dim, hyperparams.actor_hidden, action_count)
        critic = init_critic(
            rng,
            n,
            obs_dim,
            action_count,
            hyperparams.embed_dim,
            hyperparams.heads,
            hyperparams.critic_hidden,
        )
        return cls(
            channel=channel,
            agent_ids=list(agent_ids),
            power_grid=tuple(power_grid),
            obs_dim=obs_dim,
            hyperparams=hyperparams,
            actor=actor,
            actor_target={k: v.copy() for k, v in actor.items()},
            critic=critic,
            critic_target={k: v.copy() for k, v in critic.items()},
        )

    @property
    def n_agents(self) -> int:
        return len(self.agent_ids)

    @property
    def action_count(self) -> int:
        return len(SPREADING_FACTORS) * len(self.power_grid)

    def policy(self, obs: FloatArray) -> FloatArray:
        """Action probabilities of every agent for one joint observation (n, d) -> (n, A)."""
        logits, _ = actor_forward(self.actor, obs[None], self.hyperparams.leaky_slope)
        return softmax(logits[0], axis=-1)

    def sample_actions(self, obs: FloatArray, rng: np.random.Generator) -> IntArray:
        return sample_categorical(rng, self.policy(obs))

    def act_greedy(self, agent: int, obs_i: FloatArray) -> int:
        """Most probable action of one agent given only its own observation."""
        return int(np.argmax(agent_logits(self.actor, agent, obs_i, self.hyperparams.leaky_slope)))


def attention_critic_forward(bundle: AgentBundle, obs: FloatArray, actions: IntArray, i: int) -> float:
    """Q_i of one joint step: obs (n, d) and actions (n,) of every agent in the group."""
    if not 0 <= i < bundle.n_agents:
        raise SchemaLogicError(f"Agent {i} is not in a group of {bundle.n_agents}.")
    q, _ = critic_forward(
        bundle.critic,
        np.asarray(obs, dtype=float)[None],
        np.asarray(actions, dtype=np.int64)[None],
        bundle.hyperparams.leaky_slope,
        bundle.hyperparams.attention,
    )
    return float(q[0, i])


def soft_target_update(bundle: AgentBundle, rate: float) -> None:
    """Polyak averaging of both target networks: target <- rate * online + (1 - rate) * target."""
    if not 0.0 < rate <= 1.0:
        raise SchemaLogicError(f"Target update rate must be in (0, 1], got {rate}")
    for online, target in ((bundle.actor, bundle.actor_target), (bundle.critic, bundle.critic_target)):
        for name, value in online.items():
            target[name] = rate * value + (1.0 - rate) * target[name]
