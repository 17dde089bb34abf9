"""
Centralised training, distributed execution.

Every channel group trains its own `AgentBundle` against the analytical model.
Critics regress on soft Bellman targets built from target actors and the
target critic; actors ascend E_pi[Q - alpha log pi] using the critic's values
for all of their own actions with the other agents' actions held fixed.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from pydantic import BaseModel
from tqdm import tqdm

from loraee.analytical import AnalyticalModel
from loraee.domain.radio import power_levels
from loraee.domain.schemas import Assignment, ChannelPlan, MaacHyperparams, NetworkScenario
from loraee.exceptions import NumericalDivergenceError, SchemaLogicError
from loraee.maac.buffer import ReplayBuffer, Transition
from loraee.maac.bundle import AgentBundle, soft_target_update
from loraee.maac.environment import GroupEnvironment
from loraee.maac.nn import (
    Params,
    actor_backward,
    actor_forward,
    all_finite,
    clip_by_global_norm,
    critic_backward,
    critic_forward,
    log_softmax,
    one_hot,
    q_all_actions,
    sample_categorical,
    sgd_step,
)
from loraee.matching import Matching
from loraee.typing import FadingMode, FloatArray
from loraee.utils.logging import logger


class LearningCurvePoint(BaseModel):
    episode: int
    mean_reward: float
    system_ee: float
    actor_loss: float | None = None
    critic_loss: float | None = None


@dataclass
class GroupTraining:
    bundle: AgentBundle
    curve: list[LearningCurvePoint] = field(default_factory=list)


@dataclass
class TrainingResult:
    bundles: list[AgentBundle]
    curve: list[LearningCurvePoint]
    group_curves: dict[int, list[LearningCurvePoint]]


# -------------------------------------------------------------------
#  Critic
# -------------------------------------------------------------------


def critic_targets(bundle: AgentBundle, batch: Transition, rng: np.random.Generator) -> FloatArray:
    """y = r + mu * (Q_target(o', a') - alpha * log pi_target(a'|o')), a' drawn from the target actors."""
    hp = bundle.hyperparams
    if hp.discount == 0.0:
        return batch.rewards.copy()
    logits, _ = actor_forward(bundle.actor_target, batch.next_obs, hp.leaky_slope)
    log_pi = log_softmax(logits)
    next_actions = sample_categorical(rng, np.exp(log_pi))
    q_next, _ = critic_forward(bundle.critic_target, batch.next_obs, next_actions, hp.leaky_slope, hp.attention)
    log_pi_next = np.take_along_axis(log_pi, next_actions[..., None], axis=-1)[..., 0]
    return batch.rewards + hp.discount * (q_next - hp.temperature * log_pi_next)


def critic_loss_and_grads(
    critic: Params, batch: Transition, targets: FloatArray, slope: float, attention: str = "learned"
) -> tuple[float, Params]:
    """Sum over agents of the batch-mean squared TD error, and its gradient."""
    mode = "uniform" if attention == "uniform" else "learned"
    q, cache = critic_forward(critic, batch.obs, batch.actions, slope, mode)
    err = q - targets
    loss = float((err**2).mean(axis=0).sum())
    grads = critic_backward(critic, cache, 2.0 * err / err.shape[0], slope, mode)
    return loss, grads


def critic_update(bundle: AgentBundle, batch: Transition, rng: np.random.Generator) -> float:
    """One clipped SGD step on the joint critic loss; returns the pre-step loss."""
    hp = bundle.hyperparams
    targets = critic_targets(bundle, batch, rng)
    loss, grads = critic_loss_and_grads(bundle.critic, batch, targets, hp.leaky_slope, hp.attention)
    if not math.isfinite(loss) or not all_finite(grads):
        raise NumericalDivergenceError(f"Critic loss became non-finite (loss={loss}).")
    clip_by_global_norm(grads, hp.grad_clip)
    sgd_step(bundle.critic, grads, hp.learning_rate)
    return loss


# -------------------------------------------------------------------
#  Actors
# -------------------------------------------------------------------


def actor_objective(actor: Params, obs: FloatArray, q_values: FloatArray, temperature: float, slope: float) -> float:
    """mean_b sum_i sum_a pi_i(a|o_i) * (Q_i(a) - alpha log pi_i(a|o_i)), with Q frozen."""
    logits, _ = actor_forward(actor, obs, slope)
    log_pi = log_softmax(logits)
    pi = np.exp(log_pi)
    return float((pi * (q_values - temperature * log_pi)).sum(axis=-1).sum(axis=-1).mean())


def actor_gradients(
    actor: Params,
    obs: FloatArray,
    q_values: FloatArray,
    temperature: float,
    slope: float,
    mode: str = "exact",
    sampled_actions: np.ndarray | None = None,
) -> tuple[Params, FloatArray]:
    """
    Ascent direction of the soft policy objective for every agent.

    The advantage A = Q - sum_a pi Q uses the counterfactual baseline. In
    "exact" mode the expectation over the agent's own action is taken in
    closed form, which is the exact gradient of `actor_objective`; "sampled"
    uses the score-function estimator at `sampled_actions`.

    Returns:
        Gradients of the objective (to be ascended) and the advantages (B, n, A).
    """
    logits, cache = actor_forward(actor, obs, slope)
    log_pi = log_softmax(logits)
    pi = np.exp(log_pi)
    baseline = (pi * q_values).sum(axis=-1, keepdims=True)
    advantage = q_values - baseline
    weight = advantage - temperature * log_pi
    if mode == "exact":
        d_logits = pi * (weight - (pi * weight).sum(axis=-1, keepdims=True))
    else:
        if sampled_actions is None:
            raise SchemaLogicError("Sampled actor gradients need the sampled actions.")
        chosen = np.take_along_axis(weight, sampled_actions[..., None], axis=-1)
        d_logits = (one_hot(sampled_actions, pi.shape[-1]) - pi) * chosen
    grads = actor_backward(actor, cache, d_logits / obs.shape[0], slope)
    return grads, advantage


def joint_q_values(bundle: AgentBundle, obs: FloatArray, others: np.ndarray) -> FloatArray:
    """Q_i for every own action of every agent i, others fixed at `others`: (B, n, A)."""
    hp = bundle.hyperparams
    return np.stack(
        [q_all_actions(bundle.critic, obs, others, i, hp.leaky_slope, hp.attention) for i in range(bundle.n_agents)],
        axis=1,
    )


def actor_update(bundle: AgentBundle, batch: Transition, rng: np.random.Generator) -> tuple[FloatArray, float]:
    """
    One clipped gradient-ascent step per actor.

    Other agents' actions are drawn from their current policies.

    Returns:
        Per-agent pre-clip gradient norms and the pre-step objective.
    """
    hp = bundle.hyperparams
    logits, _ = actor_forward(bundle.actor, batch.obs, hp.leaky_slope)
    pi = np.exp(log_softmax(logits))
    current = sample_categorical(rng, pi)
    q_values = joint_q_values(bundle, batch.obs, current)
    objective = actor_objective(bundle.actor, batch.obs, q_values, hp.temperature, hp.leaky_slope)
    grads, _ = actor_gradients(
        bundle.actor, batch.obs, q_values, hp.temperature, hp.leaky_slope, hp.actor_expectation, current
    )
    if not math.isfinite(objective) or not all_finite(grads):
        raise NumericalDivergenceError(f"Actor objective became non-finite (objective={objective}).")

    norms = np.zeros(bundle.n_agents)
    for i in range(bundle.n_agents):
        # views into the stacked gradients, clipped in place
        norms[i] = clip_by_global_norm({name: g[i] for name, g in grads.items()}, hp.grad_clip)
    # ascent
    sgd_step(bundle.actor, grads, -hp.learning_rate)
    return norms, objective


# -------------------------------------------------------------------
#  Training loop
# -------------------------------------------------------------------


def train_group(
    env: GroupEnvironment, hyperparams: MaacHyperparams, seed: int | np.random.SeedSequence, progress: bool = False
) -> GroupTraining:
    """
    Trains one channel group for `episodes` x `slots_per_episode` slots.

    Raises:
        NumericalDivergenceError: when a loss or the parameters become non-finite.
    """
    hp = hyperparams
    rng = np.random.default_rng(seed)
    bundle = AgentBundle.initialize(
        env.channel, [int(i) for i in env.members], env.obs_dim, env.actions.power_grid, hp, rng
    )
    capacity = min(hp.buffer_size, hp.episodes * hp.slots_per_episode)
    buffer = ReplayBuffer(capacity, env.n_agents, env.obs_dim)
    curve: list[LearningCurvePoint] = []
    slot = 0

    for episode in tqdm(range(hp.episodes), desc=f"MAAC ch{env.channel}", disable=not progress):
        obs = env.reset()
        rewards, channel_ee = [], []
        actor_losses, critic_losses = [], []
        for _ in range(hp.slots_per_episode):
            actions = bundle.sample_actions(obs, rng)
            next_obs, outcome = env.step(actions)
            buffer.push(Transition(obs=obs, actions=actions, rewards=outcome.rewards, next_obs=next_obs))
            rewards.append(float(outcome.rewards.mean()))
            channel_ee.append(outcome.channel_ee)
            obs = next_obs
            slot += 1

            if slot % hp.update_every == 0 and len(buffer) > hp.batch_size:
                batch = buffer.sample(hp.batch_size, rng)
                try:
                    critic_losses.append(critic_update(bundle, batch, rng))
                    _, objective = actor_update(bundle, batch, rng)
                except NumericalDivergenceError as e:
                    msg = f"channel {env.channel}, episode {episode}, slot {slot}: {e}"
                    logger.error(f"Training diverged at {msg}")
                    raise NumericalDivergenceError(msg) from e
                actor_losses.append(-objective)
                soft_target_update(bundle, hp.target_rate)
                if not all_finite(bundle.actor, bundle.critic):
                    msg = f"Parameters became non-finite at channel {env.channel}, episode {episode}, slot {slot}"
                    logger.error(msg)
                    raise NumericalDivergenceError(msg)

        point = LearningCurvePoint(
            episode=episode,
            mean_reward=float(np.mean(rewards)),
            system_ee=float(np.mean(channel_ee)),
            actor_loss=float(np.mean(actor_losses)) if actor_losses else None,
            critic_loss=float(np.mean(critic_losses)) if critic_losses else None,
        )
        curve.append(point)
        logger.debug(f"ch{env.channel} episode {episode}: reward {point.mean_reward:.4g}, EE {point.system_ee:.4g}")

    return GroupTraining(bundle=bundle, curve=curve)


def _train_group_job(
    args: tuple[NetworkScenario, ChannelPlan, int, list[int], MaacHyperparams, FadingMode, np.random.SeedSequence],
) -> GroupTraining:
    scenario, plan, channel, members, hp, fading_mode, seq = args
    model = AnalyticalModel(scenario, plan, fading_mode)
    grid = tuple(power_levels(scenario.tp_min_dbm, scenario.tp_max_dbm, hp.power_levels))
    env = GroupEnvironment(model, channel, np.asarray(members), hp, grid)
    return train_group(env, hp, seq)


def _merge_curves(groups: list[GroupTraining]) -> list[LearningCurvePoint]:
    if not groups:
        return []
    merged = []
    weights = np.array([g.bundle.n_agents for g in groups], dtype=float)
    for e in range(len(groups[0].curve)):
        points = [g.curve[e] for g in groups]
        actor = [p.actor_loss for p in points if p.actor_loss is not None]
        critic = [p.critic_loss for p in points if p.critic_loss is not None]
        merged.append(
            LearningCurvePoint(
                episode=e,
                mean_reward=float(np.average([p.mean_reward for p in points], weights=weights)),
                system_ee=float(sum(p.system_ee for p in points)),
                actor_loss=float(np.mean(actor)) if actor else None,
                critic_loss=float(np.mean(critic)) if critic else None,
            )
        )
    return merged


def train(
    scenario: NetworkScenario,
    plan: ChannelPlan,
    matching: Matching,
    hyperparams: MaacHyperparams,
    seed: int,
    fading_mode: FadingMode = "expected-fading",
    workers: int = 1,
) -> TrainingResult:
    """
    Trains one independent bundle per non-empty channel group.

    Group seeds are spawned per channel index, so results do not depend on `workers`.
    The merged curve sums channel EE into system EE and averages rewards over all agents.
    """
    children = np.random.SeedSequence(seed).spawn(plan.channel_count)
    jobs = [
        (scenario, plan, c, matching.members(c), hyperparams, fading_mode, children[c])
        for c in range(plan.channel_count)
        if matching.members(c)
    ]
    logger.info(f"Training {len(jobs)} channel groups for {hyperparams.episodes} episodes each")
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            groups = list(tqdm(pool.map(_train_group_job, jobs), total=len(jobs), desc="Channel groups"))
    else:
        groups = [_train_group_job(job) for job in tqdm(jobs, desc="Channel groups", disable=len(jobs) < 2)]

    return TrainingResult(
        bundles=[g.bundle for g in groups],
        curve=_merge_curves(groups),
        group_curves={g.bundle.channel: g.curve for g in groups},
    )


# -------------------------------------------------------------------
#  Execution
# -------------------------------------------------------------------


def execute_policy(
    bundles: list[AgentBundle],
    scenario: NetworkScenario,
    plan: ChannelPlan,
    slots: int | None = None,
    fading_mode: FadingMode = "expected-fading",
) -> Assignment:
    """
    Greedy distributed rollout from the reset observation.

    Each agent acts on its own observation only; after `slots` slots (one
    training episode by default) the last chosen SF/TP form the assignment.
    """
    n = scenario.ed_count
    channels = np.full(n, -1, dtype=np.int64)
    sfs = np.full(n, 12, dtype=np.int64)
    tps = np.full(n, scenario.tp_max_dbm)
    model = AnalyticalModel(scenario, plan, fading_mode)

    for bundle in bundles:
        env = GroupEnvironment(model, bundle.channel, np.asarray(bundle.agent_ids), bundle.hyperparams, bundle.power_grid)
        horizon = slots if slots is not None else bundle.hyperparams.slots_per_episode
        obs = env.reset()
        actions = np.zeros(bundle.n_agents, dtype=np.int64)
        for _ in range(horizon):
            actions = np.array([bundle.act_greedy(i, obs[i]) for i in range(bundle.n_agents)], dtype=np.int64)
            obs, _ = env.step(actions)
        group_sfs, group_tps = env.actions.decode_many(actions)
        idx = np.asarray(bundle.agent_ids)
        channels[idx] = bundle.channel
        sfs[idx] = group_sfs
        tps[idx] = group_tps

    missing = np.flatnonzero(channels < 0)
    if missing.size:
        raise SchemaLogicError(f"{missing.size} EDs are not covered by any trained bundle (first: {int(missing[0])}).")
    return Assignment.from_arrays(channels, sfs, tps)
