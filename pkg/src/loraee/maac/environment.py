"""
Per-channel training environment backed by the analytical model.

Agents are the devices matched to one channel. Each slot every agent picks an
(SF, TP-level) pair; the group is scored analytically and every agent then sees
its own delayed PDR, normalised EE and gateway distances.
"""

from dataclasses import dataclass

import numpy as np

from loraee.analytical import AnalyticalModel
from loraee.domain.radio import SPREADING_FACTORS
from loraee.domain.schemas import MaacHyperparams
from loraee.exceptions import SchemaLogicError
from loraee.typing import FloatArray, IntArray


@dataclass(frozen=True)
class ActionSpace:
    """Flat action index = SF position * J + TP level."""

    power_grid: tuple[float, ...]

    @property
    def levels(self) -> int:
        return len(self.power_grid)

    @property
    def size(self) -> int:
        return len(SPREADING_FACTORS) * self.levels

    def encode(self, sf: int, level: int) -> int:
        if sf not in SPREADING_FACTORS or not 0 <= level < self.levels:
            raise SchemaLogicError(f"Invalid action (SF{sf}, level {level})")
        return (sf - SPREADING_FACTORS[0]) * self.levels + level

    def decode(self, index: int) -> tuple[int, float]:
        """Returns (SF, TP dBm)."""
        if not 0 <= index < self.size:
            raise SchemaLogicError(f"Action index {index} outside [0, {self.size})")
        m, j = divmod(int(index), self.levels)
        return SPREADING_FACTORS[m], self.power_grid[j]

    def decode_many(self, indices: IntArray) -> tuple[IntArray, FloatArray]:
        idx = np.asarray(indices, dtype=np.int64)
        m, j = np.divmod(idx, self.levels)
        return m + SPREADING_FACTORS[0], np.asarray(self.power_grid)[j]


def build_observation(pdr: FloatArray, ee: FloatArray, distances: FloatArray, ee_scale: float) -> FloatArray:
    """
    Stacks (PDR, EE / ee_scale, normalised distances) per agent: (n, 2 + K).

    `distances` are already divided by the cell radius and capped at 1.
    """
    pdr = np.asarray(pdr, dtype=float)
    ee = np.asarray(ee, dtype=float)
    return np.column_stack([pdr, ee / ee_scale, distances])


def reset_observation(distances: FloatArray) -> FloatArray:
    """Slot-0 observation: no history, so PDR and EE read 0."""
    n = distances.shape[0]
    return np.column_stack([np.zeros(n), np.zeros(n), distances])


def reward(
    channel_ee: float,
    channel_ee_without: float,
    group_size: int,
    pdr: float,
    pdr_threshold: float,
    weight: float | None = None,
    denominator: int | None = None,
) -> float:
    """
    Group reward for one agent, gated by its PDR constraint.

    r = weight * EE_c + (1 - weight) * (EE_c / N - EE_{c,-i} / (N - 1)), where N is
    `denominator` (the group size by default). The weight defaults to 1 / N_c, the
    group size, whichever denominator is used.
    A singleton group has no counterfactual partner, so its second term is 0.
    """
    if pdr < pdr_threshold:
        return 0.0
    n = denominator if denominator is not None else group_size
    rho = weight if weight is not None else 1.0 / group_size
    counterfactual = 0.0 if group_size <= 1 else channel_ee / n - channel_ee_without / (n - 1)
    return rho * channel_ee + (1.0 - rho) * counterfactual


@dataclass(frozen=True)
class SlotOutcome:
    sfs: IntArray
    tps_dbm: FloatArray
    ee: FloatArray
    pdr: FloatArray
    channel_ee: float
    ee_without: FloatArray
    rewards: FloatArray


class GroupEnvironment:
    def __init__(
        self,
        model: AnalyticalModel,
        channel: int,
        members: IntArray,
        hyperparams: MaacHyperparams,
        power_grid: tuple[float, ...],
    ) -> None:
        self.model = model
        self.channel = channel
        self.members = np.asarray(members, dtype=np.int64)
        self.hp = hyperparams
        self.actions = ActionSpace(power_grid)
        self.ee_scale = model.ee_scale()
        radius = model.scenario.cell_radius_m
        self.distances = np.minimum(model.distance_m[self.members] / radius, 1.0)
        self.denominator = model.scenario.ed_count if hyperparams.reward_denominator == "total" else None

    @property
    def n_agents(self) -> int:
        return len(self.members)

    @property
    def obs_dim(self) -> int:
        return 2 + self.model.scenario.gw_count

    def reset(self) -> FloatArray:
        return reset_observation(self.distances)

    def evaluate(self, actions: IntArray) -> SlotOutcome:
        n = self.n_agents
        sfs, tps = self.actions.decode_many(actions)
        channels = np.full(n, self.channel)
        ee, pdr = self.model.ee_members(self.members, channels, sfs, tps)
        channel_ee = float(ee.sum())
        ee_without = np.zeros(n)
        if n > 1:
            for i in range(n):
                keep = np.arange(n) != i
                ee_without[i] = self.model.group_ee(self.members[keep], channels[keep], sfs[keep], tps[keep])
        scale = self.ee_scale if self.hp.normalize_rewards else 1.0
        rewards = np.array(
            [
                reward(
                    channel_ee,
                    float(ee_without[i]),
                    n,
                    float(pdr[i]),
                    self.hp.pdr_threshold,
                    self.hp.reward_weight,
                    self.denominator,
                )
                / scale
                for i in range(n)
            ]
        )
        return SlotOutcome(
            sfs=sfs,
            tps_dbm=tps,
            ee=ee,
            pdr=pdr,
            channel_ee=channel_ee,
            ee_without=ee_without,
            rewards=rewards,
        )

    def step(self, actions: IntArray) -> tuple[FloatArray, SlotOutcome]:
        outcome = self.evaluate(actions)
        return build_observation(outcome.pdr, outcome.ee, self.distances, self.ee_scale), outcome
