from abc import ABC, abstractmethod
from typing import Any

import numpy as np
from pydantic import BaseModel, Field

from loraee.domain.constraints import validate_assignment
from loraee.domain.schemas import Assignment, ChannelPlan, NetworkScenario
from loraee.typing import IntArray


class Allocation(BaseModel):
    """An allocator's output: a validated assignment plus devices it could not serve as intended."""

    assignment: Assignment
    flagged: list[int] = Field(default_factory=list)
    converged: bool = True
    details: dict[str, Any] = Field(default_factory=dict)


class BaseAllocator(ABC):
    """
    Abstract base class for all channel / SF / TP allocators.

    An allocator's role is to turn a scenario and channel plan into an
    `Assignment` that the shared validator accepts.
    """

    name: str = "base"

    @abstractmethod
    def allocate(self, scenario: NetworkScenario, plan: ChannelPlan, seed: int) -> Allocation:
        """
        Computes the per-device (channel, SF, TP) for a scenario.

        Implementations must return assignments that pass `validate_assignment`;
        `finalize` does this check.

        Args:
            scenario: The network to allocate.
            plan: Channels, bandwidths and per-channel quota.
            seed: Seed for any randomness; deterministic allocators ignore it.

        Returns:
            The allocation and any flags raised while producing it.
        """
        raise NotImplementedError

    @staticmethod
    def finalize(allocation: Allocation, scenario: NetworkScenario, plan: ChannelPlan) -> Allocation:
        validate_assignment(allocation.assignment, scenario, plan)
        return allocation


def round_robin_channels(ed_count: int, plan: ChannelPlan) -> IntArray:
    """Channel i mod C for device i; never exceeds a quota of ceil(N/C)."""
    plan.require_capacity(ed_count)
    return np.arange(ed_count, dtype=np.int64) % plan.channel_count


def random_channels(rng: np.random.Generator, ed_count: int, plan: ChannelPlan) -> IntArray:
    """Uniformly random channels filling a random subset of the quota slots."""
    plan.require_capacity(ed_count)
    slots = np.repeat(np.arange(plan.channel_count, dtype=np.int64), plan.quota)
    return rng.permutation(slots)[:ed_count]
