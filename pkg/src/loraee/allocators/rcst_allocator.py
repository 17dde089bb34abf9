import numpy as np

from loraee.allocators.base_allocator import Allocation, BaseAllocator, random_channels
from loraee.domain.radio import SPREADING_FACTORS, power_levels
from loraee.domain.schemas import Assignment, ChannelPlan, NetworkScenario


def rcst_assign(scenario: NetworkScenario, plan: ChannelPlan, seed: int, levels: int = 10) -> Allocation:
    """Random channel, SF and grid TP for every device, honouring the channel quota."""
    rng = np.random.default_rng(seed)
    n = scenario.ed_count
    channels = random_channels(rng, n, plan)
    sfs = rng.choice(np.array(SPREADING_FACTORS), size=n)
    grid = np.array(power_levels(scenario.tp_min_dbm, scenario.tp_max_dbm, levels))
    tps = grid[rng.integers(0, levels, size=n)]
    return Allocation(assignment=Assignment.from_arrays(channels, sfs, tps))


class RcstAllocator(BaseAllocator):
    """Random selection of channels, SFs and TPs."""

    name = "rcst"

    def __init__(self, levels: int = 10) -> None:
        self.levels = levels

    def allocate(self, scenario: NetworkScenario, plan: ChannelPlan, seed: int) -> Allocation:
        return self.finalize(rcst_assign(scenario, plan, seed, self.levels), scenario, plan)
