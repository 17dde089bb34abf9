"""
Greedy max-min energy-efficiency allocation.

An approximation of EF-LoRa: starting from round-robin channels, distance-table
SFs and maximum TP, the device with the lowest EE is moved to the single
(channel, SF, TP) choice that maximises the network-wide minimum EE. When the
weakest device cannot improve the minimum, the others are tried in ascending EE
order; the loop ends when no single-device change raises the minimum.
"""

from itertools import product

import numpy as np

from loraee.allocators.base_allocator import Allocation, BaseAllocator, round_robin_channels
from loraee.analytical import AnalyticalModel
from loraee.domain.radio import SPREADING_FACTORS, power_levels
from loraee.domain.schemas import Assignment, ChannelPlan, NetworkScenario
from loraee.matching import stage_one_parameters
from loraee.typing import FadingMode, FloatArray, IntArray
from loraee.utils.logging import logger

IMPROVEMENT_TOLERANCE = 1e-9


class _GreedyState:
    """Current parameters plus per-channel EE caches."""

    def __init__(self, model: AnalyticalModel, channels: IntArray, sfs: IntArray, tps: FloatArray) -> None:
        self.model = model
        self.channels = channels.copy()
        self.sfs = sfs.copy()
        self.tps = tps.copy()
        self.channel_ee: dict[int, FloatArray] = {}
        for c in range(model.plan.channel_count):
            self.refresh(c)

    def members(self, c: int) -> IntArray:
        return np.flatnonzero(self.channels == c)

    def _score(self, members: IntArray, c: int, sfs: IntArray, tps: FloatArray) -> FloatArray:
        ee, _ = self.model.ee_members(members, np.full(len(members), c), sfs, tps)
        return ee

    def refresh(self, c: int) -> None:
        idx = self.members(c)
        self.channel_ee[c] = self._score(idx, c, self.sfs[idx], self.tps[idx])

    def ee(self) -> FloatArray:
        out = np.zeros(len(self.channels))
        for c, values in self.channel_ee.items():
            out[self.members(c)] = values
        return out

    def min_ee(self) -> float:
        mins = [v.min() for v in self.channel_ee.values() if len(v)]
        return float(min(mins)) if mins else 0.0

    def min_after(self, i: int, c_new: int, sf: int, tp: float) -> float:
        """Network minimum EE if device i switched to (c_new, sf, tp)."""
        c_old = int(self.channels[i])
        touched: dict[int, FloatArray] = {}
        if c_new == c_old:
            idx = self.members(c_old)
            sfs, tps = self.sfs[idx].copy(), self.tps[idx].copy()
            pos = int(np.searchsorted(idx, i))
            sfs[pos], tps[pos] = sf, tp
            touched[c_old] = self._score(idx, c_old, sfs, tps)
        else:
            old_idx = self.members(c_old)
            keep = old_idx[old_idx != i]
            touched[c_old] = self._score(keep, c_old, self.sfs[keep], self.tps[keep])
            new_idx = np.append(self.members(c_new), i)
            sfs = np.append(self.sfs[new_idx[:-1]], sf)
            tps = np.append(self.tps[new_idx[:-1]], tp)
            touched[c_new] = self._score(new_idx, c_new, sfs, tps)
        mins = [v.min() for c, v in self.channel_ee.items() if c not in touched and len(v)]
        mins += [v.min() for v in touched.values() if len(v)]
        return float(min(mins)) if mins else 0.0

    def apply(self, i: int, c_new: int, sf: int, tp: float) -> None:
        c_old = int(self.channels[i])
        self.channels[i], self.sfs[i], self.tps[i] = c_new, sf, tp
        self.refresh(c_old)
        if c_new != c_old:
            self.refresh(c_new)


def eflora_assign(
    scenario: NetworkScenario,
    plan: ChannelPlan,
    levels: int = 10,
    max_steps: int | None = None,
    fading_mode: FadingMode = "expected-fading",
) -> Allocation:
    """
    Greedy max-min EE allocation.

    Returns the best-so-far assignment with `converged=False` when the step cap
    (20 N by default) is reached. `details["min_ee_trajectory"]` records the
    minimum EE after each accepted step.
    """
    n = scenario.ed_count
    model = AnalyticalModel(scenario, plan, fading_mode)
    sfs, tps = stage_one_parameters(scenario)
    state = _GreedyState(model, round_robin_channels(n, plan), sfs, tps)
    grid = power_levels(scenario.tp_min_dbm, scenario.tp_max_dbm, levels)
    options = list(product(range(plan.channel_count), SPREADING_FACTORS, grid))
    cap = max_steps if max_steps is not None else 20 * max(n, 1)

    trajectory = [state.min_ee()]
    steps = 0
    converged = n == 0
    while n and steps < cap:
        current = state.min_ee()
        order = np.argsort(state.ee(), kind="stable")
        best: tuple[float, int, int, int, float] | None = None
        for i in map(int, order):
            for c, sf, tp in options:
                if c != state.channels[i] and len(state.members(c)) >= plan.quota:
                    continue
                value = state.min_after(i, c, sf, tp)
                if best is None or value > best[0]:
                    best = (value, i, c, sf, tp)
            if best is not None and best[0] > current + IMPROVEMENT_TOLERANCE * max(abs(current), 1.0):
                break
        if best is None or best[0] <= current + IMPROVEMENT_TOLERANCE * max(abs(current), 1.0):
            converged = True
            break
        _, i, c, sf, tp = best
        state.apply(i, c, sf, tp)
        steps += 1
        trajectory.append(state.min_ee())

    if not converged:
        logger.warning(f"EF-LoRa greedy stopped at the step cap ({cap}); returning best-so-far.")
    assignment = Assignment.from_arrays(state.channels, state.sfs, state.tps)
    return Allocation(
        assignment=assignment,
        converged=converged,
        details={"min_ee_trajectory": trajectory, "steps": steps},
    )


class EfLoraAllocator(BaseAllocator):
    name = "eflora"

    def __init__(self, levels: int = 10, fading_mode: FadingMode = "expected-fading") -> None:
        self.levels = levels
        self.fading_mode = fading_mode

    def allocate(self, scenario: NetworkScenario, plan: ChannelPlan, seed: int) -> Allocation:
        return self.finalize(eflora_assign(scenario, plan, self.levels, fading_mode=self.fading_mode), scenario, plan)
