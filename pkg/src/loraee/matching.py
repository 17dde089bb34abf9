"""
Stage-1 channel assignment: many-to-one swap matching with externalities.

Devices keep the maximum TP and their distance-table SF while channels are
swapped pairwise. A swap is executed when it leaves both devices and both
channels no worse off and improves at least one of them; the run stops when a
full scan finds no such pair (two-sided exchange stability).
"""

from collections import Counter

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from tqdm import tqdm

from loraee.analytical import AnalyticalModel
from loraee.domain.radio import default_sf_by_distance
from loraee.domain.schemas import Assignment, ChannelPlan, NetworkScenario
from loraee.exceptions import SchemaLogicError
from loraee.typing import FadingMode, FloatArray, IntArray
from loraee.utils.logging import logger

SWAP_TOLERANCE = 1e-9
SCAN_CAP_FACTOR = 10


class Matching(BaseModel):
    """Channel of every device; `members(c)` is the inverse view."""

    model_config = ConfigDict(frozen=True)

    channel_of: list[int]
    channel_count: int = Field(..., ge=1)
    quota: int = Field(..., ge=1)

    @model_validator(mode="after")
    def check_quota(self) -> "Matching":
        if any(not 0 <= c < self.channel_count for c in self.channel_of):
            raise SchemaLogicError("Matched channel index out of range.")
        over = {c: n for c, n in Counter(self.channel_of).items() if n > self.quota}
        if over:
            raise SchemaLogicError(f"Channels over quota {self.quota}: {over}")
        return self

    @property
    def ed_count(self) -> int:
        return len(self.channel_of)

    def members(self, channel: int) -> list[int]:
        return [i for i, c in enumerate(self.channel_of) if c == channel]

    def swapped(self, i: int, j: int) -> "Matching":
        psi = list(self.channel_of)
        psi[i], psi[j] = psi[j], psi[i]
        return self.model_copy(update={"channel_of": psi})


class SwapRecord(BaseModel):
    """Utilities of the four players involved in one (candidate) swap."""

    iteration: int = 0
    ed_a: int
    ed_b: int
    channel_a: int
    channel_b: int
    ed_utility_before: tuple[float, float]
    ed_utility_after: tuple[float, float]
    channel_utility_before: tuple[float, float]
    channel_utility_after: tuple[float, float]

    @property
    def ee_before(self) -> float:
        """EE of the two affected channels before the swap."""
        return sum(self.channel_utility_before)

    @property
    def ee_after(self) -> float:
        return sum(self.channel_utility_after)


class MatchingRun(BaseModel):
    matching: Matching
    swaps: list[SwapRecord] = Field(default_factory=list)
    scans: int = 0
    converged: bool = True
    initial_system_ee: float = 0.0
    system_ee: float = 0.0


def stage_one_parameters(scenario: NetworkScenario) -> tuple[IntArray, FloatArray]:
    """Distance-table SF (nearest GW) and maximum TP for every device."""
    nearest = scenario.nearest_gw_distance()
    sfs = np.array([default_sf_by_distance(float(d), scenario.cell_radius_m) for d in nearest], dtype=np.int64)
    tps = np.full(scenario.ed_count, scenario.tp_max_dbm)
    return sfs, tps


class ChannelGame:
    """Utilities of devices and channels under a matching, with SF and TP held fixed."""

    def __init__(
        self,
        scenario: NetworkScenario,
        plan: ChannelPlan,
        sfs: IntArray | None = None,
        tps_dbm: FloatArray | None = None,
        fading_mode: FadingMode = "expected-fading",
    ) -> None:
        self.scenario = scenario
        self.plan = plan
        self.model = AnalyticalModel(scenario, plan, fading_mode)
        default_sfs, default_tps = stage_one_parameters(scenario)
        self.sfs = default_sfs if sfs is None else np.asarray(sfs, dtype=np.int64)
        self.tps = default_tps if tps_dbm is None else np.asarray(tps_dbm, dtype=float)

    def group_utilities(self, members: list[int], channel: int) -> FloatArray:
        """EE of each listed device when they alone share `channel`."""
        idx = np.asarray(members, dtype=np.int64)
        ee, _ = self.model.ee_members(idx, np.full(len(idx), channel), self.sfs[idx], self.tps[idx])
        return ee

    def utility_ed(self, matching: Matching, i: int) -> float:
        c = matching.channel_of[i]
        members = matching.members(c)
        return float(self.group_utilities(members, c)[members.index(i)])

    def utility_ch(self, matching: Matching, c: int) -> float:
        members = matching.members(c)
        return float(self.group_utilities(members, c).sum()) if members else 0.0

    def system_ee(self, matching: Matching) -> float:
        return sum(self.utility_ch(matching, c) for c in range(matching.channel_count))

    def assignment(self, matching: Matching) -> Assignment:
        return Assignment.from_arrays(np.asarray(matching.channel_of), self.sfs, self.tps)


def _no_worse(after: float, before: float) -> bool:
    return after >= before - SWAP_TOLERANCE * max(abs(before), abs(after))


def _better(after: float, before: float) -> bool:
    return after > before + SWAP_TOLERANCE * max(abs(before), abs(after))


def init_matching(scenario: NetworkScenario, plan: ChannelPlan, seed: int) -> Matching:
    """Uniformly random matching that honours the quota."""
    plan.require_capacity(scenario.ed_count)
    rng = np.random.default_rng(seed)
    slots = np.repeat(np.arange(plan.channel_count), plan.quota)
    psi = rng.permutation(slots)[: scenario.ed_count]
    return Matching(channel_of=[int(c) for c in psi], channel_count=plan.channel_count, quota=plan.quota)


def utility_ed(game: ChannelGame, matching: Matching, i: int) -> float:
    """Utility of device i: its own EE."""
    return game.utility_ed(matching, i)


def utility_ch(game: ChannelGame, matching: Matching, c: int) -> float:
    """Utility of channel c: the summed EE of its members (0 when empty)."""
    return game.utility_ch(matching, c)


def is_swap_blocking(game: ChannelGame, matching: Matching, i: int, j: int) -> tuple[bool, SwapRecord]:
    """
    Whether exchanging the channels of i and j weakly improves all four players and strictly improves one.

    Raises:
        SchemaLogicError: if i and j already share a channel.
    """
    c_i, c_j = matching.channel_of[i], matching.channel_of[j]
    if c_i == c_j:
        raise SchemaLogicError(f"EDs {i} and {j} share channel {c_i}; a swap would be a no-op.")

    before_i, before_j = matching.members(c_i), matching.members(c_j)
    ee_i = game.group_utilities(before_i, c_i)
    ee_j = game.group_utilities(before_j, c_j)

    after_i = [j if x == i else x for x in before_i]
    after_j = [i if x == j else x for x in before_j]
    new_i = game.group_utilities(after_i, c_i)
    new_j = game.group_utilities(after_j, c_j)

    record = SwapRecord(
        ed_a=i,
        ed_b=j,
        channel_a=c_i,
        channel_b=c_j,
        ed_utility_before=(float(ee_i[before_i.index(i)]), float(ee_j[before_j.index(j)])),
        ed_utility_after=(float(new_j[after_j.index(i)]), float(new_i[after_i.index(j)])),
        channel_utility_before=(float(ee_i.sum()), float(ee_j.sum())),
        channel_utility_after=(float(new_i.sum()), float(new_j.sum())),
    )
    pairs = [
        *zip(record.ed_utility_after, record.ed_utility_before, strict=True),
        *zip(record.channel_utility_after, record.channel_utility_before, strict=True),
    ]
    blocking = all(_no_worse(a, b) for a, b in pairs) and any(_better(a, b) for a, b in pairs)
    return blocking, record


def verify_2es(game: ChannelGame, matching: Matching) -> bool:
    """Exhaustive check that no cross-channel pair blocks."""
    n = matching.ed_count
    for i in range(n):
        for j in range(i + 1, n):
            if matching.channel_of[i] != matching.channel_of[j] and is_swap_blocking(game, matching, i, j)[0]:
                return False
    return True


def run_matching(
    scenario: NetworkScenario,
    plan: ChannelPlan,
    seed: int,
    fading_mode: FadingMode = "expected-fading",
    game: ChannelGame | None = None,
    max_scans: int | None = None,
    progress: bool = False,
) -> MatchingRun:
    """
    Swap matching from a random start until a full scan executes no swap.

    Pairs are scanned in device-index order and every blocking pair found is
    swapped on the spot. Hitting the scan cap (10 N by default) returns the
    current matching with `converged=False`.
    """
    game = game or ChannelGame(scenario, plan, fading_mode=fading_mode)
    matching = init_matching(scenario, plan, seed)
    n = matching.ed_count
    cap = max_scans if max_scans is not None else SCAN_CAP_FACTOR * max(n, 1)
    initial_ee = game.system_ee(matching)
    logger.info(f"Matching {n} EDs onto {plan.channel_count} channels (quota {plan.quota}), initial EE {initial_ee:.4g}")

    swaps: list[SwapRecord] = []
    scans = 0
    converged = False
    with tqdm(total=cap, desc="Swap scans", disable=not progress) as bar:
        while scans < cap:
            scans += 1
            swapped_this_scan = 0
            for i in range(n):
                for j in range(i + 1, n):
                    if matching.channel_of[i] == matching.channel_of[j]:
                        continue
                    blocking, record = is_swap_blocking(game, matching, i, j)
                    if blocking:
                        matching = matching.swapped(i, j)
                        swaps.append(record.model_copy(update={"iteration": scans}))
                        swapped_this_scan += 1
            bar.update(1)
            if swapped_this_scan == 0:
                converged = True
                break

    if not converged:
        logger.warning(f"Matching hit the scan cap ({cap}) without reaching exchange stability.")
    final_ee = game.system_ee(matching)
    logger.info(f"Matching finished after {scans} scans, {len(swaps)} swaps, EE {initial_ee:.4g} -> {final_ee:.4g}")
    return MatchingRun(
        matching=matching,
        swaps=swaps,
        scans=scans,
        converged=converged,
        initial_system_ee=initial_ee,
        system_ee=final_ee,
    )
