"""
SNR-driven adaptive data rate.

Against its nearest gateway, each device gets the smallest SF whose demodulation
floor (plus an installation margin) is met at mean received power, then the
smallest grid TP that keeps that margin. Channels are dealt round-robin.
"""

import numpy as np
from pydantic import BaseModel, Field, field_validator

from loraee.allocators.base_allocator import Allocation, BaseAllocator, round_robin_channels
from loraee.analytical import path_loss
from loraee.domain.radio import (
    DEFAULT_NOISE_FIGURE_DB,
    DEMOD_FLOOR_DB,
    SENSITIVITY_DBM,
    SPREADING_FACTORS,
    noise_floor_dbm,
    power_levels,
)
from loraee.domain.schemas import Assignment, ChannelPlan, NetworkScenario
from loraee.exceptions import SchemaLogicError
from loraee.utils.logging import logger


class DemodFloorTable(BaseModel):
    """Per-SF SNR demodulation floors (dB, SF7..SF12) and the receiver noise model."""

    floors_db: tuple[float, float, float, float, float, float] = tuple(DEMOD_FLOOR_DB)  # type: ignore[assignment]
    noise_figure_db: float = DEFAULT_NOISE_FIGURE_DB
    margin_db: float = Field(3.0, ge=0.0)

    @field_validator("floors_db")
    @classmethod
    def check_decreasing(cls, v: tuple[float, ...]) -> tuple[float, ...]:
        if any(b >= a for a, b in zip(v, v[1:], strict=False)):
            raise SchemaLogicError(f"Demodulation floors must decrease with SF, got {v}")
        return v


def adr_assign(
    scenario: NetworkScenario, plan: ChannelPlan, table: DemodFloorTable | None = None, levels: int = 10
) -> Allocation:
    """
    Deterministic ADR allocation.

    Devices for which no (SF, TP) meets the floor get (SF12, p_max) and are flagged.
    """
    table = table or DemodFloorTable()
    n = scenario.ed_count
    channels = round_robin_channels(n, plan)
    grid = np.array(power_levels(scenario.tp_min_dbm, scenario.tp_max_dbm, levels))
    floors = np.asarray(table.floors_db)

    sfs = np.full(n, SPREADING_FACTORS[-1], dtype=np.int64)
    tps = np.full(n, scenario.tp_max_dbm)
    flagged: list[int] = []
    loss_db = (
        -10.0
        * np.log10(
            path_loss(
                scenario.nearest_gw_distance(),
                scenario.carrier_frequency_hz,
                scenario.path_loss_exponent,
                scenario.light_speed_m_s,
            )
        )
        if n
        else np.zeros(0)
    )
    for i in range(n):
        noise = noise_floor_dbm(plan.bandwidths_hz[channels[i]], table.noise_figure_db)
        rx_dbm = grid - loss_db[i]  # one entry per grid level
        choice = None
        for m, sf in enumerate(SPREADING_FACTORS):
            ok = (rx_dbm - noise >= floors[m] + table.margin_db) & (rx_dbm >= SENSITIVITY_DBM[m] + table.margin_db)
            if ok.any():
                choice = (sf, float(grid[np.argmax(ok)]))
                break
        if choice is None:
            flagged.append(i)
            continue
        sfs[i], tps[i] = choice

    if flagged:
        logger.warning(f"ADR: {len(flagged)} EDs meet no demodulation floor; assigned SF12 at max TP.")
    return Allocation(assignment=Assignment.from_arrays(channels, sfs, tps), flagged=flagged)


class AdrAllocator(BaseAllocator):
    name = "adr"

    def __init__(self, table: DemodFloorTable | None = None, levels: int = 10) -> None:
        self.table = table or DemodFloorTable()
        self.levels = levels

    def allocate(self, scenario: NetworkScenario, plan: ChannelPlan, seed: int) -> Allocation:
        return self.finalize(adr_assign(scenario, plan, self.table, self.levels), scenario, plan)
