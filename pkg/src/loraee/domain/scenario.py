"""Random network topologies: spaced gateways and devices spread over their coverage disks."""

from typing import Any

import numpy as np

from loraee.domain.schemas import NetworkScenario
from loraee.exceptions import PlacementInfeasibleError, SchemaLogicError
from loraee.typing import FloatArray
from loraee.utils.logging import logger

PLACEMENT_RETRY_BUDGET = 10_000
_ED_BATCH = 4_096


def _place_gateways(
    rng: np.random.Generator, gw_count: int, area_m: float, min_spacing_m: float, retries: int
) -> FloatArray:
    """
    Rejection-samples gateway sites one at a time, restarting from scratch when a
    site cannot be placed. Every candidate draw counts against the retry budget.
    """
    draws = 0
    while draws < retries:
        placed: list[FloatArray] = []
        while len(placed) < gw_count and draws < retries:
            candidate = rng.uniform(0.0, area_m, size=2)
            draws += 1
            if all(np.hypot(*(candidate - p)) >= min_spacing_m for p in placed):
                placed.append(candidate)
            elif draws % 100 == 0:
                # stuck on a bad prefix, start over
                placed = []
        if len(placed) == gw_count:
            return np.vstack(placed)
    msg = (
        f"Could not place {gw_count} gateways at >= {min_spacing_m:.0f} m spacing in a "
        f"{area_m:.0f} m square within {retries} draws."
    )
    logger.error(msg)
    raise PlacementInfeasibleError(msg)


def _place_devices(rng: np.random.Generator, gws: FloatArray, ed_count: int, radius_m: float) -> FloatArray:
    """Uniform samples from the union of radius-R disks around the gateways."""
    if ed_count == 0:
        return np.zeros((0, 2))
    lo = gws.min(axis=0) - radius_m
    hi = gws.max(axis=0) + radius_m
    accepted: list[FloatArray] = []
    total = 0
    while total < ed_count:
        pts = rng.uniform(lo, hi, size=(_ED_BATCH, 2))
        d = np.sqrt(((pts[:, None, :] - gws[None, :, :]) ** 2).sum(axis=-1))
        keep = pts[(d.min(axis=1) <= radius_m) & (d.min(axis=1) > 0.0)]
        accepted.append(keep)
        total += len(keep)
    return np.vstack(accepted)[:ed_count]


def generate_scenario(
    seed: int,
    gw_count: int,
    ed_count: int,
    area_m: float = 20_000.0,
    min_gw_spacing_m: float = 12_000.0,
    cell_radius_m: float = 12_000.0,
    retries: int = PLACEMENT_RETRY_BUDGET,
    **scenario_fields: Any,
) -> NetworkScenario:
    """
    Builds a random scenario that is a pure function of its arguments.

    Gateways are rejection-sampled in an `area_m` square with pairwise spacing
    >= `min_gw_spacing_m`; devices are uniform in the union of the coverage disks.
    Extra keyword arguments (radio, traffic, energy fields) are passed through to
    `NetworkScenario`.

    Raises:
        SchemaLogicError: if gw_count < 1 or ed_count < 0.
        PlacementInfeasibleError: if the spacing cannot be met within the retry budget.
    """
    if gw_count < 1:
        raise SchemaLogicError(f"gw_count must be >= 1, got {gw_count}")
    if ed_count < 0:
        raise SchemaLogicError(f"ed_count must be >= 0, got {ed_count}")

    gw_seq, ed_seq = np.random.SeedSequence(seed).spawn(2)
    gws = _place_gateways(np.random.default_rng(gw_seq), gw_count, area_m, min_gw_spacing_m, retries)
    eds = _place_devices(np.random.default_rng(ed_seq), gws, ed_count, cell_radius_m)
    logger.debug(f"Generated scenario seed={seed}: {gw_count} GWs, {ed_count} EDs")

    return NetworkScenario(
        seed=seed,
        gw_positions=[(float(x), float(y)) for x, y in gws],
        ed_positions=[(float(x), float(y)) for x, y in eds],
        area_m=area_m,
        min_gw_spacing_m=min_gw_spacing_m,
        cell_radius_m=cell_radius_m,
        **scenario_fields,
    )


def min_pairwise_distance(points: FloatArray) -> float:
    """Smallest pairwise distance among points; inf for fewer than two."""
    if len(points) < 2:
        return float("inf")
    diff = points[:, None, :] - points[None, :, :]
    d = np.sqrt((diff**2).sum(axis=-1))
    return float(d[np.triu_indices(len(points), k=1)].min())
