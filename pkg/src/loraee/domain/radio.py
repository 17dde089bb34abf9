"""
Radio-layer constants and unit conversions.

All physics downstream of this module runs in linear units (mW, m, s, Hz);
dB and dBm only appear here and at reporting boundaries.
"""

import math

import numpy as np

from loraee.exceptions import NonFiniteInputError, OutOfCoverageError, SchemaLogicError
from loraee.typing import FloatArray
from loraee.utils.logging import logger

SPREADING_FACTORS: tuple[int, ...] = (7, 8, 9, 10, 11, 12)
LIGHT_SPEED_M_S = 299_792_458.0
ALLOWED_BANDWIDTHS_HZ: frozenset[float] = frozenset({125e3, 250e3, 500e3})

# rows = target SF, columns = interferer SF, SF7..SF12, in dB
SIR_MATRIX_DB: FloatArray = np.array(
    [
        [1, -8, -9, -9, -9, -9],
        [-11, 1, -11, -12, -13, -13],
        [-15, -13, 1, -13, -14, -15],
        [-19, -18, -17, 1, -17, -18],
        [-22, -22, -21, -20, 1, -20],
        [-25, -25, -25, -24, -23, 1],
    ],
    dtype=float,
)
SIR_MATRIX_LINEAR: FloatArray = 10.0 ** (SIR_MATRIX_DB / 10.0)

SENSITIVITY_DBM: FloatArray = np.array([-123.0, -126.0, -129.0, -132.0, -134.5, -137.0])
SENSITIVITY_MW: FloatArray = 10.0 ** (SENSITIVITY_DBM / 10.0)

# upper edge (inclusive) of each SF's distance range, meters
SF_DISTANCE_EDGES_M: FloatArray = np.array([2_000.0, 4_000.0, 6_000.0, 8_000.0, 10_000.0, 12_000.0])

# SNR demodulation floors used by the ADR baseline, dB, SF7..SF12
DEMOD_FLOOR_DB: FloatArray = np.array([-7.5, -10.0, -12.5, -15.0, -17.5, -20.0])
THERMAL_NOISE_DBM_HZ = -174.0
DEFAULT_NOISE_FIGURE_DB = 6.0


def _require_finite(x: float, name: str) -> None:
    if not math.isfinite(x):
        logger.error(f"Non-finite {name}: {x}")
        raise NonFiniteInputError(f"{name} must be finite, got {x}")


def dbm_to_mw(x: float) -> float:
    """Converts a power level from dBm to mW."""
    _require_finite(x, "dBm value")
    return float(10.0 ** (x / 10.0))


def mw_to_dbm(x: float) -> float:
    """Converts a power level from mW to dBm. The input must be strictly positive."""
    _require_finite(x, "mW value")
    if x <= 0:
        raise NonFiniteInputError(f"mW value must be > 0 to convert to dBm, got {x}")
    return float(10.0 * math.log10(x))


def sf_index(sf: int) -> int:
    """Row/column index of an SF in the SIR matrix and sensitivity table."""
    if sf not in SPREADING_FACTORS:
        raise SchemaLogicError(f"Spreading factor must be in 7..12, got {sf}")
    return sf - 7


def sir_threshold(sf_target: int, sf_interferer: int) -> float:
    """Linear capture threshold for a target SF against an interferer SF."""
    return float(SIR_MATRIX_LINEAR[sf_index(sf_target), sf_index(sf_interferer)])


def sensitivity_mw(sf: int) -> float:
    return float(SENSITIVITY_MW[sf_index(sf)])


def default_sf_by_distance(d: float, coverage_m: float = float(SF_DISTANCE_EDGES_M[-1])) -> int:
    """
    Initial SF for a device at distance d (meters) from its nearest gateway.

    Ranges are left-open, right-closed: (0,2] km -> SF7 ... (10,12] km -> SF12.

    Raises:
        OutOfCoverageError: if d exceeds the coverage radius.
        SchemaLogicError: if d is not strictly positive.
    """
    _require_finite(d, "distance")
    if d <= 0:
        raise SchemaLogicError(f"Distance must be > 0, got {d}")
    if d > coverage_m:
        raise OutOfCoverageError(f"Distance {d:.1f} m is outside the {coverage_m:.0f} m coverage radius")
    # cells beyond the 12 km table (custom radius) fall back to SF12
    idx = int(np.searchsorted(SF_DISTANCE_EDGES_M, d, side="left"))
    return SPREADING_FACTORS[min(idx, len(SPREADING_FACTORS) - 1)]


def power_levels(p_min: float, p_max: float, levels: int) -> list[float]:
    """Arithmetic grid of transmit power levels in dBm, endpoints included."""
    if levels < 2:
        raise SchemaLogicError(f"Need at least 2 power levels, got {levels}")
    if not p_min < p_max:
        raise SchemaLogicError(f"Need p_min < p_max, got {p_min} >= {p_max}")
    step = (p_max - p_min) / (levels - 1)
    grid = [p_min + j * step for j in range(levels)]
    grid[-1] = p_max
    return grid


def noise_floor_dbm(bandwidth_hz: float, noise_figure_db: float = DEFAULT_NOISE_FIGURE_DB) -> float:
    """Thermal noise power over the channel bandwidth plus receiver noise figure."""
    return THERMAL_NOISE_DBM_HZ + 10.0 * math.log10(bandwidth_hz) + noise_figure_db
