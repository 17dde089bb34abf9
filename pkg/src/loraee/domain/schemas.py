import math
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from loraee.domain.radio import ALLOWED_BANDWIDTHS_HZ, LIGHT_SPEED_M_S, SPREADING_FACTORS, dbm_to_mw
from loraee.exceptions import InfeasibleQuotaError, SchemaLogicError
from loraee.typing import FadingMode, FloatArray, IntArray
from loraee.utils.logging import logger

Position = tuple[float, float]

# -------------------------------------------------------------------
#  Core-model types
# -------------------------------------------------------------------


class EnergyProfile(BaseModel):
    """
    Transmit-mode power draw e_p as a function of the radiated power level.

    By default e_p(p) = P_circuit + p_mw / eta_PA. An explicit table (dBm -> W)
    replaces the linear model; intermediate levels are interpolated.
    """

    model_config = ConfigDict(frozen=True)

    circuit_power_mw: float = Field(10.0, ge=0.0)
    pa_efficiency: float = Field(0.25, gt=0.0, le=1.0)
    table: dict[float, float] | None = Field(
        None, description="Optional explicit mapping from TP level (dBm) to power draw (W)."
    )

    @model_validator(mode="after")
    def check_table(self) -> "EnergyProfile":
        if self.table is None:
            return self
        if not self.table:
            raise SchemaLogicError("Energy table must not be empty when given.")
        levels = sorted(self.table)
        draws = [self.table[p] for p in levels]
        if any(w <= 0 for w in draws):
            raise SchemaLogicError("Energy table entries must be strictly positive.")
        if any(b < a for a, b in zip(draws, draws[1:], strict=False)):
            raise SchemaLogicError("Energy table must be non-decreasing in TP level.")
        return self

    def power_w(self, tp_dbm: float | FloatArray) -> FloatArray:
        """Power draw in watts for one or more TP levels (dBm)."""
        tp = np.asarray(tp_dbm, dtype=float)
        if self.table is not None:
            levels = np.array(sorted(self.table), dtype=float)
            draws = np.array([self.table[p] for p in sorted(self.table)], dtype=float)
            return np.interp(tp, levels, draws)
        radiated_mw = 10.0 ** (tp / 10.0)
        return (self.circuit_power_mw + radiated_mw / self.pa_efficiency) / 1000.0


class NetworkScenario(BaseModel):
    """Immutable topology, physics and traffic description of a multi-gateway LoRa network."""

    model_config = ConfigDict(frozen=True)

    seed: int | None = None
    gw_positions: list[Position]
    ed_positions: list[Position] = Field(default_factory=list)

    # geometry
    area_m: float = Field(20_000.0, gt=0.0)
    min_gw_spacing_m: float = Field(12_000.0, ge=0.0)
    cell_radius_m: float = Field(12_000.0, gt=0.0)

    # radio
    carrier_frequency_hz: float = Field(868e6, gt=0.0)
    path_loss_exponent: float = Field(2.7, gt=0.0)
    light_speed_m_s: float = Field(LIGHT_SPEED_M_S, gt=0.0)
    preamble_symbols: int = Field(8, ge=5)
    coding_rate: int = Field(5, ge=5, le=8)
    tp_min_dbm: float = 2.0
    tp_max_dbm: float = 20.0

    # traffic
    send_rate: float = Field(0.001, gt=0.0, description="Mean packet rate per device, 1/s.")
    duty_cycle: float = Field(0.01, gt=0.0, le=1.0)
    payload_bytes: int = Field(20, gt=0)

    energy: EnergyProfile = Field(default_factory=EnergyProfile)  # type: ignore[arg-type]

    @model_validator(mode="after")
    def check_geometry(self) -> "NetworkScenario":
        """Enforces finiteness, at least one gateway, coverage and non-colocation."""
        if not self.gw_positions:
            raise SchemaLogicError("A scenario needs at least one gateway.")
        if not self.tp_min_dbm < self.tp_max_dbm:
            raise SchemaLogicError(f"tp_min_dbm ({self.tp_min_dbm}) must be below tp_max_dbm ({self.tp_max_dbm}).")
        coords = [*self.gw_positions, *self.ed_positions]
        if not all(math.isfinite(x) and math.isfinite(y) for x, y in coords):
            raise SchemaLogicError("All positions must be finite.")
        if self.ed_positions:
            d = self.distances()
            nearest = d.min(axis=1)
            uncovered = np.flatnonzero(nearest > self.cell_radius_m * (1.0 + 1e-9))
            if uncovered.size:
                raise SchemaLogicError(
                    f"{uncovered.size} end devices (first: {int(uncovered[0])}) are outside every gateway cell."
                )
            if np.any(d <= 0.0):
                raise SchemaLogicError("End devices may not be colocated with a gateway.")
        return self

    @property
    def gw_count(self) -> int:
        return len(self.gw_positions)

    @property
    def ed_count(self) -> int:
        return len(self.ed_positions)

    def gw_array(self) -> FloatArray:
        return np.asarray(self.gw_positions, dtype=float).reshape(-1, 2)

    def ed_array(self) -> FloatArray:
        return np.asarray(self.ed_positions, dtype=float).reshape(-1, 2)

    def distances(self) -> FloatArray:
        """(N, K) matrix of ED-to-GW distances in meters."""
        diff = self.ed_array()[:, None, :] - self.gw_array()[None, :, :]
        return np.sqrt((diff**2).sum(axis=-1))

    def nearest_gw_distance(self) -> FloatArray:
        if self.ed_count == 0:
            return np.zeros(0)
        return self.distances().min(axis=1)


class ChannelPlan(BaseModel):
    """Channel set with per-channel bandwidth and a per-channel device quota."""

    model_config = ConfigDict(frozen=True)

    bandwidths_hz: list[float] = Field(..., min_length=1)
    quota: int = Field(..., ge=1, description="Maximum number of EDs per channel.")

    @field_validator("bandwidths_hz")
    @classmethod
    def check_bandwidths(cls, v: list[float]) -> list[float]:
        bad = [bw for bw in v if bw not in ALLOWED_BANDWIDTHS_HZ]
        if bad:
            raise SchemaLogicError(f"Channel bandwidths must be 125/250/500 kHz, got {bad}")
        return v

    @property
    def channel_count(self) -> int:
        return len(self.bandwidths_hz)

    @classmethod
    def for_devices(
        cls, ed_count: int, channel_count: int = 4, bandwidth_hz: float = 125e3, quota: int | None = None
    ) -> "ChannelPlan":
        """Uniform-bandwidth plan; the quota defaults to ceil(N/C) and is checked against N."""
        if channel_count < 1:
            raise SchemaLogicError(f"Need at least one channel, got {channel_count}")
        minimum = max(1, math.ceil(ed_count / channel_count))
        plan = cls(bandwidths_hz=[bandwidth_hz] * channel_count, quota=quota if quota is not None else minimum)
        plan.require_capacity(ed_count)
        return plan

    def require_capacity(self, ed_count: int) -> None:
        """Raises InfeasibleQuotaError when quota * C < N."""
        if self.quota * self.channel_count < ed_count:
            msg = (
                f"Quota {self.quota} x {self.channel_count} channels cannot host {ed_count} end devices "
                f"(need quota >= {math.ceil(ed_count / self.channel_count)})."
            )
            logger.error(msg)
            raise InfeasibleQuotaError(msg)


class Assignment(BaseModel):
    """
    Per-ED transmission parameters (channel, SF, TP).

    Storing exactly one (channel, SF) pair per device is the indicator
    X_i^{c,m}: it is 1 iff the stored pair equals (c, m).
    """

    model_config = ConfigDict(frozen=True)

    channels: list[int]
    sfs: list[int]
    tps_dbm: list[float]

    @model_validator(mode="after")
    def check_shape(self) -> "Assignment":
        n = len(self.channels)
        if len(self.sfs) != n or len(self.tps_dbm) != n:
            raise SchemaLogicError(
                f"Assignment arrays disagree in length: {n} channels, {len(self.sfs)} SFs, {len(self.tps_dbm)} TPs."
            )
        if any(c < 0 for c in self.channels):
            raise SchemaLogicError("Channel indices must be non-negative.")
        if any(m not in SPREADING_FACTORS for m in self.sfs):
            raise SchemaLogicError("Spreading factors must be in 7..12.")
        if not all(math.isfinite(p) for p in self.tps_dbm):
            raise SchemaLogicError("Transmit powers must be finite.")
        return self

    @classmethod
    def from_arrays(cls, channels: IntArray, sfs: IntArray, tps_dbm: FloatArray) -> "Assignment":
        return cls(
            channels=[int(c) for c in channels],
            sfs=[int(m) for m in sfs],
            tps_dbm=[float(p) for p in tps_dbm],
        )

    @property
    def ed_count(self) -> int:
        return len(self.channels)

    def arrays(self) -> tuple[IntArray, IntArray, FloatArray]:
        return (
            np.asarray(self.channels, dtype=np.int64),
            np.asarray(self.sfs, dtype=np.int64),
            np.asarray(self.tps_dbm, dtype=float),
        )

    def indicator(self, i: int, channel: int, sf: int) -> bool:
        """X_i^{channel, sf}."""
        return self.channels[i] == channel and self.sfs[i] == sf

    def channel_members(self, channel: int) -> list[int]:
        return [i for i, c in enumerate(self.channels) if c == channel]

    def tps_mw(self) -> FloatArray:
        return np.array([dbm_to_mw(p) for p in self.tps_dbm], dtype=float)


# -------------------------------------------------------------------
#  Simulation / experiment records
# -------------------------------------------------------------------


class SimStats(BaseModel):
    """Per-ED Monte-Carlo counters aggregated over replications."""

    sent: list[int]
    delivered: list[int]
    energy_j: list[float] = Field(default_factory=list, description="Total transmit energy spent per ED.")
    payload_bytes: int = 20
    replications: int = 1
    horizon_s: float = 0.0

    @model_validator(mode="after")
    def check_counts(self) -> "SimStats":
        if len(self.sent) != len(self.delivered):
            raise SchemaLogicError("sent and delivered must have one entry per ED.")
        for s, d in zip(self.sent, self.delivered, strict=True):
            if not 0 <= d <= s:
                raise SchemaLogicError(f"Delivered count {d} must lie in [0, sent={s}].")
        return self

    @property
    def pdr_hat(self) -> list[float]:
        return [d / s if s else 0.0 for s, d in zip(self.sent, self.delivered, strict=True)]

    @property
    def ee_hat(self) -> list[float]:
        """Empirical bits per joule: delivered payload bits over energy spent."""
        if not self.energy_j:
            return [0.0] * len(self.sent)
        bits = 8 * self.payload_bytes
        return [bits * d / e if e > 0 else 0.0 for d, e in zip(self.delivered, self.energy_j, strict=True)]

    @property
    def min_sent(self) -> int:
        return min(self.sent) if self.sent else 0


class MaacHyperparams(BaseModel):
    """Training hyperparameters of the attention actor-critic stage."""

    episodes: int = Field(200, ge=1)
    slots_per_episode: int = Field(30, ge=1)
    buffer_size: int = Field(100_000, ge=1)
    batch_size: int = Field(1024, ge=1)
    learning_rate: float = Field(1e-3, gt=0.0)
    discount: float = Field(0.99, ge=0.0, lt=1.0)
    target_rate: float = Field(1e-3, gt=0.0, le=1.0)
    heads: int = Field(2, ge=1)
    temperature: float = Field(0.05, ge=0.0)
    power_levels: int = Field(10, ge=2)
    embed_dim: int = Field(64, ge=1)
    critic_hidden: int = Field(64, ge=1)
    actor_hidden: tuple[int, ...] = (64, 64)
    update_every: int = Field(4, ge=1)
    grad_clip: float = Field(10.0, gt=0.0)
    leaky_slope: float = Field(0.01, ge=0.0, lt=1.0)
    reward_weight: float | None = Field(None, ge=0.0, le=1.0, description="Weight on EE_c; None means 1/N_c.")
    reward_denominator: Literal["group", "total"] = "group"
    attention: Literal["learned", "uniform"] = "learned"
    actor_expectation: Literal["exact", "sampled"] = "exact"
    normalize_rewards: bool = True
    pdr_threshold: float = Field(0.7, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def check_dims(self) -> "MaacHyperparams":
        if self.embed_dim % self.heads:
            raise SchemaLogicError(f"embed_dim {self.embed_dim} must be divisible by heads {self.heads}.")
        if self.batch_size >= self.buffer_size:
            raise SchemaLogicError(f"batch_size {self.batch_size} must be smaller than buffer_size {self.buffer_size}.")
        first_update = (self.batch_size // self.update_every + 1) * self.update_every
        total = self.episodes * self.slots_per_episode
        if first_update > total:
            raise SchemaLogicError(
                f"{self.episodes} episodes x {self.slots_per_episode} slots = {total} transitions never exceed "
                f"batch_size {self.batch_size}; no update would run before slot {first_update}."
            )
        return self


class ExperimentConfig(BaseModel):
    """Everything a CLI command needs besides its flags."""

    scenario_path: Path | None = None
    channel_count: int = Field(4, ge=1)
    bandwidth_hz: float = 125e3
    quota: int | None = Field(None, ge=1)
    run_matching: bool = True
    run_maac: bool = True
    hyperparams: MaacHyperparams = Field(default_factory=MaacHyperparams)  # type: ignore[arg-type]
    pdr_threshold: float = Field(0.7, ge=0.0, le=1.0)
    seeds: list[int] = Field(default_factory=lambda: [0, 1, 2], min_length=1)
    output_dir: Path = Path("results")
    workers: int = Field(1, ge=1)
    output_format: Literal["csv", "json"] = "csv"
    fading_mode: FadingMode = "expected-fading"
    packets_per_ed: int = Field(10_000, ge=1)
    replications: int = Field(1, ge=1)

    @field_validator("scenario_path")
    @classmethod
    def check_exists(cls, v: Path | None) -> Path | None:
        if v is not None and not v.is_file():
            raise SchemaLogicError(f"Scenario file does not exist: {v}")
        return v

    def plan_for(self, ed_count: int) -> ChannelPlan:
        return ChannelPlan.for_devices(ed_count, self.channel_count, self.bandwidth_hz, self.quota)


class EdRecord(BaseModel):
    ed_id: int
    channel: int
    sf: int
    tp_dbm: float
    pdr: float
    ee_bits_per_joule: float


class AlgorithmResult(BaseModel):
    """One (seed, algorithm, sweep cell) evaluation."""

    seed: int
    algorithm: str
    x_name: str
    x_value: float
    system_ee: float
    mean_pdr: float
    flagged: int = 0
    per_ed: list[EdRecord] = Field(default_factory=list)


class AggregateRow(BaseModel):
    algorithm: str
    x_name: str
    x_value: float
    n_seeds: int
    system_ee_mean: float
    system_ee_ci95: float | None
    mean_pdr_mean: float
    mean_pdr_ci95: float | None


class ResultBundle(BaseModel):
    """Per-seed results and their seed aggregates (95 % CI only with >= 2 seeds)."""

    results: list[AlgorithmResult] = Field(default_factory=list)
    aggregates: list[AggregateRow] = Field(default_factory=list)
