"""
Closed-form PDR and energy-efficiency model for multi-gateway LoRa uplinks.

Interference only couples devices on the same channel, so any set of whole
channel groups can be evaluated on its own and yields exactly the values the
full network would give for those devices. `AnalyticalModel` exploits this for
the optimisers, which re-evaluate one or two channels at a time.
"""

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from loraee.domain.radio import SENSITIVITY_MW, SIR_MATRIX_LINEAR, SPREADING_FACTORS, sf_index
from loraee.domain.schemas import Assignment, ChannelPlan, EnergyProfile, NetworkScenario
from loraee.exceptions import SchemaLogicError
from loraee.typing import FadingMode, FloatArray, IntArray
from loraee.utils.logging import logger

LOW_DATA_RATE_SYMBOL_S = 16e-3


# -------------------------------------------------------------------
#  Traffic and airtime
# -------------------------------------------------------------------


def symbol_time(sf: int, bw: float) -> float:
    """Duration of one chirp symbol, 2^SF / BW seconds."""
    sf_index(sf)
    if bw <= 0:
        raise SchemaLogicError(f"Bandwidth must be > 0, got {bw}")
    return float(2**sf / bw)


def low_data_rate_flag(sf: int, bw: float) -> int:
    """DE = 1 exactly when the symbol lasts 16 ms or more."""
    return int(symbol_time(sf, bw) >= LOW_DATA_RATE_SYMBOL_S - 1e-12)


def time_on_air(
    sf: int,
    bw: float,
    cr: int = 5,
    payload_bytes: int = 20,
    de: int | None = None,
    n_pr: int = 8,
) -> float:
    """
    Packet airtime in seconds.

    The fixed part is n_pr preamble symbols + 4.25 sync symbols + 8 header symbols;
    the payload part is max(ceil((8L - 4SF + 44) / (4(SF - 2DE))) * CR, 0) symbols.
    `de=None` derives the low-data-rate flag from the symbol time.
    """
    if not 5 <= cr <= 8:
        raise SchemaLogicError(f"Coding rate must be in 5..8, got {cr}")
    t_sym = symbol_time(sf, bw)
    if de is None:
        de = low_data_rate_flag(sf, bw)
    payload_symbols = max(math.ceil((8 * payload_bytes - 4 * sf + 28 + 16) / (4 * (sf - 2 * de))) * cr, 0)
    return (n_pr + 4.25 + 8 + payload_symbols) * t_sym


def activity_prob(send_rate: float, duration: float) -> float:
    """Probability that a Poisson source emits at least one packet in `duration` seconds."""
    if send_rate < 0 or duration < 0:
        raise SchemaLogicError(f"Rate and duration must be >= 0, got {send_rate}, {duration}")
    return float(1.0 - math.exp(-send_rate * duration))


def interference_window(toa_i: float, toa_j: float, n_pr: int, t_sym_i: float) -> float:
    """Length of the interval in which a start of j corrupts i; the first n_pr-5 preamble symbols are disposable."""
    return toa_j + toa_i - (n_pr - 5) * t_sym_i


def active_fraction(send_rate: float, toa_j: float, duty_cycle: float) -> float:
    """Fraction of time an interferer is in its active period, clamped to [0, 1]."""
    raw = 1.0 - 100.0 * (1.0 - duty_cycle) * send_rate * toa_j
    clamped = min(max(raw, 0.0), 1.0)
    if clamped != raw:
        logger.warning(f"Active fraction {raw:.4f} clamped to {clamped} (toa={toa_j:.4f}s, rate={send_rate})")
    return clamped


def interferer_tx_prob(send_rate: float, toa_j: float, window: float, duty_cycle: float) -> float:
    """Probability that interferer j transmits inside a window of the given length."""
    delta_j = active_fraction(send_rate, toa_j, duty_cycle)
    return float(1.0 - math.exp(-send_rate * window * delta_j))


# -------------------------------------------------------------------
#  Link budget
# -------------------------------------------------------------------


def path_loss(
    d: float | FloatArray, frequency_hz: float, exponent: float, light_speed_m_s: float = 299_792_458.0
) -> FloatArray:
    """Friis-style attenuation (c / (4 pi f d))^tau, linear. Works elementwise on arrays."""
    dist = np.asarray(d, dtype=float)
    if np.any(dist <= 0) or not np.all(np.isfinite(dist)):
        raise SchemaLogicError("Path loss needs finite distances > 0 (EDs may not be colocated with GWs).")
    return (light_speed_m_s / (4.0 * math.pi * frequency_hz * dist)) ** exponent


@dataclass(frozen=True)
class LinkBudget:
    """Per (ED, GW) distance, attenuation and mean received power."""

    distance_m: FloatArray
    attenuation: FloatArray
    rx_power_mw: FloatArray


def link_budget(scenario: NetworkScenario, assignment: Assignment) -> LinkBudget:
    d = scenario.distances()
    a = path_loss(d, scenario.carrier_frequency_hz, scenario.path_loss_exponent, scenario.light_speed_m_s)
    rx = assignment.tps_mw()[:, None] * a
    return LinkBudget(distance_m=d, attenuation=a, rx_power_mw=rx)


# -------------------------------------------------------------------
#  Reports
# -------------------------------------------------------------------


@dataclass(frozen=True)
class PdrReport:
    per_gw: FloatArray  # (N, K)
    multi_gw: FloatArray  # (N,)


@dataclass(frozen=True)
class EeReport:
    per_ed: FloatArray
    per_channel: FloatArray
    system: float
    success_energy_j: FloatArray
    pdr: PdrReport


# -------------------------------------------------------------------
#  The model
# -------------------------------------------------------------------


class AnalyticalModel:
    """
    Vectorised evaluator bound to one scenario and channel plan.

    Airtimes, active fractions and attenuations are tabulated once; `evaluate_members`
    then scores any subset of devices under given (channel, SF, TP) arrays.
    """

    def __init__(
        self,
        scenario: NetworkScenario,
        plan: ChannelPlan,
        fading_mode: FadingMode = "expected-fading",
        energy: EnergyProfile | None = None,
        low_data_rate: int | None = None,
    ) -> None:
        self.scenario = scenario
        self.plan = plan
        self.fading_mode = fading_mode
        self.energy = energy if energy is not None else scenario.energy
        self.payload_bits = 8 * scenario.payload_bytes

        self.distance_m = scenario.distances()
        self.attenuation = (
            path_loss(
                self.distance_m,
                scenario.carrier_frequency_hz,
                scenario.path_loss_exponent,
                scenario.light_speed_m_s,
            )
            if scenario.ed_count
            else np.zeros((0, scenario.gw_count))
        )

        # (SF, channel) tables
        bws = plan.bandwidths_hz
        self.symbol_s = np.array([[symbol_time(sf, bw) for bw in bws] for sf in SPREADING_FACTORS])
        self.toa_s = np.array(
            [
                [
                    time_on_air(
                        sf, bw, scenario.coding_rate, scenario.payload_bytes, low_data_rate, scenario.preamble_symbols
                    )
                    for bw in bws
                ]
                for sf in SPREADING_FACTORS
            ]
        )
        raw = 1.0 - 100.0 * (1.0 - scenario.duty_cycle) * scenario.send_rate * self.toa_s
        self.active = np.clip(raw, 0.0, 1.0)
        if np.any(raw != self.active):
            bad = [(SPREADING_FACTORS[m], c) for m, c in zip(*np.nonzero(raw != self.active), strict=True)]
            logger.warning(f"Active fraction clamped to [0, 1] for (SF, channel) combinations {bad}")

    # -- helpers -----------------------------------------------------

    def _params(self, channels: IntArray, sfs: IntArray) -> tuple[FloatArray, FloatArray, FloatArray, IntArray]:
        m = np.asarray(sfs, dtype=np.int64) - 7
        c = np.asarray(channels, dtype=np.int64)
        return self.toa_s[m, c], self.symbol_s[m, c], self.active[m, c], m

    def pdr_members(
        self, members: IntArray, channels: IntArray, sfs: IntArray, tps_dbm: FloatArray
    ) -> tuple[FloatArray, FloatArray]:
        """
        Per-GW and multi-GW PDR for the devices `members`, with parameter arrays aligned to `members`.

        Only devices in `members` act as interferers; pass whole channel groups.
        """
        members = np.asarray(members, dtype=np.int64)
        n = len(members)
        if n == 0:
            return np.zeros((0, self.scenario.gw_count)), np.zeros(0)
        channels = np.asarray(channels, dtype=np.int64)
        tps_mw = 10.0 ** (np.asarray(tps_dbm, dtype=float) / 10.0)
        toa, t_sym, active, m = self._params(channels, sfs)

        rx = tps_mw[:, None] * self.attenuation[members]  # (n, K)
        sensitivity_term = np.exp(-SENSITIVITY_MW[m][:, None] / rx)

        lam = self.scenario.send_rate
        window = toa[None, :] + toa[:, None] - (self.scenario.preamble_symbols - 5) * t_sym[:, None]  # (i, j)
        h = 1.0 - np.exp(-lam * window * active[None, :])
        co_channel = (channels[:, None] == channels[None, :]) & ~np.eye(n, dtype=bool)

        thr = SIR_MATRIX_LINEAR[m[:, None], m[None, :]]  # (i, j)
        ratio = rx[None, :, :] / rx[:, None, :]  # (i, j, K): rx_j / rx_i
        if self.fading_mode == "expected-fading":
            survive = 1.0 / (1.0 + thr[:, :, None] * ratio)
        else:
            survive = np.exp(-thr[:, :, None] * ratio)
        factor = h[:, :, None] * survive + (1.0 - h[:, :, None])
        factor = np.where(co_channel[:, :, None], factor, 1.0)

        per_gw = sensitivity_term * factor.prod(axis=1)
        multi = 1.0 - np.prod(1.0 - per_gw, axis=1)
        return per_gw, multi

    def ee_members(
        self, members: IntArray, channels: IntArray, sfs: IntArray, tps_dbm: FloatArray
    ) -> tuple[FloatArray, FloatArray]:
        """Per-device EE (bit/J) and multi-GW PDR for `members`; EE is 0 where PDR is 0."""
        _, pdr = self.pdr_members(members, channels, sfs, tps_dbm)
        if len(pdr) == 0:
            return np.zeros(0), pdr
        toa, _, _, _ = self._params(np.asarray(channels), np.asarray(sfs))
        e_p = self.energy.power_w(np.asarray(tps_dbm, dtype=float))
        return self.payload_bits * pdr / (e_p * toa), pdr

    def group_ee(self, members: IntArray, channels: IntArray, sfs: IntArray, tps_dbm: FloatArray) -> float:
        """Sum of member EEs, i.e. a channel's utility when `members` is one channel group."""
        ee, _ = self.ee_members(members, channels, sfs, tps_dbm)
        return float(ee.sum())

    # -- full evaluation ---------------------------------------------

    def evaluate(self, assignment: Assignment) -> EeReport:
        """Scores every device of an assignment."""
        n = self.scenario.ed_count
        if assignment.ed_count != n:
            raise SchemaLogicError(f"Assignment has {assignment.ed_count} EDs, scenario has {n}")
        channels, sfs, tps = assignment.arrays()
        per_gw, pdr = self.pdr_members(np.arange(n), channels, sfs, tps)

        toa, _, _, _ = self._params(channels, sfs)
        cost = self.energy.power_w(tps) * toa
        ee = self.payload_bits * pdr / cost if n else np.zeros(0)
        safe_pdr = np.where(pdr > 0, pdr, 1.0)
        success_energy = np.where(pdr > 0, cost / safe_pdr, np.inf)

        return EeReport(
            per_ed=ee,
            per_channel=np.bincount(channels, weights=ee, minlength=self.plan.channel_count),
            system=float(ee.sum()),
            success_energy_j=success_energy,
            pdr=PdrReport(per_gw=per_gw, multi_gw=pdr),
        )

    def ee_scale(self) -> float:
        """Upper-bound EE scale 8L / (e_p(p_min) * ToA(SF7, widest channel)), used to normalise observations."""
        toa_min = float(self.toa_s[0].min())
        e_min = float(self.energy.power_w(self.scenario.tp_min_dbm))
        return self.payload_bits / (e_min * toa_min)


# -------------------------------------------------------------------
#  Functional API
# -------------------------------------------------------------------


def pdr_single_gw(
    scenario: NetworkScenario,
    plan: ChannelPlan,
    assignment: Assignment,
    i: int,
    k: int,
    fading_mode: FadingMode = "expected-fading",
) -> float:
    """PDR of device i at gateway k."""
    report = AnalyticalModel(scenario, plan, fading_mode).evaluate(assignment)
    return float(report.pdr.per_gw[i, k])


def pdr_multi_gw(
    scenario: NetworkScenario,
    plan: ChannelPlan,
    assignment: Assignment,
    i: int,
    fading_mode: FadingMode = "expected-fading",
) -> float:
    """PDR of device i at any gateway."""
    report = AnalyticalModel(scenario, plan, fading_mode).evaluate(assignment)
    return float(report.pdr.multi_gw[i])


def combine_gateways(per_gw: Sequence[float] | FloatArray) -> float:
    """1 - prod(1 - D_k): probability that at least one gateway decodes."""
    arr = np.asarray(per_gw, dtype=float)
    return float(1.0 - np.prod(1.0 - arr))


def energy_efficiency(
    scenario: NetworkScenario,
    plan: ChannelPlan,
    assignment: Assignment,
    i: int,
    energy: EnergyProfile | None = None,
    fading_mode: FadingMode = "expected-fading",
) -> float:
    """Bits per joule of device i, retransmission cost included."""
    report = AnalyticalModel(scenario, plan, fading_mode, energy).evaluate(assignment)
    return float(report.per_ed[i])


def ee_from_pdr(payload_bytes: int, power_w: float, toa_s: float, pdr: float) -> float:
    """8L / (e_p * T / D), 0 for a dead link."""
    if pdr <= 0:
        return 0.0
    return 8 * payload_bytes * pdr / (power_w * toa_s)


def system_ee(
    scenario: NetworkScenario,
    plan: ChannelPlan,
    assignment: Assignment,
    energy: EnergyProfile | None = None,
    fading_mode: FadingMode = "expected-fading",
) -> EeReport:
    """Evaluates every device; `.system` is the sum of per-device EE."""
    return AnalyticalModel(scenario, plan, fading_mode, energy).evaluate(assignment)


def mae(analytical_pdr: Sequence[float] | FloatArray, simulated_pdr: Sequence[float] | FloatArray) -> float:
    """Mean absolute error between two per-device PDR vectors."""
    a = np.asarray(analytical_pdr, dtype=float)
    b = np.asarray(simulated_pdr, dtype=float)
    if a.shape != b.shape:
        raise SchemaLogicError(f"PDR vectors differ in length: {a.shape} vs {b.shape}")
    if a.size == 0:
        return 0.0
    return float(np.mean(np.abs(a - b)))
