"""
Packet-level Monte-Carlo simulator.

Each device emits Poisson traffic, silenced for toa * (1 - delta) / delta after
every transmission. Every (transmission, gateway) pair gets its own Rayleigh
power draw. A reception fails below sensitivity, or when a co-channel packet
overlaps its critical section (from the 5th-last preamble symbol to the end)
and the pairwise SIR falls under the capture threshold. A packet is delivered
if any gateway decodes it.
"""

import math
from collections.abc import Iterator, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from tqdm import tqdm

from loraee.analytical import AnalyticalModel
from loraee.domain.radio import SENSITIVITY_MW, SIR_MATRIX_LINEAR, sensitivity_mw, sir_threshold
from loraee.domain.schemas import Assignment, ChannelPlan, NetworkScenario, SimStats
from loraee.exceptions import SchemaLogicError
from loraee.typing import BoolArray, FloatArray, IntArray
from loraee.utils.logging import logger

MIN_PACKETS_PER_ED = 100

Seed = int | np.random.SeedSequence


@dataclass(frozen=True)
class TransmissionEvent:
    ed_id: int
    start_s: float
    toa_s: float
    symbol_s: float
    channel: int
    sf: int
    tp_dbm: float
    mean_rx_mw: tuple[float, ...]
    fading: tuple[float, ...]

    @property
    def end_s(self) -> float:
        return self.start_s + self.toa_s

    def rx_mw(self, k: int) -> float:
        """Instantaneous received power at gateway k."""
        return self.mean_rx_mw[k] * self.fading[k]


@dataclass(frozen=True)
class ReceptionOutcome:
    ok: bool
    below_sensitivity: bool = False
    collision: bool = False


@dataclass(frozen=True)
class TrafficTrace:
    """Columnar event stream, sorted by start time."""

    ed_id: IntArray
    start_s: FloatArray
    toa_s: FloatArray
    symbol_s: FloatArray
    channel: IntArray
    sf: IntArray
    tp_dbm: FloatArray
    mean_rx_mw: FloatArray  # (E, K)
    fading: FloatArray  # (E, K)
    horizon_s: float

    def __len__(self) -> int:
        return len(self.start_s)

    def event(self, e: int) -> TransmissionEvent:
        return TransmissionEvent(
            ed_id=int(self.ed_id[e]),
            start_s=float(self.start_s[e]),
            toa_s=float(self.toa_s[e]),
            symbol_s=float(self.symbol_s[e]),
            channel=int(self.channel[e]),
            sf=int(self.sf[e]),
            tp_dbm=float(self.tp_dbm[e]),
            mean_rx_mw=tuple(float(x) for x in self.mean_rx_mw[e]),
            fading=tuple(float(x) for x in self.fading[e]),
        )

    def events(self) -> Iterator[TransmissionEvent]:
        for e in range(len(self)):
            yield self.event(e)


@dataclass(frozen=True)
class ReceptionMatrix:
    """Per (event, GW) outcomes of one replication."""

    below_sensitivity: BoolArray
    collision: BoolArray

    @property
    def ok(self) -> BoolArray:
        return ~self.below_sensitivity & ~self.collision

    def delivered(self, gateways: Sequence[int] | None = None) -> BoolArray:
        """Event-level delivery after cross-gateway dedup, optionally replayed against a gateway subset."""
        ok = self.ok if gateways is None else self.ok[:, list(gateways)]
        return ok.any(axis=1)


# -------------------------------------------------------------------
#  Traffic
# -------------------------------------------------------------------


def generate_traffic(
    scenario: NetworkScenario,
    plan: ChannelPlan,
    assignment: Assignment,
    horizon: float,
    seed: Seed,
    model: AnalyticalModel | None = None,
) -> TrafficTrace:
    """
    Draws every device's transmissions over [0, horizon) plus per-GW fading.

    Poisson arrivals that fall into a device's off-time are dropped; by
    memorylessness the next start is then end-of-off-time + Exp(lambda).
    """
    if horizon <= 0:
        raise SchemaLogicError(f"Horizon must be > 0, got {horizon}")
    model = model or AnalyticalModel(scenario, plan)
    rng = np.random.default_rng(seed)
    n, k = scenario.ed_count, scenario.gw_count
    channels, sfs, tps = assignment.arrays()
    lam = scenario.send_rate

    if n == 0 or lam == 0:
        return _empty_trace(k, horizon)

    m = sfs - 7
    toa = model.toa_s[m, channels]
    t_sym = model.symbol_s[m, channels]
    cycle = toa / scenario.duty_cycle  # airtime + mandatory silence

    count = int(math.ceil(horizon / float(np.min(cycle + 1.0 / lam)) * 1.2)) + 16
    starts = np.empty((n, 0))
    origin = np.zeros(n)
    while True:
        gaps = rng.exponential(1.0 / lam, size=(n, count))
        gaps[:, 1:] += cycle[:, None]
        block = origin[:, None] + np.cumsum(gaps, axis=1)
        starts = np.hstack([starts, block])
        if np.all(block[:, -1] >= horizon):
            break
        origin = block[:, -1] + cycle

    ed_idx, slot = np.nonzero(starts < horizon)
    start_s = starts[ed_idx, slot]
    order = np.lexsort((ed_idx, start_s))
    ed_idx, start_s = ed_idx[order], start_s[order]

    rx = model.attenuation * (10.0 ** (tps / 10.0))[:, None]
    return TrafficTrace(
        ed_id=ed_idx,
        start_s=start_s,
        toa_s=toa[ed_idx],
        symbol_s=t_sym[ed_idx],
        channel=channels[ed_idx],
        sf=sfs[ed_idx],
        tp_dbm=tps[ed_idx],
        mean_rx_mw=rx[ed_idx],
        fading=rng.exponential(1.0, size=(len(ed_idx), k)),
        horizon_s=horizon,
    )


def _empty_trace(k: int, horizon: float) -> TrafficTrace:
    empty_i = np.zeros(0, dtype=np.int64)
    empty_f = np.zeros(0)
    return TrafficTrace(
        ed_id=empty_i,
        start_s=empty_f,
        toa_s=empty_f,
        symbol_s=empty_f,
        channel=empty_i,
        sf=empty_i,
        tp_dbm=empty_f,
        mean_rx_mw=np.zeros((0, k)),
        fading=np.zeros((0, k)),
        horizon_s=horizon,
    )


# -------------------------------------------------------------------
#  Reception
# -------------------------------------------------------------------


def judge_reception(
    event: TransmissionEvent, concurrent: Sequence[TransmissionEvent], k: int, preamble_symbols: int = 8
) -> ReceptionOutcome:
    """
    Reference (per-event) decision for one transmission at gateway k.

    `concurrent` may contain the event itself and events on other channels; both are ignored.
    """
    p_i = event.rx_mw(k)
    if p_i < sensitivity_mw(event.sf):
        return ReceptionOutcome(ok=False, below_sensitivity=True)
    critical_start = event.start_s + (preamble_symbols - 5) * event.symbol_s
    for other in concurrent:
        if other is event or other.channel != event.channel:
            continue
        if other.ed_id == event.ed_id and other.start_s == event.start_s:
            continue
        hits_critical = other.start_s < event.end_s and other.end_s > critical_start
        if hits_critical and p_i / other.rx_mw(k) < sir_threshold(event.sf, other.sf):
            return ReceptionOutcome(ok=False, collision=True)
    return ReceptionOutcome(ok=True)


def judge_trace(trace: TrafficTrace, preamble_symbols: int = 8) -> ReceptionMatrix:
    """
    Sorted-interval sweep over each channel.

    For the pair at distance `o` in start order, the earlier packet a loses if b
    hits its critical section, and b loses if a is still on air after b's
    critical section begins. Offsets stop growing once no pair overlaps.
    """
    e_count, k = trace.fading.shape
    rx = trace.mean_rx_mw * trace.fading
    below = rx < SENSITIVITY_MW[trace.sf - 7][:, None]
    collided = np.zeros((e_count, k), dtype=bool)

    for ch in np.unique(trace.channel):
        idx = np.flatnonzero(trace.channel == ch)  # already start-ordered
        s = trace.start_s[idx]
        e = s + trace.toa_s[idx]
        crit = s + (preamble_symbols - 5) * trace.symbol_s[idx]
        m = trace.sf[idx] - 7
        p = rx[idx]
        hit = np.zeros((len(idx), k), dtype=bool)
        o = 1
        while o < len(idx):
            a = np.arange(len(idx) - o)
            b = a + o
            overlap = s[b] < e[a]
            if not overlap.any():
                break
            a, b = a[overlap], b[overlap]
            a_loses = (e[b] > crit[a])[:, None] & (p[a] / p[b] < SIR_MATRIX_LINEAR[m[a], m[b]][:, None])
            b_loses = (e[a] > crit[b])[:, None] & (p[b] / p[a] < SIR_MATRIX_LINEAR[m[b], m[a]][:, None])
            np.logical_or.at(hit, a, a_loses)
            np.logical_or.at(hit, b, b_loses)
            o += 1
        collided[idx] = hit

    return ReceptionMatrix(below_sensitivity=below, collision=collided & ~below)


# -------------------------------------------------------------------
#  Runs
# -------------------------------------------------------------------


@dataclass(frozen=True)
class Replication:
    trace: TrafficTrace
    outcome: ReceptionMatrix

    def counts(self, ed_count: int) -> tuple[IntArray, IntArray]:
        sent = np.bincount(self.trace.ed_id, minlength=ed_count)
        delivered = np.bincount(self.trace.ed_id[self.outcome.delivered()], minlength=ed_count)
        return sent, delivered


def horizon_for_packets(
    scenario: NetworkScenario, plan: ChannelPlan, assignment: Assignment, packets_per_ed: int
) -> float:
    """Horizon at which the slowest device expects to send `packets_per_ed` packets."""
    if scenario.ed_count == 0:
        return 1.0
    model = AnalyticalModel(scenario, plan)
    channels, sfs, _ = assignment.arrays()
    cycle = model.toa_s[sfs - 7, channels] / scenario.duty_cycle
    return float(packets_per_ed * np.max(cycle + 1.0 / scenario.send_rate))


def simulate_once(
    scenario: NetworkScenario, plan: ChannelPlan, assignment: Assignment, horizon: float, seed: Seed
) -> Replication:
    model = AnalyticalModel(scenario, plan)
    trace = generate_traffic(scenario, plan, assignment, horizon, seed, model=model)
    return Replication(trace=trace, outcome=judge_trace(trace, scenario.preamble_symbols))


def _replication_counts(
    args: tuple[NetworkScenario, ChannelPlan, Assignment, float, np.random.SeedSequence],
) -> tuple[IntArray, IntArray]:
    scenario, plan, assignment, horizon, seq = args
    return simulate_once(scenario, plan, assignment, horizon, seq).counts(scenario.ed_count)


def run_simulation(
    scenario: NetworkScenario,
    plan: ChannelPlan,
    assignment: Assignment,
    horizon: float,
    replications: int = 1,
    seed: int = 0,
    workers: int = 1,
) -> SimStats:
    """
    Runs independent replications with child seeds spawned from `seed` and pools their counters.

    Replication results are merged in spawn order, so the outcome does not depend on `workers`.
    """
    if replications < 1:
        raise SchemaLogicError(f"Need at least one replication, got {replications}")
    n = scenario.ed_count
    children = np.random.SeedSequence(seed).spawn(replications)
    jobs = [(scenario, plan, assignment, horizon, child) for child in children]

    if workers > 1 and replications > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(tqdm(pool.map(_replication_counts, jobs), total=replications, desc="Replications"))
    else:
        results = [_replication_counts(job) for job in tqdm(jobs, desc="Replications", disable=replications < 2)]

    sent = np.zeros(n, dtype=np.int64)
    delivered = np.zeros(n, dtype=np.int64)
    for s, d in results:
        sent += s
        delivered += d

    model = AnalyticalModel(scenario, plan)
    channels, sfs, tps = assignment.arrays()
    per_packet_j = model.energy.power_w(tps) * model.toa_s[sfs - 7, channels] if n else np.zeros(0)
    stats = SimStats(
        sent=[int(x) for x in sent],
        delivered=[int(x) for x in delivered],
        energy_j=[float(x) for x in sent * per_packet_j],
        payload_bytes=scenario.payload_bytes,
        replications=replications,
        horizon_s=horizon,
    )
    if n and stats.min_sent < MIN_PACKETS_PER_ED:
        logger.warning(
            f"Under-sampled simulation: some ED sent only {stats.min_sent} packets (< {MIN_PACKETS_PER_ED})."
        )
    return stats
