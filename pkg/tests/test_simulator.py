import math

import numpy as np
import pytest
from pytest_mock import MockerFixture

from loraee.analytical import AnalyticalModel, path_loss
from loraee.domain.radio import sensitivity_mw
from loraee.domain.schemas import Assignment, ChannelPlan, NetworkScenario
from loraee.exceptions import SchemaLogicError
from loraee.simulator import (
    TransmissionEvent,
    generate_traffic,
    horizon_for_packets,
    judge_reception,
    judge_trace,
    run_simulation,
    simulate_once,
)
from loraee.utils.stats import binomial_stderr


@pytest.fixture
def busy_scenario(single_gw_scenario: NetworkScenario) -> NetworkScenario:
    """Heavy traffic without off-time so that collisions are frequent."""
    return single_gw_scenario.model_copy(update={"send_rate": 0.5, "duty_cycle": 1.0})


def test_generate_traffic_is_sorted_and_deterministic(
    busy_scenario: NetworkScenario, two_channel_plan: ChannelPlan
) -> None:
    """Tests start ordering, the horizon and seed reproducibility."""
    # Arrange
    assignment = Assignment(channels=[0, 0, 0, 1, 1, 1], sfs=[7] * 6, tps_dbm=[14.0] * 6)

    # Act
    first = generate_traffic(busy_scenario, two_channel_plan, assignment, 30.0, seed=3)
    second = generate_traffic(busy_scenario, two_channel_plan, assignment, 30.0, seed=3)

    # Assert
    assert len(first) > 0
    assert np.all(np.diff(first.start_s) >= 0.0)
    assert np.all(first.start_s < 30.0)
    np.testing.assert_array_equal(first.start_s, second.start_s)
    np.testing.assert_array_equal(first.fading, second.fading)
    assert first.fading.shape == (len(first), 1)


def test_generate_traffic_respects_off_time(single_gw_scenario: NetworkScenario) -> None:
    """Tests that consecutive packets of one device are at least toa / duty_cycle apart."""
    # Arrange
    scenario = single_gw_scenario.model_copy(update={"send_rate": 1.0, "duty_cycle": 0.1})
    plan = ChannelPlan.for_devices(6, channel_count=1)
    assignment = Assignment(channels=[0] * 6, sfs=[9] * 6, tps_dbm=[14.0] * 6)
    cycle = AnalyticalModel(scenario, plan).toa_s[2, 0] / 0.1

    # Act
    trace = generate_traffic(scenario, plan, assignment, 100.0, seed=0)

    # Assert
    for ed in range(6):
        starts = trace.start_s[trace.ed_id == ed]
        assert np.all(np.diff(starts) >= cycle - 1e-9)


def test_generate_traffic_rejects_bad_horizon(
    single_gw_scenario: NetworkScenario, two_channel_plan: ChannelPlan
) -> None:
    """Tests that the horizon must be positive."""
    assignment = Assignment(channels=[0] * 6, sfs=[7] * 6, tps_dbm=[14.0] * 6)
    with pytest.raises(SchemaLogicError):
        generate_traffic(single_gw_scenario, two_channel_plan, assignment, 0.0, seed=0)


def test_sweep_matches_reference_judge(busy_scenario: NetworkScenario) -> None:
    """Tests the vectorised sweep against the per-event reference decision."""
    # Arrange
    plan = ChannelPlan.for_devices(6, channel_count=2)
    assignment = Assignment(channels=[0, 1, 0, 1, 0, 0], sfs=[7, 7, 8, 9, 7, 10], tps_dbm=[14.0] * 6)
    trace = generate_traffic(busy_scenario, plan, assignment, 40.0, seed=11)
    events = list(trace.events())

    # Act
    outcome = judge_trace(trace, busy_scenario.preamble_symbols)

    # Assert
    assert outcome.collision.any()
    for e, event in enumerate(events):
        reference = judge_reception(event, events, 0, busy_scenario.preamble_symbols)
        assert reference.ok == bool(outcome.ok[e, 0]), f"event {e} disagrees"


def test_reception_matrix_gateway_replay(two_gw_scenario: NetworkScenario, sf7_assignment: Assignment) -> None:
    """Tests that dropping a gateway can only remove deliveries."""
    # Arrange
    plan = ChannelPlan.for_devices(8, channel_count=2)
    replication = simulate_once(two_gw_scenario, plan, sf7_assignment, 5_000.0, seed=2)

    # Act
    both = replication.outcome.delivered()
    first_only = replication.outcome.delivered([0])

    # Assert
    assert np.all(both >= first_only)
    sent, delivered = replication.counts(8)
    assert sent.sum() == len(replication.trace)
    assert np.all(delivered <= sent)


def _within_three_sigma(simulated: list[float], analytical: np.ndarray, sent: list[int]) -> None:
    for ed, (p_sim, p_model, n) in enumerate(zip(simulated, analytical, sent, strict=True)):
        assert abs(p_sim - p_model) <= 3 * binomial_stderr(float(p_model), n), f"ED {ed}: {p_sim} vs {p_model}"


def test_lone_devices_match_analytical_pdr(single_gw_scenario: NetworkScenario) -> None:
    """Tests that without interference the simulated PDR tracks exp(-sensitivity / rx) within 3 sigma."""
    # Arrange
    scenario = single_gw_scenario.model_copy(update={"send_rate": 0.1, "duty_cycle": 1.0})
    plan = ChannelPlan.for_devices(6, channel_count=6)
    assignment = Assignment(channels=list(range(6)), sfs=[7, 7, 8, 9, 10, 11], tps_dbm=[14.0] * 6)
    analytical = AnalyticalModel(scenario, plan).evaluate(assignment).pdr.multi_gw
    horizon = horizon_for_packets(scenario, plan, assignment, 10_000)

    # Act
    stats = run_simulation(scenario, plan, assignment, horizon=horizon, replications=1, seed=5)

    # Assert
    assert stats.min_sent > 9_000
    _within_three_sigma(stats.pdr_hat, analytical, stats.sent)


def test_device_at_the_sensitivity_edge_survives_one_in_e() -> None:
    """Tests a lone device whose mean received power equals the sensitivity."""
    # Arrange
    scenario = NetworkScenario(
        gw_positions=[(10_000.0, 10_000.0)], ed_positions=[(13_000.0, 10_000.0)], send_rate=0.1, duty_cycle=1.0
    )
    plan = ChannelPlan.for_devices(1, channel_count=1)
    a = float(path_loss(3_000.0, scenario.carrier_frequency_hz, scenario.path_loss_exponent, scenario.light_speed_m_s))
    assignment = Assignment(channels=[0], sfs=[7], tps_dbm=[10.0 * math.log10(sensitivity_mw(7) / a)])
    analytical = AnalyticalModel(scenario, plan).evaluate(assignment).pdr.multi_gw

    # Act
    stats = run_simulation(
        scenario, plan, assignment, horizon=horizon_for_packets(scenario, plan, assignment, 10_000), seed=8
    )

    # Assert
    assert analytical[0] == pytest.approx(math.exp(-1.0))
    _within_three_sigma(stats.pdr_hat, analytical, stats.sent)


def test_two_colliding_devices_match_analytical_pdr() -> None:
    """Tests a near and a far device sharing one channel against the analytical PDR at 10^5 packets each."""
    # Arrange
    scenario = NetworkScenario(
        gw_positions=[(10_000.0, 10_000.0)],
        ed_positions=[(10_200.0, 10_000.0), (10_000.0, 9_400.0)],
        send_rate=0.1,
        duty_cycle=1.0,
    )
    plan = ChannelPlan.for_devices(2, channel_count=1)
    assignment = Assignment(channels=[0, 0], sfs=[7, 7], tps_dbm=[14.0, 14.0])
    analytical = AnalyticalModel(scenario, plan).evaluate(assignment).pdr.multi_gw

    # Act
    stats = run_simulation(
        scenario, plan, assignment, horizon=horizon_for_packets(scenario, plan, assignment, 100_000), seed=21
    )

    # Assert
    assert stats.min_sent > 95_000
    assert analytical[1] < analytical[0] < 1.0
    _within_three_sigma(stats.pdr_hat, analytical, stats.sent)


def test_duty_cycle_caps_airtime(single_gw_scenario: NetworkScenario) -> None:
    """Tests that SF12 devices with saturated demand stay within a 1 % airtime share."""
    # Arrange
    scenario = single_gw_scenario.model_copy(update={"send_rate": 1.0, "duty_cycle": 0.01})
    plan = ChannelPlan.for_devices(6, channel_count=1)
    assignment = Assignment(channels=[0] * 6, sfs=[12] * 6, tps_dbm=[14.0] * 6)

    # Act
    trace = generate_traffic(scenario, plan, assignment, 20_000.0, seed=4)

    # Assert
    airtime = np.bincount(trace.ed_id, weights=trace.toa_s, minlength=6) / 20_000.0
    assert np.all(airtime <= 0.01 + 0.001)
    assert np.all(airtime > 0.009)


def _event(ed_id: int, start_s: float, toa_s: float = 0.056576) -> TransmissionEvent:
    """An SF7 packet on channel 0 received at 1e-9 mW without fading."""
    return TransmissionEvent(
        ed_id=ed_id,
        start_s=start_s,
        toa_s=toa_s,
        symbol_s=1.024e-3,
        channel=0,
        sf=7,
        tp_dbm=14.0,
        mean_rx_mw=(1e-9,),
        fading=(1.0,),
    )


def test_overlap_in_disposable_preamble_is_harmless() -> None:
    """Tests that only interference after the first three preamble symbols can destroy a packet."""
    # Arrange
    target = _event(0, 10.0)
    ends_early = _event(1, 9.95, toa_s=0.0515)
    inside_preamble = _event(2, 10.0005, toa_s=0.002)
    hits_critical = _event(3, 10.0035, toa_s=0.002)

    # Act
    spared = judge_reception(target, [target, ends_early, inside_preamble], 0)
    hit = judge_reception(target, [target, hits_critical], 0)

    # Assert
    assert spared.ok
    assert not hit.ok
    assert hit.collision
    assert not hit.below_sensitivity


def test_equal_power_colliders_both_fail() -> None:
    """Tests that SIR 1 is under the 1 dB same-SF capture threshold in both directions."""
    first, second = _event(0, 10.0), _event(1, 10.02)
    for event in (first, second):
        outcome = judge_reception(event, [first, second], 0)
        assert not outcome.ok
        assert outcome.collision


def test_run_simulation_is_reproducible_and_warns(
    two_gw_scenario: NetworkScenario, sf7_assignment: Assignment, mocker: MockerFixture
) -> None:
    """Tests seed reproducibility and the under-sampling warning."""
    # Arrange
    plan = ChannelPlan.for_devices(8, channel_count=2)
    mock_logger = mocker.patch("loraee.simulator.logger")

    # Act
    first = run_simulation(two_gw_scenario, plan, sf7_assignment, horizon=2_000.0, replications=2, seed=9)
    second = run_simulation(two_gw_scenario, plan, sf7_assignment, horizon=2_000.0, replications=2, seed=9)

    # Assert
    assert first == second
    assert first.replications == 2
    assert len(first.energy_j) == 8
    mock_logger.warning.assert_called()


def test_horizon_for_packets(single_gw_scenario: NetworkScenario) -> None:
    """Tests that the horizon covers the slowest device's expected cycle."""
    plan = ChannelPlan.for_devices(6, channel_count=1)
    assignment = Assignment(channels=[0] * 6, sfs=[7, 7, 7, 7, 7, 12], tps_dbm=[14.0] * 6)
    toa12 = AnalyticalModel(single_gw_scenario, plan).toa_s[5, 0]
    expected = 50 * (toa12 / single_gw_scenario.duty_cycle + 1.0 / single_gw_scenario.send_rate)
    assert horizon_for_packets(single_gw_scenario, plan, assignment, 50) == pytest.approx(expected)


def test_run_simulation_needs_a_replication(
    two_gw_scenario: NetworkScenario, sf7_assignment: Assignment
) -> None:
    """Tests that zero replications is refused."""
    plan = ChannelPlan.for_devices(8, channel_count=2)
    with pytest.raises(SchemaLogicError):
        run_simulation(two_gw_scenario, plan, sf7_assignment, horizon=10.0, replications=0)
