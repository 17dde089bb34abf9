import numpy as np
import pytest
from pydantic import ValidationError

from loraee.allocators import AdrAllocator, DemodFloorTable, EfLoraAllocator, RcstAllocator, adr_assign, eflora_assign
from loraee.allocators.base_allocator import random_channels, round_robin_channels
from loraee.analytical import AnalyticalModel
from loraee.domain.radio import power_levels
from loraee.domain.schemas import ChannelPlan, NetworkScenario
from loraee.exceptions import InfeasibleQuotaError


@pytest.fixture
def edge_scenario() -> NetworkScenario:
    """A device 100 m from the gateway and one on the 12 km cell edge."""
    return NetworkScenario(gw_positions=[(10_000.0, 10_000.0)], ed_positions=[(10_100.0, 10_000.0), (22_000.0, 10_000.0)])


class TestChannelHelpers:
    def test_round_robin(self) -> None:
        """Tests i mod C channels."""
        plan = ChannelPlan.for_devices(5, channel_count=2)
        assert round_robin_channels(5, plan).tolist() == [0, 1, 0, 1, 0]

    def test_random_channels_respect_quota(self, rng: np.random.Generator) -> None:
        """Tests that random channels never overfill a channel."""
        plan = ChannelPlan(bandwidths_hz=[125e3] * 3, quota=4)
        channels = random_channels(rng, 10, plan)
        assert np.bincount(channels, minlength=3).max() <= 4

    def test_helpers_check_capacity(self, rng: np.random.Generator) -> None:
        """Tests that both helpers refuse an infeasible plan."""
        plan = ChannelPlan(bandwidths_hz=[125e3], quota=2)
        with pytest.raises(InfeasibleQuotaError):
            round_robin_channels(3, plan)
        with pytest.raises(InfeasibleQuotaError):
            random_channels(rng, 3, plan)


class TestRcst:
    def test_is_seeded_and_feasible(self, two_gw_scenario: NetworkScenario, two_channel_plan: ChannelPlan) -> None:
        """Tests determinism per seed and TP values on the grid."""
        # Arrange
        allocator = RcstAllocator(levels=4)

        # Act
        first = allocator.allocate(two_gw_scenario, two_channel_plan, seed=8)
        second = allocator.allocate(two_gw_scenario, two_channel_plan, seed=8)

        # Assert
        assert first.assignment == second.assignment
        assert set(first.assignment.tps_dbm) <= set(power_levels(2.0, 20.0, 4))
        assert allocator.allocate(two_gw_scenario, two_channel_plan, seed=9).assignment != first.assignment


class TestAdr:
    def test_near_and_edge_devices(self, edge_scenario: NetworkScenario) -> None:
        """Tests SF7 at minimum power near the gateway and SF12 at maximum power at the edge."""
        # Arrange
        plan = ChannelPlan.for_devices(2, channel_count=1)

        # Act
        allocation = AdrAllocator().allocate(edge_scenario, plan, seed=0)

        # Assert
        assert allocation.assignment.sfs == [7, 12]
        assert allocation.assignment.tps_dbm == [2.0, 20.0]
        assert allocation.flagged == []

    def test_unreachable_device_is_flagged(self) -> None:
        """Tests that a device no floor can serve falls back to SF12 at p_max."""
        # Arrange
        scenario = NetworkScenario(
            gw_positions=[(0.0, 0.0)], ed_positions=[(100.0, 0.0), (20_000.0, 0.0)], cell_radius_m=20_000.0
        )
        plan = ChannelPlan.for_devices(2, channel_count=2)

        # Act
        allocation = adr_assign(scenario, plan)

        # Assert
        assert allocation.flagged == [1]
        assert allocation.assignment.sfs[1] == 12
        assert allocation.assignment.tps_dbm[1] == 20.0
        assert allocation.assignment.channels == [0, 1]

    def test_floor_table_must_decrease(self) -> None:
        """Tests the demodulation floor ordering check."""
        with pytest.raises(ValidationError):
            DemodFloorTable(floors_db=(-7.5, -7.5, -12.5, -15.0, -17.5, -20.0))


class TestEfLora:
    def test_raises_the_minimum_ee(self, two_gw_scenario: NetworkScenario, two_channel_plan: ChannelPlan) -> None:
        """Tests a non-decreasing min-EE trajectory ending at a local optimum."""
        # Act
        allocation = eflora_assign(two_gw_scenario, two_channel_plan, levels=3)

        # Assert
        trajectory = allocation.details["min_ee_trajectory"]
        assert allocation.converged
        assert all(b > a for a, b in zip(trajectory, trajectory[1:], strict=False))
        report = AnalyticalModel(two_gw_scenario, two_channel_plan).evaluate(allocation.assignment)
        assert float(report.per_ed.min()) == pytest.approx(trajectory[-1])
        assert np.bincount(allocation.assignment.channels).max() <= two_channel_plan.quota

    def test_step_cap(self, two_gw_scenario: NetworkScenario, two_channel_plan: ChannelPlan) -> None:
        """Tests that a zero-step cap returns the starting point unconverged."""
        allocation = eflora_assign(two_gw_scenario, two_channel_plan, levels=3, max_steps=0)
        assert not allocation.converged
        assert allocation.details["steps"] == 0
        assert allocation.assignment.channels == [0, 1, 0, 1, 0, 1, 0, 1]

    def test_allocator_validates(self, two_gw_scenario: NetworkScenario, two_channel_plan: ChannelPlan) -> None:
        """Tests the allocator wrapper's output is feasible."""
        allocation = EfLoraAllocator(levels=3).allocate(two_gw_scenario, two_channel_plan, seed=0)
        assert allocation.assignment.ed_count == 8
