import pytest

from loraee.domain.constraints import constraint_violations, pdr_shortfall, validate_assignment
from loraee.domain.schemas import Assignment, ChannelPlan, NetworkScenario
from loraee.exceptions import AssignmentConstraintError


def test_feasible_assignment_passes(
    two_gw_scenario: NetworkScenario, two_channel_plan: ChannelPlan, sf7_assignment: Assignment
) -> None:
    """Tests that a quota-respecting, in-range assignment is returned unchanged."""
    assert constraint_violations(sf7_assignment, two_gw_scenario, two_channel_plan) == []
    assert validate_assignment(sf7_assignment, two_gw_scenario, two_channel_plan) is sf7_assignment


def test_reports_every_violation(two_gw_scenario: NetworkScenario, two_channel_plan: ChannelPlan) -> None:
    """Tests TP range, channel range and quota violations are all listed."""
    # Arrange
    assignment = Assignment(
        channels=[0, 0, 0, 0, 0, 1, 1, 2],
        sfs=[7] * 8,
        tps_dbm=[14.0] * 7 + [25.0],
    )

    # Act
    problems = constraint_violations(assignment, two_gw_scenario, two_channel_plan)

    # Assert
    assert len(problems) == 3
    assert any("TP 25.0" in p for p in problems)
    assert any("channel 2 not in plan" in p for p in problems)
    assert any("5 EDs exceed quota 4" in p for p in problems)
    with pytest.raises(AssignmentConstraintError, match="3 constraint"):
        validate_assignment(assignment, two_gw_scenario, two_channel_plan)


def test_reports_size_mismatch(two_gw_scenario: NetworkScenario, two_channel_plan: ChannelPlan) -> None:
    """Tests that an assignment for the wrong number of devices is infeasible."""
    assignment = Assignment(channels=[0], sfs=[7], tps_dbm=[2.0])
    problems = constraint_violations(assignment, two_gw_scenario, two_channel_plan)
    assert problems[0].startswith("assignment covers 1 EDs")


def test_pdr_shortfall() -> None:
    """Tests that only devices strictly below the threshold are flagged."""
    assert pdr_shortfall([0.9, 0.7, 0.69, 0.1], 0.7) == [2, 3]
