"""
The single arbiter of assignment feasibility.

Covers TP bounds, one (channel, SF) pair per device, channel range and the
per-channel quota. The PDR floor is reported, never enforced here.
"""

from collections import Counter
from collections.abc import Sequence

from loraee.domain.schemas import Assignment, ChannelPlan, NetworkScenario
from loraee.exceptions import AssignmentConstraintError
from loraee.utils.logging import logger

TP_TOLERANCE_DB = 1e-9


def constraint_violations(assignment: Assignment, scenario: NetworkScenario, plan: ChannelPlan) -> list[str]:
    """Returns a human-readable list of every violated constraint; empty means feasible."""
    problems: list[str] = []
    if assignment.ed_count != scenario.ed_count:
        problems.append(f"assignment covers {assignment.ed_count} EDs, scenario has {scenario.ed_count}")

    for i, p in enumerate(assignment.tps_dbm):
        if p < scenario.tp_min_dbm - TP_TOLERANCE_DB or p > scenario.tp_max_dbm + TP_TOLERANCE_DB:
            problems.append(f"ED {i}: TP {p} dBm outside [{scenario.tp_min_dbm}, {scenario.tp_max_dbm}]")

    for i, c in enumerate(assignment.channels):
        if not 0 <= c < plan.channel_count:
            problems.append(f"ED {i}: channel {c} not in plan of {plan.channel_count} channels")

    occupancy = Counter(assignment.channels)
    for c, count in sorted(occupancy.items()):
        if count > plan.quota:
            problems.append(f"channel {c}: {count} EDs exceed quota {plan.quota}")
    return problems


def validate_assignment(assignment: Assignment, scenario: NetworkScenario, plan: ChannelPlan) -> Assignment:
    """
    Checks an assignment against the scenario and plan.

    Returns:
        The same assignment, for chaining.

    Raises:
        AssignmentConstraintError: listing every violation found.
    """
    problems = constraint_violations(assignment, scenario, plan)
    if problems:
        shown = "; ".join(problems[:5])
        more = f" (+{len(problems) - 5} more)" if len(problems) > 5 else ""
        msg = f"Assignment violates {len(problems)} constraint(s): {shown}{more}"
        logger.error(msg)
        raise AssignmentConstraintError(msg)
    return assignment


def pdr_shortfall(pdr: Sequence[float], threshold: float) -> list[int]:
    """Indices of EDs whose PDR is below the threshold."""
    return [i for i, d in enumerate(pdr) if d < threshold]
