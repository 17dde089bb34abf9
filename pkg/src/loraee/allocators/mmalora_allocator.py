from loraee.allocators.base_allocator import Allocation, BaseAllocator
from loraee.analytical import AnalyticalModel
from loraee.domain.constraints import pdr_shortfall
from loraee.domain.schemas import ChannelPlan, MaacHyperparams, NetworkScenario
from loraee.maac.bundle import AgentBundle
from loraee.maac.trainer import execute_policy, train
from loraee.matching import run_matching
from loraee.typing import FadingMode
from loraee.utils.logging import logger


class MmaloraAllocator(BaseAllocator):
    """
    Two-stage allocation: swap matching fixes channels, then per-channel MAAC picks SF/TP.

    With `bundles` given (a loaded checkpoint) the training stage is skipped and
    the stored policy is executed on the scenario directly.
    """

    name = "mmalora"

    def __init__(
        self,
        hyperparams: MaacHyperparams | None = None,
        fading_mode: FadingMode = "expected-fading",
        workers: int = 1,
        bundles: list[AgentBundle] | None = None,
        label: str | None = None,
    ) -> None:
        self.hyperparams = hyperparams or MaacHyperparams()
        self.fading_mode: FadingMode = fading_mode
        self.workers = workers
        self.bundles = bundles
        if label is not None:
            self.name = label

    def allocate(self, scenario: NetworkScenario, plan: ChannelPlan, seed: int) -> Allocation:
        details: dict[str, object] = {}
        if self.bundles is None:
            run = run_matching(scenario, plan, seed, self.fading_mode)
            details["matching_scans"] = run.scans
            details["matching_swaps"] = len(run.swaps)
            result = train(scenario, plan, run.matching, self.hyperparams, seed, self.fading_mode, self.workers)
            bundles = result.bundles
            details["curve"] = [p.model_dump() for p in result.curve]
            converged = run.converged
        else:
            bundles = self.bundles
            converged = True

        assignment = execute_policy(bundles, scenario, plan, fading_mode=self.fading_mode)
        report = AnalyticalModel(scenario, plan, self.fading_mode).evaluate(assignment)
        flagged = pdr_shortfall(report.pdr.multi_gw, self.hyperparams.pdr_threshold)
        if flagged:
            logger.info(f"{self.name}: {len(flagged)} EDs below the PDR threshold {self.hyperparams.pdr_threshold}")
        details["bundles"] = bundles
        return self.finalize(
            Allocation(assignment=assignment, flagged=flagged, converged=converged, details=details), scenario, plan
        )
