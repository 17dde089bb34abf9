import numpy as np
import pytest

from loraee.domain.schemas import Assignment, ChannelPlan, MaacHyperparams, NetworkScenario


@pytest.fixture
def single_gw_scenario() -> NetworkScenario:
    """One gateway at the centre of the area and six devices at increasing range."""
    gw = (10_000.0, 10_000.0)
    offsets = [500.0, 1_500.0, 3_000.0, 5_000.0, 7_000.0, 9_000.0]
    eds = [(gw[0] + d, gw[1]) if k % 2 == 0 else (gw[0], gw[1] - d) for k, d in enumerate(offsets)]
    return NetworkScenario(seed=7, gw_positions=[gw], ed_positions=eds)


@pytest.fixture
def two_gw_scenario() -> NetworkScenario:
    """Two gateways 12 km apart and eight devices spread between and around them."""
    gws = [(4_000.0, 10_000.0), (16_000.0, 10_000.0)]
    eds = [
        (4_600.0, 10_000.0),
        (3_000.0, 11_000.0),
        (8_000.0, 10_500.0),
        (10_000.0, 9_000.0),
        (12_000.0, 10_000.0),
        (15_000.0, 8_000.0),
        (17_500.0, 10_400.0),
        (16_000.0, 4_000.0),
    ]
    return NetworkScenario(seed=11, gw_positions=gws, ed_positions=eds)


@pytest.fixture
def two_channel_plan() -> ChannelPlan:
    return ChannelPlan(bandwidths_hz=[125e3, 125e3], quota=4)


@pytest.fixture
def sf7_assignment(two_gw_scenario: NetworkScenario) -> Assignment:
    """Everyone on SF7 at 14 dBm, alternating between two channels."""
    n = two_gw_scenario.ed_count
    return Assignment(channels=[i % 2 for i in range(n)], sfs=[7] * n, tps_dbm=[14.0] * n)


@pytest.fixture
def tiny_hyperparams() -> MaacHyperparams:
    """Hyperparameters small enough to train in well under a second."""
    return MaacHyperparams(
        episodes=3,
        slots_per_episode=4,
        buffer_size=64,
        batch_size=4,
        learning_rate=1e-3,
        heads=2,
        embed_dim=4,
        critic_hidden=5,
        actor_hidden=(5,),
        power_levels=3,
        update_every=1,
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
