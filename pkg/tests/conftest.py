import pytest

from wavesim.engine import Engine, RngRegistry
from wavesim.mac import MacParams, WaveMac
from wavesim.phy import Medium, PhyParams


def make_cell(positions, phy=None, mac_params=None, seed=1):
    """Stations at fixed 1-D positions sharing one engine and medium."""
    engine = Engine(RngRegistry(seed))
    phy = phy or PhyParams()
    medium = Medium(engine, phy)
    macs = {}
    for node_id, pos in positions.items():
        mac = WaveMac(node_id, engine, medium, phy,
                      mac_params or MacParams(),
                      engine.rng.stream(f"backoff/{node_id}"))
        medium.attach(node_id, lambda t_us, p=pos: p,
                      mac.on_phy_receive, mac.on_activity_change)
        macs[node_id] = mac
    return engine, medium, macs


@pytest.fixture
def zero_backoff():
    return MacParams(cw_min=0)
