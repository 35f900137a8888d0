import dataclasses

import pytest

from vrwifi.config import MacConfig, PhyConfig, SimConfig, TrafficConfig


def make_cfg(duration_s=1.0, warmup_ms=0.0, phy=None, mac=None,
             traffic=None, **top) -> SimConfig:
    """SimConfig with per-section overrides given as dicts."""
    cfg = SimConfig(duration_s=duration_s, warmup_ms=warmup_ms, **top)
    if phy:
        cfg = dataclasses.replace(cfg, phy=dataclasses.replace(cfg.phy, **phy))
    if mac:
        cfg = dataclasses.replace(cfg, mac=dataclasses.replace(cfg.mac, **mac))
    if traffic:
        cfg = dataclasses.replace(
            cfg, traffic=dataclasses.replace(cfg.traffic, **traffic))
    return cfg


@pytest.fixture
def defaults() -> SimConfig:
    return SimConfig()


@pytest.fixture
def phy() -> PhyConfig:
    return PhyConfig()


@pytest.fixture
def mac() -> MacConfig:
    return MacConfig()


@pytest.fixture
def traffic_cfg() -> TrafficConfig:
    return TrafficConfig()
