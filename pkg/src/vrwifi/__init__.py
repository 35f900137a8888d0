"""Single-AP/single-client 802.11ax simulator driven by a paced VR video
traffic model, with a companion UDP capture analysis toolkit."""

from vrwifi.config import MacConfig, PhyConfig, SimConfig, TrafficConfig

__all__ = ["PhyConfig", "MacConfig", "TrafficConfig", "SimConfig"]
__version__ = "0.1.0"
