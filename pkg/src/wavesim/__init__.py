"""wavesim: deterministic discrete-event simulator of IEEE 802.11p/WAVE
vehicular networks (highway voice, multi-hop AODV routing, FTP between
moving nodes) with a reproducible metrics pipeline."""

__version__ = "0.1.0"

from .engine import Engine, RngRegistry, RngStream, SimulationError
from .phy import PhyParams, Medium, frame_airtime_us, in_range
from .mac import Frame, MacParams, WaveMac, WbssAdvertisement, accept_frame
from .aodv import AodvParams, AodvRouter, DataPacket, RouteEntry
from .mobility import MobilityProfile, kmh_to_ms, make_profile, position_at
from .metrics import MetricsRecorder, PacketLedger, export_csv, windowed_rate
from .scenario import (ConfigError, ScenarioConfig, build_scenario,
                       config_from_dict, load_config, run)

__all__ = [
    "Engine", "RngRegistry", "RngStream", "SimulationError",
    "PhyParams", "Medium", "frame_airtime_us", "in_range",
    "Frame", "MacParams", "WaveMac", "WbssAdvertisement", "accept_frame",
    "AodvParams", "AodvRouter", "DataPacket", "RouteEntry",
    "MobilityProfile", "kmh_to_ms", "make_profile", "position_at",
    "MetricsRecorder", "PacketLedger", "export_csv", "windowed_rate",
    "ConfigError", "ScenarioConfig", "build_scenario", "config_from_dict",
    "load_config", "run",
    "__version__",
]
