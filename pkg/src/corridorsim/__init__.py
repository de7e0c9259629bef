"""corridorsim: digital twin of an instrumented hallway sensor floor."""

from .floor import FloorConfig, FloorTopology, build_floor, load_floor_config
from .physics import (
    AdcSample,
    GaitParams,
    PirEvent,
    Scenario,
    SensorModel,
    Walker,
    corner_loads,
    load_scenario,
    pir_state,
    transduce,
    walker_contacts,
    world_forces,
)
from .radio import BROADCAST, NodeMsg, RadioConfig
from .engine import Engine, SimConfig, TrackObs
from .node import (
    Actuation,
    AlgorithmHooks,
    Baseline,
    NodeContext,
    calibrate_update,
    detect,
    make_algorithm,
    register_algorithm,
)
from .tracking import (
    DistributedCentroidTracker,
    Metrics,
    Track,
    evaluate,
    oracle_track,
)

__all__ = [
    "FloorConfig", "FloorTopology", "build_floor", "load_floor_config",
    "AdcSample", "GaitParams", "PirEvent", "Scenario", "SensorModel", "Walker",
    "corner_loads", "load_scenario", "pir_state", "transduce",
    "walker_contacts", "world_forces",
    "BROADCAST", "NodeMsg", "RadioConfig",
    "Engine", "SimConfig", "TrackObs",
    "Actuation", "AlgorithmHooks", "Baseline", "NodeContext",
    "calibrate_update", "detect", "make_algorithm", "register_algorithm",
    "DistributedCentroidTracker", "Metrics", "Track", "evaluate", "oracle_track",
]

__version__ = "0.1.0"
