"""Spatiotemporal engine for technology-sustained pervasive games.

The model splits the game world into the WHAT (objects in a taxonomy with
group sets), the WHERE (georeferenced points and zones), and the WHEN
(timestamps, intervals, and the sequent-snapshot log), linked by observation
records and queryable along all three axes. The physical world reaches the
virtual model only through measured space and measured time: parameterized
GPS and device-clock error models with reconciliation at ingest.
"""

from .chronos import (
    AllenRelation,
    Interval,
    ObservationRecord,
    PointRelation,
    SnapshotLog,
    append_snapshot,
    interval_relation,
    point_relation,
    temporal_distance,
)
from .engine import GameEngine, SessionState, UpdateMessage, canonical_state, replica_check
from .errors import GameModelError
from .geo import (
    Circle,
    GeoPoint,
    Polygon,
    TopoRelation,
    Zone,
    contains,
    distance_to_zone,
    geodesic_distance,
    load_zones,
    topo_relation,
)
from .quest import GroupProgress, QuestGraph, QuestTracker, advance, load_quest_graph, validate_graph
from .sensing import (
    ClockModel,
    Handshake,
    MeasurementModel,
    estimate_offset,
    ingest,
    measure_position,
    measure_time,
)
from .simharness import Scenario, ScenarioResult, load_scenario, run_scenario, write_outputs
from .stquery import EventKind, QueryEngine, Trajectory, ZoneEvent
from .transport import SimNet, TcpClient, TcpEngineServer
from .triad_store import GameObject, TriadStore, ZoneRef, load_taxonomy

__all__ = [
    "AllenRelation",
    "Circle",
    "ClockModel",
    "EventKind",
    "GameEngine",
    "GameModelError",
    "GameObject",
    "GeoPoint",
    "GroupProgress",
    "Handshake",
    "Interval",
    "MeasurementModel",
    "ObservationRecord",
    "PointRelation",
    "Polygon",
    "QueryEngine",
    "QuestGraph",
    "QuestTracker",
    "Scenario",
    "ScenarioResult",
    "SessionState",
    "SimNet",
    "SnapshotLog",
    "TcpClient",
    "TcpEngineServer",
    "TopoRelation",
    "Trajectory",
    "TriadStore",
    "UpdateMessage",
    "Zone",
    "ZoneEvent",
    "ZoneRef",
    "advance",
    "append_snapshot",
    "canonical_state",
    "contains",
    "distance_to_zone",
    "estimate_offset",
    "geodesic_distance",
    "ingest",
    "interval_relation",
    "load_quest_graph",
    "load_scenario",
    "load_taxonomy",
    "load_zones",
    "measure_position",
    "measure_time",
    "point_relation",
    "replica_check",
    "run_scenario",
    "temporal_distance",
    "topo_relation",
    "validate_graph",
    "write_outputs",
]

__version__ = "0.1.0"
