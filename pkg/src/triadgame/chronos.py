"""Time-based representation (the WHEN).

Timestamps are integer milliseconds since the Unix epoch. This module holds
the temporal metric, Allen's interval topology, and the sequent-snapshot log
that records positioned observations as periodic timestamped samples.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from enum import Enum

from .errors import DegenerateInterval, InvalidInterval, StaleSequence
from .geo import GeoPoint

# Milliseconds since the Unix epoch.
Millis = int


@dataclass(frozen=True)
class Interval:
    """A closed time interval; point intervals (start == end) are allowed."""

    start: Millis
    end: Millis

    def __post_init__(self) -> None:
        if self.start > self.end:
            raise InvalidInterval(f"interval start {self.start} after end {self.end}")

    @property
    def proper(self) -> bool:
        return self.start < self.end

    def contains_instant(self, t: Millis) -> bool:
        return self.start <= t <= self.end


def temporal_distance(a: Millis, b: Millis) -> Millis:
    """Length of the timeline interval between two instants, in ms."""
    return abs(b - a)


class AllenRelation(Enum):
    BEFORE = "before"
    MEETS = "meets"
    OVERLAPS = "overlaps"
    STARTS = "starts"
    DURING = "during"
    FINISHES = "finishes"
    EQUALS = "equals"
    AFTER = "after"
    MET_BY = "met_by"
    OVERLAPPED_BY = "overlapped_by"
    STARTED_BY = "started_by"
    CONTAINS = "contains"
    FINISHED_BY = "finished_by"

    def inverse(self) -> "AllenRelation":
        return _ALLEN_INVERSE[self]


_ALLEN_INVERSE = {
    AllenRelation.BEFORE: AllenRelation.AFTER,
    AllenRelation.AFTER: AllenRelation.BEFORE,
    AllenRelation.MEETS: AllenRelation.MET_BY,
    AllenRelation.MET_BY: AllenRelation.MEETS,
    AllenRelation.OVERLAPS: AllenRelation.OVERLAPPED_BY,
    AllenRelation.OVERLAPPED_BY: AllenRelation.OVERLAPS,
    AllenRelation.STARTS: AllenRelation.STARTED_BY,
    AllenRelation.STARTED_BY: AllenRelation.STARTS,
    AllenRelation.DURING: AllenRelation.CONTAINS,
    AllenRelation.CONTAINS: AllenRelation.DURING,
    AllenRelation.FINISHES: AllenRelation.FINISHED_BY,
    AllenRelation.FINISHED_BY: AllenRelation.FINISHES,
    AllenRelation.EQUALS: AllenRelation.EQUALS,
}


def interval_relation(a: Interval, b: Interval) -> AllenRelation:
    """The unique Allen relation between two proper intervals."""
    if not a.proper or not b.proper:
        raise DegenerateInterval("Allen relations are defined on proper intervals only")
    if a.end < b.start:
        return AllenRelation.BEFORE
    if b.end < a.start:
        return AllenRelation.AFTER
    if a.end == b.start:
        return AllenRelation.MEETS
    if b.end == a.start:
        return AllenRelation.MET_BY
    if a.start == b.start and a.end == b.end:
        return AllenRelation.EQUALS
    if a.start == b.start:
        return AllenRelation.STARTS if a.end < b.end else AllenRelation.STARTED_BY
    if a.end == b.end:
        return AllenRelation.FINISHES if a.start > b.start else AllenRelation.FINISHED_BY
    if b.start < a.start and a.end < b.end:
        return AllenRelation.DURING
    if a.start < b.start and b.end < a.end:
        return AllenRelation.CONTAINS
    if a.start < b.start:
        return AllenRelation.OVERLAPS
    return AllenRelation.OVERLAPPED_BY


class PointRelation(Enum):
    """Where an instant falls relative to a closed interval."""

    BEFORE = "before"
    AT_START = "at_start"
    DURING = "during"
    AT_END = "at_end"
    AFTER = "after"


def point_relation(t: Millis, interval: Interval) -> PointRelation:
    if t < interval.start:
        return PointRelation.BEFORE
    if t == interval.start:
        return PointRelation.AT_START
    if t < interval.end:
        return PointRelation.DURING
    if t == interval.end:
        return PointRelation.AT_END
    return PointRelation.AFTER


# ---------------------------------------------------------------------------
# Sequent-snapshot log
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ObservationRecord:
    """One triad link: an object observed at a point at a reconciled time.

    ``device_timestamp`` is the raw device clock reading; ``virtual_timestamp``
    is the engine-reconciled time assigned at ingest. ``seq`` increases
    strictly per (object, device).
    """

    object: str
    point: GeoPoint
    device_timestamp: Millis
    virtual_timestamp: Millis
    device: str
    seq: int

    def to_json_dict(self) -> dict:
        return {
            "object": self.object,
            "lat": self.point.lat,
            "lon": self.point.lon,
            "layer": self.point.layer,
            "device_ts_ms": self.device_timestamp,
            "virtual_ts_ms": self.virtual_timestamp,
            "device": self.device,
            "seq": self.seq,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ObservationRecord":
        return cls(
            object=doc["object"],
            point=GeoPoint(doc["lat"], doc["lon"], doc.get("layer")),
            device_timestamp=int(doc["device_ts_ms"]),
            virtual_timestamp=int(doc["virtual_ts_ms"]),
            device=doc["device"],
            seq=int(doc["seq"]),
        )


class SnapshotLog:
    """Append-only record log kept ordered by virtual timestamp.

    Insertion is stable for equal timestamps, and per (object, device) the
    sequence number must strictly increase; replays raise StaleSequence.
    """

    def __init__(self) -> None:
        self._records: list[ObservationRecord] = []
        self._keys: list[Millis] = []  # parallel list of virtual timestamps
        self._last_seq: dict[tuple[str, str], int] = {}
        self._arrivals = 0

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self):
        return iter(self._records)

    def last_seq(self, object_id: str, device: str) -> int | None:
        return self._last_seq.get((object_id, device))

    def append(self, rec: ObservationRecord) -> int:
        """Insert a record; returns its arrival index (a stable handle)."""
        key = (rec.object, rec.device)
        last = self._last_seq.get(key)
        if last is not None and rec.seq <= last:
            raise StaleSequence(
                f"seq {rec.seq} <= last {last} for object {rec.object!r} device {rec.device!r}"
            )
        idx = bisect.bisect_right(self._keys, rec.virtual_timestamp)
        self._keys.insert(idx, rec.virtual_timestamp)
        self._records.insert(idx, rec)
        self._last_seq[key] = rec.seq
        handle = self._arrivals
        self._arrivals += 1
        return handle

    def slice(self, object_id: str, window: Interval) -> list[ObservationRecord]:
        """Records for one object with virtual timestamp in [start, end], ordered."""
        lo = bisect.bisect_left(self._keys, window.start)
        hi = bisect.bisect_right(self._keys, window.end)
        return [r for r in self._records[lo:hi] if r.object == object_id]

    def for_object(self, object_id: str) -> list[ObservationRecord]:
        return [r for r in self._records if r.object == object_id]


def append_snapshot(log: SnapshotLog, rec: ObservationRecord) -> SnapshotLog:
    """Append ``rec`` to the log and return the log (fluent convenience)."""
    log.append(rec)
    return log
