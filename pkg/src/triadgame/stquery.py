"""The three spatiotemporal query forms over the triad store.

Position semantics differ by query on purpose:

* ``where_of`` / ``what_at`` use recorded fixes only (no fabricated presence),
* ``when_of`` interpolates linearly between bracketing fixes to answer
  "what time did X enter the zone" with sub-interval precision,
* ``object_distance`` uses step (last-fix-at-or-before) semantics.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Union

from .chronos import Interval, Millis, ObservationRecord
from .errors import EmptyResult, NoFixBefore, UnknownObject
from .geo import GeoPoint, Zone, contains, distance_to_zone, geodesic_distance
from .triad_store import TriadStore


@dataclass(frozen=True)
class TrackPoint:
    point: GeoPoint
    time: Millis


@dataclass(frozen=True)
class Trajectory:
    """An object's path through space: fixes with strictly increasing times."""

    object: str
    points: tuple[TrackPoint, ...]


class EventKind(Enum):
    ENTER = "enter"
    EXIT = "exit"


@dataclass(frozen=True)
class ZoneEvent:
    """One boundary crossing; ``interpolated`` marks times solved between fixes."""

    object: str
    zone: str
    kind: EventKind
    time: Millis
    interpolated: bool


def _merged_track(records: list[ObservationRecord]) -> list[TrackPoint]:
    """Order fixes by virtual time; equal instants collapse to the
    (device, seq)-max record, matching the store's current-position rule."""
    best: dict[Millis, ObservationRecord] = {}
    for rec in records:
        cur = best.get(rec.virtual_timestamp)
        if cur is None or (rec.device, rec.seq) > (cur.device, cur.seq):
            best[rec.virtual_timestamp] = rec
    return [
        TrackPoint(best[t].point, t) for t in sorted(best)
    ]


def interpolate(a: TrackPoint, b: TrackPoint, t: Millis) -> GeoPoint:
    """Component-wise linear position between two fixes at instant ``t``."""
    if not a.time <= t <= b.time:
        raise ValueError(f"instant {t} outside segment [{a.time}, {b.time}]")
    if b.time == a.time:
        return b.point
    f = (t - a.time) / (b.time - a.time)
    return GeoPoint(
        a.point.lat + (b.point.lat - a.point.lat) * f,
        a.point.lon + (b.point.lon - a.point.lon) * f,
    )


def crossing_instant(a: TrackPoint, b: TrackPoint, zone: Zone) -> Millis:
    """Earliest millisecond in (a.time, b.time] at which containment flips.

    The two fixes must disagree about containment; the flip instant is found
    by bisection on the linearly interpolated path.
    """
    inside_a = contains(zone, a.point)
    inside_b = contains(zone, b.point)
    if inside_a == inside_b:
        raise ValueError("fixes do not bracket a boundary crossing")
    lo, hi = a.time, b.time
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if contains(zone, interpolate(a, b, mid)) == inside_a:
            lo = mid
        else:
            hi = mid
    return hi


class QueryEngine:
    """Evaluates triad queries against one store and a zone registry."""

    def __init__(self, store: TriadStore, zones: Mapping[str, Zone] | None = None) -> None:
        self.store = store
        self.zones = dict(zones or {})

    # WHAT + WHEN -> WHERE
    def where_of(self, object_id: str, window: Interval) -> Trajectory:
        """Trajectory the object took during the window."""
        if object_id not in self.store:
            raise UnknownObject(f"unknown object {object_id!r}")
        track = _merged_track(self.store.slice(object_id, window))
        if not track:
            raise EmptyResult(f"no fixes for {object_id!r} in [{window.start}, {window.end}]")
        return Trajectory(object=object_id, points=tuple(track))

    # WHERE + WHEN -> WHAT
    def what_at(self, zone: Zone, window: Interval) -> set[str]:
        """Objects with at least one fix inside the zone during the window."""
        seen: set[str] = set()
        for rec in self.store.log:
            if window.contains_instant(rec.virtual_timestamp) and rec.object not in seen:
                if contains(zone, rec.point):
                    seen.add(rec.object)
        return seen

    # WHAT + WHERE -> WHEN
    def when_of(self, object_id: str, zone: Zone) -> list[ZoneEvent]:
        """Chronological ENTER/EXIT events for the object against the zone."""
        if object_id not in self.store:
            raise UnknownObject(f"unknown object {object_id!r}")
        track = _merged_track(self.store.observations(object_id))
        return track_events(object_id, track, zone)

    def object_distance(
        self, a: str, b: Union[str, Zone], at: Millis
    ) -> float:
        """Meters between a's position and b (object or zone) at instant ``at``."""
        pos_a = self._position_at(a, at)
        if isinstance(b, Zone):
            return distance_to_zone(pos_a, b)
        pos_b = self._position_at(b, at)
        return geodesic_distance(pos_a, pos_b)

    def _position_at(self, object_id: str, at: Millis) -> GeoPoint:
        if object_id not in self.store:
            raise UnknownObject(f"unknown object {object_id!r}")
        best: ObservationRecord | None = None
        for rec in self.store.observations(object_id):
            if rec.virtual_timestamp <= at:
                if best is None or (
                    (rec.virtual_timestamp, rec.device, rec.seq)
                    > (best.virtual_timestamp, best.device, best.seq)
                ):
                    best = rec
        if best is None:
            raise NoFixBefore(f"{object_id!r} has no fix at or before {at}")
        return best.point


def track_events(object_id: str, track: list[TrackPoint], zone: Zone) -> list[ZoneEvent]:
    """ENTER/EXIT events along a fix sequence, interpolating crossing times.

    A first fix already inside the zone yields a non-interpolated ENTER at
    that fix's time.
    """
    events: list[ZoneEvent] = []
    if not track:
        return events
    inside = contains(zone, track[0].point)
    if inside:
        events.append(
            ZoneEvent(object_id, zone.id, EventKind.ENTER, track[0].time, interpolated=False)
        )
    for prev, cur in zip(track, track[1:]):
        now_inside = contains(zone, cur.point)
        if now_inside != inside:
            t = crossing_instant(prev, cur, zone)
            kind = EventKind.ENTER if now_inside else EventKind.EXIT
            events.append(ZoneEvent(object_id, zone.id, kind, t, interpolated=True))
            inside = now_inside
    return events
