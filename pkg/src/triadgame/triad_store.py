"""Object-based representation (the WHAT) and the canonical triad links.

Game objects live in a taxonomic hierarchy with attribute inheritance along
the parent chain. Group objects (descendants of the well-known
``generic_admin_group`` object, that object included) hold member sets and
carry their WHERE as a zone binding rather than a point.

The store is single-writer, multi-reader: one lock serializes mutations,
reads hand out frozen snapshots that are safe to share across threads.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Union

from .chronos import Interval, Millis, ObservationRecord, SnapshotLog
from .errors import (
    CycleDetected,
    DuplicateId,
    NotAGroup,
    UnknownObject,
    UnknownParent,
)
from .geo import GeoPoint, Zone, contains

GROUP_ANCESTOR_ID = "generic_admin_group"

Scalar = Union[str, int, float, bool]


def validate_object_id(value: str) -> str:
    if not isinstance(value, str) or not value or any(ch.isspace() for ch in value):
        raise ValueError(f"object id must be a non-empty token without whitespace: {value!r}")
    return value


@dataclass(frozen=True)
class GameObject:
    """Immutable snapshot of one identified entity in the taxonomy."""

    id: str
    parent: str | None
    attributes: Mapping[str, Scalar]
    members: frozenset[str]
    version: int


@dataclass(frozen=True)
class ZoneRef:
    """A WHERE binding to a zone (used for group objects' quest stage)."""

    zone_id: str


Location = Union[GeoPoint, ZoneRef]


@dataclass(frozen=True)
class ObservationHandle:
    object: str
    device: str
    seq: int
    index: int


class TriadStore:
    """Holds the WHAT (taxonomy, groups, attributes) plus object-location-time links."""

    def __init__(self) -> None:
        self._lock = threading.RLock()
        self._objects: dict[str, GameObject] = {}
        self._children: dict[str, set[str]] = {}
        self._log = SnapshotLog()
        # Current-position view per object: record with max virtual_timestamp,
        # ties broken by larger (device, seq).
        self._current: dict[str, ObservationRecord] = {}
        self._zone_bindings: dict[str, str] = {}

    # -- taxonomy ----------------------------------------------------------

    def create_object(
        self,
        object_id: str,
        parent: str | None = None,
        attributes: Mapping[str, Scalar] | None = None,
    ) -> GameObject:
        validate_object_id(object_id)
        with self._lock:
            if object_id in self._objects:
                raise DuplicateId(f"object {object_id!r} already exists")
            if parent == object_id:
                raise CycleDetected(f"object {object_id!r} cannot be its own parent")
            if parent is not None and parent not in self._objects:
                raise UnknownParent(f"parent {parent!r} does not exist")
            obj = GameObject(
                id=object_id,
                parent=parent,
                attributes=dict(attributes or {}),
                members=frozenset(),
                version=1,
            )
            self._objects[object_id] = obj
            self._children.setdefault(object_id, set())
            if parent is not None:
                self._children.setdefault(parent, set()).add(object_id)
            return obj

    def get(self, object_id: str) -> GameObject:
        with self._lock:
            try:
                return self._objects[object_id]
            except KeyError:
                raise UnknownObject(f"unknown object {object_id!r}") from None

    def __contains__(self, object_id: str) -> bool:
        with self._lock:
            return object_id in self._objects

    def object_ids(self) -> list[str]:
        with self._lock:
            return sorted(self._objects)

    def move(self, object_id: str, new_parent: str | None) -> GameObject:
        """Re-parent an object; rejects chains that would revisit the object."""
        with self._lock:
            obj = self.get(object_id)
            if new_parent is not None:
                if new_parent not in self._objects:
                    raise UnknownParent(f"parent {new_parent!r} does not exist")
                cursor: str | None = new_parent
                while cursor is not None:
                    if cursor == object_id:
                        raise CycleDetected(
                            f"moving {object_id!r} under {new_parent!r} would form a cycle"
                        )
                    cursor = self._objects[cursor].parent
            if obj.parent is not None:
                self._children[obj.parent].discard(object_id)
            if new_parent is not None:
                self._children.setdefault(new_parent, set()).add(object_id)
            updated = replace(obj, parent=new_parent, version=obj.version + 1)
            self._objects[object_id] = updated
            return updated

    def set_attribute(self, object_id: str, key: str, value: Scalar) -> GameObject:
        with self._lock:
            obj = self.get(object_id)
            attrs = dict(obj.attributes)
            attrs[key] = value
            updated = replace(obj, attributes=attrs, version=obj.version + 1)
            self._objects[object_id] = updated
            return updated

    def resolve_attribute(self, object_id: str, key: str) -> Scalar | None:
        """Value of ``key`` from the nearest ancestor (self first) defining it."""
        with self._lock:
            cursor: str | None = self.get(object_id).id
            while cursor is not None:
                obj = self._objects[cursor]
                if key in obj.attributes:
                    return obj.attributes[key]
                cursor = obj.parent
            return None

    def ancestors(self, object_id: str) -> list[str]:
        """Parent chain from the object's parent up to its root."""
        with self._lock:
            chain = []
            cursor = self.get(object_id).parent
            while cursor is not None:
                chain.append(cursor)
                cursor = self._objects[cursor].parent
            return chain

    def assert_acyclic(self) -> None:
        """Full-walk acyclicity check over the parent relation."""
        with self._lock:
            for start in self._objects:
                seen = {start}
                cursor = self._objects[start].parent
                while cursor is not None:
                    if cursor in seen:
                        raise CycleDetected(f"cycle through {cursor!r}")
                    seen.add(cursor)
                    cursor = self._objects[cursor].parent

    # -- groups --------------------------------------------------------------

    def is_group(self, object_id: str) -> bool:
        """True for the group ancestor and any of its descendants."""
        with self._lock:
            if object_id not in self._objects:
                return False
            cursor: str | None = object_id
            while cursor is not None:
                if cursor == GROUP_ANCESTOR_ID:
                    return True
                cursor = self._objects[cursor].parent
            return False

    def _require_group(self, group: str) -> GameObject:
        obj = self.get(group)
        if not self.is_group(group):
            raise NotAGroup(f"{group!r} is not under {GROUP_ANCESTOR_ID!r}")
        return obj

    def members(self, group: str) -> set[str]:
        """Current member set; membership is per-group, never inherited."""
        with self._lock:
            return set(self._require_group(group).members)

    def add_member(self, group: str, member: str) -> GameObject:
        with self._lock:
            obj = self._require_group(group)
            if member not in self._objects:
                raise UnknownObject(f"unknown member {member!r}")
            if member in obj.members:
                return obj  # idempotent, no version bump
            updated = replace(
                obj, members=obj.members | {member}, version=obj.version + 1
            )
            self._objects[group] = updated
            return updated

    def remove_member(self, group: str, member: str) -> GameObject:
        with self._lock:
            obj = self._require_group(group)
            if member not in obj.members:
                return obj
            updated = replace(
                obj, members=obj.members - {member}, version=obj.version + 1
            )
            self._objects[group] = updated
            return updated

    def groups_of(self, member: str) -> list[str]:
        """Ids of groups whose member set currently includes ``member``."""
        with self._lock:
            return sorted(
                g.id for g in self._objects.values() if member in g.members
            )

    # -- triad links -----------------------------------------------------------

    def link_observation(self, rec: ObservationRecord) -> ObservationHandle:
        """Append one WHEN+WHERE link; the log is never overwritten.

        Updating an object's WHERE/WHEN is a relation mutation, so the
        object's version is bumped.
        """
        with self._lock:
            if rec.object not in self._objects:
                raise UnknownObject(f"unknown object {rec.object!r}")
            index = self._log.append(rec)  # raises StaleSequence on replay
            cur = self._current.get(rec.object)
            if cur is None or _current_order(rec) > _current_order(cur):
                self._current[rec.object] = rec
            obj = self._objects[rec.object]
            self._objects[rec.object] = replace(obj, version=obj.version + 1)
            return ObservationHandle(rec.object, rec.device, rec.seq, index)

    def bind_zone(self, object_id: str, zone_id: str) -> GameObject:
        """Set an object's WHERE to a zone (group objects' quest stage)."""
        with self._lock:
            obj = self.get(object_id)
            if self._zone_bindings.get(object_id) == zone_id:
                return obj
            self._zone_bindings[object_id] = zone_id
            updated = replace(obj, version=obj.version + 1)
            self._objects[object_id] = updated
            return updated

    def zone_binding(self, object_id: str) -> str | None:
        with self._lock:
            self.get(object_id)
            return self._zone_bindings.get(object_id)

    def locate(self, object_id: str) -> Location | None:
        """Latest observed point, else the object's zone binding, else None."""
        with self._lock:
            self.get(object_id)
            rec = self._current.get(object_id)
            if rec is not None:
                return rec.point
            bound = self._zone_bindings.get(object_id)
            if bound is not None:
                return ZoneRef(bound)
            return None

    def current_record(self, object_id: str) -> ObservationRecord | None:
        with self._lock:
            self.get(object_id)
            return self._current.get(object_id)

    def occupants(self, zone: Zone) -> set[str]:
        """Objects whose current position is contained in the zone.

        Objects whose WHERE is a zone binding (groups) have no point and are
        never occupants.
        """
        with self._lock:
            return {
                object_id
                for object_id, rec in self._current.items()
                if contains(zone, rec.point)
            }

    @property
    def log(self) -> SnapshotLog:
        return self._log

    def observations(self, object_id: str | None = None) -> list[ObservationRecord]:
        with self._lock:
            if object_id is None:
                return list(self._log)
            return self._log.for_object(object_id)

    def slice(self, object_id: str, window: Interval) -> list[ObservationRecord]:
        with self._lock:
            return self._log.slice(object_id, window)


def _current_order(rec: ObservationRecord) -> tuple[Millis, str, int]:
    return (rec.virtual_timestamp, rec.device, rec.seq)


# ---------------------------------------------------------------------------
# Config and persistence
# ---------------------------------------------------------------------------

def load_taxonomy(source: str | Path | dict) -> TriadStore:
    """Build a store from a ``{"objects": [...]}`` config document.

    Objects may appear in any order; parents are resolved before children.
    Member sets are applied after every object exists.
    """
    if isinstance(source, (str, Path)):
        doc = json.loads(Path(source).read_text(encoding="utf-8"))
    else:
        doc = source
    entries = doc.get("objects", [])
    store = TriadStore()
    pending = {e["id"]: e for e in entries}
    if len(pending) != len(entries):
        raise DuplicateId("duplicate object id in taxonomy config")
    while pending:
        progressed = False
        for object_id in list(pending):
            entry = pending[object_id]
            parent = entry.get("parent")
            if parent is None or parent in store:
                store.create_object(object_id, parent, entry.get("attributes") or {})
                del pending[object_id]
                progressed = True
        if not progressed:
            raise UnknownParent(
                f"unresolvable parents in taxonomy config: {sorted(pending)}"
            )
    for entry in entries:
        for member in entry.get("members") or []:
            store.add_member(entry["id"], member)
    return store


def taxonomy_to_dict(store: TriadStore) -> dict:
    objects = []
    for object_id in store.object_ids():
        obj = store.get(object_id)
        objects.append(
            {
                "id": obj.id,
                "parent": obj.parent,
                "attributes": dict(obj.attributes),
                "members": sorted(obj.members),
            }
        )
    return {"objects": objects}


def save_observation_log(records: Iterable[ObservationRecord], path: str | Path) -> int:
    """Write records as JSON-lines; returns the number of lines written."""
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json_dict(), sort_keys=True) + "\n")
            count += 1
    return count


def load_observation_log(path: str | Path) -> list[ObservationRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(ObservationRecord.from_json_dict(json.loads(line)))
    return records


def store_from_observations(
    records: Iterable[ObservationRecord],
    taxonomy: TriadStore | None = None,
    auto_register: bool = True,
) -> TriadStore:
    """Replay persisted observations into a store for offline querying.

    Without a taxonomy, objects named in the log are registered under a
    fresh root so the triad links can be re-established.
    """
    store = taxonomy if taxonomy is not None else TriadStore()
    if taxonomy is None:
        store.create_object("root")
    # Replay grouped by (device, object) in seq order so the per-device
    # monotone-sequence guard cannot trip on reload.
    for rec in sorted(records, key=lambda r: (r.device, r.object, r.seq)):
        if rec.object not in store:
            if not auto_register:
                raise UnknownObject(f"observation for unknown object {rec.object!r}")
            store.create_object(rec.object, "root" if "root" in store else None)
        store.link_observation(rec)
    return store
