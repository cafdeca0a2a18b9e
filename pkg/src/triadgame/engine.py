"""Game engine server: primary object copies, sessions, and dissemination.

The engine is a single logical event loop: every inbound message funnels
through one lock, giving mutations a global total order. Clients hold
redundant copies refreshed by STATE/UPDATE messages; the wire format is
newline-delimited JSON (see README for the message reference).
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .chronos import Interval, Millis
from .errors import GameModelError, MalformedMessage, ProtocolError, UnknownObject
from .geo import Zone, contains, require_zone
from .quest import QuestGraph, QuestTracker
from .sensing import ClockModel, Handshake, MeasurementModel, estimate_offset, ingest
from .stquery import QueryEngine, TrackPoint, ZoneEvent, track_events
from .triad_store import TriadStore

MESSAGE_KINDS = (
    "HELLO",
    "TIME_SYNC_REQ",
    "TIME_SYNC_RESP",
    "SNAPSHOT",
    "SUBSCRIBE",
    "QUERY",
    "RESULT",
    "UPDATE",
    "STATE",
)


@dataclass
class SessionState:
    """Per-device connection state; one session per device."""

    device: str
    estimated_offset_ms: Millis | None = None  # device minus engine
    subscriptions: set[str] = field(default_factory=set)

    @property
    def synced(self) -> bool:
        return self.estimated_offset_ms is not None


@dataclass(frozen=True)
class UpdateMessage:
    object: str
    version: int
    payload: str  # canonical serialization of the object state


def canonical_state(store: TriadStore, object_id: str) -> str:
    """Deterministic byte-stable serialization of one object's state."""
    obj = store.get(object_id)
    rec = store.current_record(object_id)
    binding = store.zone_binding(object_id)
    if rec is not None:
        location = {
            "kind": "point",
            "lat": rec.point.lat,
            "lon": rec.point.lon,
            "layer": rec.point.layer,
            "virtual_ts_ms": rec.virtual_timestamp,
        }
    elif binding is not None:
        location = {"kind": "zone", "zone": binding}
    else:
        location = None
    doc = {
        "id": obj.id,
        "parent": obj.parent,
        "attributes": dict(obj.attributes),
        "members": sorted(obj.members),
        "version": obj.version,
        "location": location,
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


class GameEngine:
    """Holds primary copies; ingests snapshots; answers queries; fans out updates."""

    def __init__(
        self,
        store: TriadStore,
        zones: dict[str, Zone] | None = None,
        quest_graph: QuestGraph | None = None,
        clock: Callable[[], Millis] | None = None,
        send: Callable[[str, dict], None] | None = None,
        event_sink: Callable[[dict], None] | None = None,
        observation_path: str | None = None,
        measurement: MeasurementModel | None = None,
        clock_model: ClockModel | None = None,
    ) -> None:
        self._lock = threading.RLock()
        self.store = store
        self.zones = dict(zones or {})
        self.queries = QueryEngine(store, self.zones)
        self.tracker = QuestTracker(store, quest_graph) if quest_graph else None
        self.clock = clock or (lambda: 0)
        self._send = send or (lambda device, msg: None)
        self._event_sink = event_sink
        self._observation_path = observation_path
        # Harness defaults for building device models; the engine itself
        # never perturbs data, devices do.
        self.measurement_default = measurement or MeasurementModel()
        self.clock_model_default = clock_model or ClockModel()
        self.sessions: dict[str, SessionState] = {}
        self.subscribers: dict[str, set[str]] = {}
        self.zone_events: list[ZoneEvent] = []
        self._last_fix: dict[str, TrackPoint] = {}

    # -- wiring ---------------------------------------------------------------

    def set_sender(self, send: Callable[[str, dict], None]) -> None:
        self._send = send

    def drop_device(self, device: str) -> None:
        """Forget a disconnected device's session and subscriptions."""
        with self._lock:
            self.sessions.pop(device, None)
            for subs in self.subscribers.values():
                subs.discard(device)

    def init_quest_groups(self, at: Millis = 0) -> None:
        """Start quest progress for every group object that has members."""
        if self.tracker is None:
            return
        with self._lock:
            for object_id in self.store.object_ids():
                if (
                    object_id != "generic_admin_group"
                    and self.store.is_group(object_id)
                    and self.store.members(object_id)
                ):
                    self.tracker.init_group(object_id, at)

    # -- message handling -------------------------------------------------------

    def handle_message(self, device: str, msg: dict) -> list[dict]:
        """Process one inbound message; returns the responses for the sender.

        Updates for subscribers are pushed through the transport sender as a
        side effect. Domain errors never escape: they become error RESULTs.
        """
        with self._lock:
            try:
                return self._dispatch(device, msg)
            except GameModelError as exc:
                return [_error_result(msg, exc)]

    def _dispatch(self, device: str, msg: dict) -> list[dict]:
        if not isinstance(msg, dict) or "type" not in msg:
            raise MalformedMessage("message must be an object with a 'type' field")
        kind = msg["type"]
        if kind == "HELLO":
            return self._on_hello(device, msg)
        if kind not in ("TIME_SYNC_REQ", "SNAPSHOT", "SUBSCRIBE", "QUERY"):
            raise MalformedMessage(f"unsupported message type {kind!r}")
        session = self.sessions.get(device)
        if session is None:
            raise ProtocolError(f"{kind} before HELLO")
        if kind == "TIME_SYNC_REQ":
            return self._on_time_sync(session, msg)
        if not session.synced:
            raise ProtocolError(f"{kind} before TIME_SYNC completed")
        if kind == "SNAPSHOT":
            return self._on_snapshot(session, msg)
        if kind == "SUBSCRIBE":
            return self._on_subscribe(session, msg)
        return self._on_query(session, msg)

    def _on_hello(self, device: str, msg: dict) -> list[dict]:
        declared = msg.get("device", device)
        if declared != device:
            raise ProtocolError(f"device {declared!r} spoke on {device!r}'s connection")
        for subs in self.subscribers.values():
            subs.discard(device)
        self.sessions[device] = SessionState(device=device)
        return [self._state_message(self.store.object_ids())]

    def _on_time_sync(self, session: SessionState, msg: dict) -> list[dict]:
        if "handshake" in msg:
            h = msg["handshake"]
            try:
                handshake = Handshake(
                    client_send_device_ts=int(h["client_send_device_ts"]),
                    server_recv_ts=int(h["server_recv_ts"]),
                    server_send_ts=int(h["server_send_ts"]),
                    client_recv_device_ts=int(h["client_recv_device_ts"]),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise MalformedMessage(f"bad handshake: {exc}") from exc
            # estimate_offset yields engine-minus-device; sessions store the
            # ClockModel convention (device minus engine) used at ingest.
            session.estimated_offset_ms = -estimate_offset(handshake)
            return [
                {
                    "type": "TIME_SYNC_RESP",
                    "complete": True,
                    "offset_ms": session.estimated_offset_ms,
                }
            ]
        if "client_send_device_ts" not in msg:
            raise MalformedMessage("TIME_SYNC_REQ needs client_send_device_ts or handshake")
        now = self.clock()
        return [
            {
                "type": "TIME_SYNC_RESP",
                "client_send_device_ts": int(msg["client_send_device_ts"]),
                "server_recv_ts": now,
                "server_send_ts": self.clock(),
            }
        ]

    def _on_snapshot(self, session: SessionState, msg: dict) -> list[dict]:
        raw = dict(msg)
        raw.pop("type", None)
        raw.setdefault("device", session.device)
        if raw["device"] != session.device:
            raise ProtocolError("snapshot device does not match session")
        rec = ingest(self.store, raw, session.estimated_offset_ms)
        if self._observation_path:
            with open(self._observation_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(rec.to_json_dict(), sort_keys=True) + "\n")
        self._emit(
            {
                "kind": "observation",
                "object": rec.object,
                "device": rec.device,
                "seq": rec.seq,
                "lat": rec.point.lat,
                "lon": rec.point.lon,
                "virtual_ts_ms": rec.virtual_timestamp,
            }
        )
        changed = {rec.object}
        changed.update(self._detect_zone_events(rec.object))
        for object_id in sorted(changed):
            self._disseminate(object_id)
        return []

    def _detect_zone_events(self, object_id: str) -> set[str]:
        """Flip detection against every zone for the object's newest fix.

        Returns ids of additional objects (groups) mutated by quest advances.
        """
        rec = self.store.current_record(object_id)
        if rec is None:
            return set()
        new = TrackPoint(rec.point, rec.virtual_timestamp)
        prev = self._last_fix.get(object_id)
        if prev is not None and new.time <= prev.time:
            return set()  # stale or duplicate instant: no segment to examine
        self._last_fix[object_id] = new
        events: list[ZoneEvent] = []
        for zone_id in sorted(self.zones):
            zone = self.zones[zone_id]
            if prev is None:
                events.extend(track_events(object_id, [new], zone))
            else:
                was = contains(zone, prev.point)
                now = contains(zone, new.point)
                if was != now:
                    events.extend(
                        e
                        for e in track_events(object_id, [prev, new], zone)
                        if e.interpolated
                    )
        events.sort(key=lambda e: (e.time, e.zone, e.kind.value))
        touched: set[str] = set()
        for event in events:
            self.zone_events.append(event)
            self._emit(
                {
                    "kind": "zone_event",
                    "object": event.object,
                    "zone": event.zone,
                    "event": event.kind.value,
                    "t_ms": event.time,
                    "interpolated": event.interpolated,
                }
            )
            if self.tracker is not None:
                for group, stage in self.tracker.on_event(event):
                    touched.add(group)
                    self._emit(
                        {
                            "kind": "quest_advance",
                            "group": group,
                            "stage": stage,
                            "t_ms": event.time,
                        }
                    )
        return touched

    def _on_subscribe(self, session: SessionState, msg: dict) -> list[dict]:
        objects = msg.get("objects")
        if not isinstance(objects, list) or not objects:
            raise MalformedMessage("SUBSCRIBE needs a non-empty 'objects' list")
        for object_id in objects:
            if object_id not in self.store:
                raise UnknownObject(f"cannot subscribe to unknown object {object_id!r}")
        for object_id in objects:
            session.subscriptions.add(object_id)
            self.subscribers.setdefault(object_id, set()).add(session.device)
        return [self._state_message(sorted(objects))]

    def _on_query(self, session: SessionState, msg: dict) -> list[dict]:
        form = msg.get("form")
        params = msg.get("params") or {}
        try:
            result = self.evaluate_query(form, params)
        except KeyError as exc:
            return [_error_result(msg, MalformedMessage(f"query missing parameter {exc}"))]
        except GameModelError as exc:
            return [_error_result(msg, exc)]
        return [{"type": "RESULT", "id": msg.get("id"), "ok": True, "result": result}]

    def evaluate_query(self, form: str, params: dict) -> dict:
        """Shared query evaluation used by the wire protocol and the CLI."""
        q = self.queries
        if form == "where":
            window = Interval(int(params["from_ms"]), int(params["to_ms"]))
            trajectory = q.where_of(params["object"], window)
            return {
                "object": trajectory.object,
                "points": [
                    {
                        "lat": tp.point.lat,
                        "lon": tp.point.lon,
                        "layer": tp.point.layer,
                        "t_ms": tp.time,
                    }
                    for tp in trajectory.points
                ],
            }
        if form == "what":
            zone = require_zone(self.zones, params["zone"])
            window = Interval(int(params["from_ms"]), int(params["to_ms"]))
            return {"zone": zone.id, "objects": sorted(q.what_at(zone, window))}
        if form == "when":
            zone = require_zone(self.zones, params["zone"])
            events = q.when_of(params["object"], zone)
            return {
                "object": params["object"],
                "zone": zone.id,
                "events": [
                    {"kind": e.kind.value, "t_ms": e.time, "interpolated": e.interpolated}
                    for e in events
                ],
            }
        if form == "dist":
            target = params["b"]
            if target in self.store:
                b: str | Zone = target
            elif target in self.zones:
                b = self.zones[target]
            else:
                raise UnknownObject(f"{target!r} is neither an object nor a zone")
            meters = q.object_distance(params["a"], b, int(params["at_ms"]))
            return {
                "a": params["a"],
                "b": target,
                "at_ms": int(params["at_ms"]),
                "meters": meters,
            }
        raise MalformedMessage(f"unknown query form {form!r}")

    # -- dissemination ---------------------------------------------------------

    def _state_message(self, object_ids: Iterable[str]) -> dict:
        return {
            "type": "STATE",
            "objects": [
                {
                    "object": object_id,
                    "version": self.store.get(object_id).version,
                    "payload": canonical_state(self.store, object_id),
                }
                for object_id in object_ids
            ],
        }

    def build_update(self, object_id: str) -> UpdateMessage:
        return UpdateMessage(
            object=object_id,
            version=self.store.get(object_id).version,
            payload=canonical_state(self.store, object_id),
        )

    def _disseminate(self, object_id: str) -> None:
        self.disseminate(self.build_update(object_id))

    def disseminate(self, update: UpdateMessage) -> int:
        """Push one update to every subscriber; returns the delivery count."""
        targets = sorted(self.subscribers.get(update.object, ()))
        for device in targets:
            self._send(
                device,
                {
                    "type": "UPDATE",
                    "object": update.object,
                    "version": update.version,
                    "payload": update.payload,
                },
            )
        return len(targets)

    def _emit(self, event: dict) -> None:
        if self._event_sink is not None:
            self._event_sink(event)


def _error_result(msg: dict, exc: GameModelError) -> dict:
    return {
        "type": "RESULT",
        "id": msg.get("id") if isinstance(msg, dict) else None,
        "ok": False,
        "error": exc.code,
        "message": str(exc),
    }


def replica_check(engine: GameEngine, replicas: dict[str, str], subscribed: Iterable[str]) -> bool:
    """True iff every subscribed object's replica payload is byte-identical
    to the primary copy's canonical serialization."""
    for object_id in subscribed:
        if replicas.get(object_id) != canonical_state(engine.store, object_id):
            return False
    return True
