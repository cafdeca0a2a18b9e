"""Game client: holds redundant copies of objects disseminated by the engine."""

from __future__ import annotations

from dataclasses import dataclass, field

from .chronos import Millis


@dataclass
class GameClient:
    """Redundant-copy holder driven by STATE and UPDATE messages.

    ``version_gaps`` records any non-contiguous version jump observed per
    object, which is how a dropped update shows up on the client side.
    """

    device: str
    replicas: dict[str, str] = field(default_factory=dict)
    versions: dict[str, int] = field(default_factory=dict)
    subscriptions: set[str] = field(default_factory=set)
    version_gaps: list[tuple[str, int, int]] = field(default_factory=list)
    results: list[dict] = field(default_factory=list)
    sync_responses: list[dict] = field(default_factory=list)

    def on_message(self, msg: dict) -> None:
        kind = msg.get("type")
        if kind == "STATE":
            for entry in msg.get("objects", []):
                self.replicas[entry["object"]] = entry["payload"]
                self.versions[entry["object"]] = entry["version"]
        elif kind == "UPDATE":
            object_id = msg["object"]
            version = msg["version"]
            last = self.versions.get(object_id)
            if last is not None and version > last + 1:
                self.version_gaps.append((object_id, last, version))
            if last is None or version > last:
                self.replicas[object_id] = msg["payload"]
                self.versions[object_id] = version
        elif kind == "RESULT":
            self.results.append(msg)
        elif kind == "TIME_SYNC_RESP":
            self.sync_responses.append(msg)

    def observed_version(self, object_id: str) -> int | None:
        return self.versions.get(object_id)


def hello(device: str) -> dict:
    return {"type": "HELLO", "device": device}


def subscribe(objects: list[str]) -> dict:
    return {"type": "SUBSCRIBE", "objects": list(objects)}


def snapshot(
    object_id: str,
    lat: float,
    lon: float,
    device_ts_ms: Millis,
    seq: int,
    layer: int | None = None,
) -> dict:
    msg = {
        "type": "SNAPSHOT",
        "object": object_id,
        "lat": lat,
        "lon": lon,
        "device_ts_ms": device_ts_ms,
        "seq": seq,
    }
    if layer is not None:
        msg["layer"] = layer
    return msg


def time_sync_request(client_send_device_ts: Millis) -> dict:
    return {"type": "TIME_SYNC_REQ", "client_send_device_ts": client_send_device_ts}


def time_sync_complete(
    client_send_device_ts: Millis,
    server_recv_ts: Millis,
    server_send_ts: Millis,
    client_recv_device_ts: Millis,
) -> dict:
    return {
        "type": "TIME_SYNC_REQ",
        "handshake": {
            "client_send_device_ts": client_send_device_ts,
            "server_recv_ts": server_recv_ts,
            "server_send_ts": server_send_ts,
            "client_recv_device_ts": client_recv_device_ts,
        },
    }


def query(form: str, params: dict, query_id: str = "q") -> dict:
    return {"type": "QUERY", "id": query_id, "form": form, "params": params}
