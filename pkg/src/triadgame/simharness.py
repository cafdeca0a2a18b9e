"""Deterministic end-to-end scenario runner.

Scripted players walk waypoint paths in physical truth; simulated devices
sample, perturb (measurement + clock models), and transmit snapshots over
the simulated network; the engine ingests, detects zone events, advances
quests, and disseminates updates to subscribed clients. Ground truth is kept
so tests can bound the whole pipeline against withheld reality.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .chronos import Millis
from .client import (
    GameClient,
    hello,
    snapshot,
    subscribe,
    time_sync_complete,
    time_sync_request,
)
from .engine import GameEngine, canonical_state, replica_check
from .errors import InvalidScenario
from .geo import GeoPoint, Zone, load_zones, zone_from_dict
from .quest import QuestGraph, load_quest_graph
from .sensing import ClockModel, MeasurementModel, measure_position, measure_time
from .transport import DropRule, SimNet
from .triad_store import load_taxonomy

# The HELLO/TIME_SYNC/SUBSCRIBE exchange runs this long before the first sample.
SYNC_LEAD_MS = 1000


@dataclass(frozen=True)
class PlayerScript:
    object: str
    device: str
    waypoints: tuple[tuple[GeoPoint, Millis], ...]

    def position_at(self, t: Millis) -> GeoPoint:
        """Physical truth: constant-speed linear motion between waypoints."""
        points = self.waypoints
        if t <= points[0][1]:
            return points[0][0]
        if t >= points[-1][1]:
            return points[-1][0]
        for (p0, t0), (p1, t1) in zip(points, points[1:]):
            if t0 <= t <= t1:
                f = (t - t0) / (t1 - t0)
                return GeoPoint(
                    p0.lat + (p1.lat - p0.lat) * f,
                    p0.lon + (p1.lon - p0.lon) * f,
                    p0.layer,
                )
        raise AssertionError("unreachable: waypoints cover the timeline")


@dataclass(frozen=True)
class Scenario:
    seed: int
    duration_ms: Millis
    sampling_interval_ms: Millis
    players: tuple[PlayerScript, ...]
    measurement: MeasurementModel
    clock_default: ClockModel
    clocks: dict[str, ClockModel]
    taxonomy: dict
    zones: dict[str, Zone]
    quest: QuestGraph | None
    network: dict
    fault: dict | None = None

    def clock_for(self, device: str) -> ClockModel:
        return self.clocks.get(device, self.clock_default)


def load_scenario(path: str | Path) -> Scenario:
    """Load and validate a scenario document (see README for the schema)."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidScenario(f"cannot read scenario: {exc}") from exc
    return scenario_from_dict(doc, base_dir=path.parent)


def scenario_from_dict(doc: dict, base_dir: Path | None = None) -> Scenario:
    base = base_dir or Path.cwd()

    def _resolve(name: str) -> Path:
        p = Path(doc[name])
        return p if p.is_absolute() else base / p

    try:
        players = []
        for entry in doc["players"]:
            waypoints = tuple(
                (GeoPoint(w["lat"], w["lon"], w.get("layer")), int(w["t_ms"]))
                for w in entry["waypoints"]
            )
            players.append(
                PlayerScript(object=entry["object"], device=entry["device"], waypoints=waypoints)
            )
        measurement = MeasurementModel(**(doc.get("measurement") or {}))
        clock_default = ClockModel(**(doc.get("clock_default") or {}))
        clocks = {
            device: ClockModel(**params) for device, params in (doc.get("clocks") or {}).items()
        }
        taxonomy = (
            json.loads(_resolve("taxonomy_file").read_text(encoding="utf-8"))
            if "taxonomy_file" in doc
            else doc.get("taxonomy") or {"objects": []}
        )
        if "zones_file" in doc:
            zones = load_zones(_resolve("zones_file"))
        else:
            zones = {z["id"]: zone_from_dict(z) for z in doc.get("zones", [])}
        quest = None
        if "quest_file" in doc:
            quest = load_quest_graph(_resolve("quest_file"))
        elif doc.get("quest"):
            quest = load_quest_graph(doc["quest"])
        scenario = Scenario(
            seed=int(doc.get("seed", 0)),
            duration_ms=int(doc["duration_ms"]),
            sampling_interval_ms=int(doc["sampling_interval_ms"]),
            players=tuple(players),
            measurement=measurement,
            clock_default=clock_default,
            clocks=clocks,
            taxonomy=taxonomy,
            zones=zones,
            quest=quest,
            network=doc.get("network") or {},
            fault=doc.get("fault"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidScenario(f"bad scenario document: {exc}") from exc
    _validate(scenario)
    return scenario


def _validate(s: Scenario) -> None:
    if s.sampling_interval_ms <= 0:
        raise InvalidScenario("sampling_interval_ms must be positive")
    if s.duration_ms < 0:
        raise InvalidScenario("duration_ms must be >= 0")
    if not s.players:
        raise InvalidScenario("scenario needs at least one player")
    devices = [p.device for p in s.players]
    if len(set(devices)) != len(devices):
        raise InvalidScenario("each player needs its own device")
    for p in s.players:
        times = [t for _, t in p.waypoints]
        if not p.waypoints:
            raise InvalidScenario(f"player {p.object!r} has no waypoints")
        if any(t1 >= t2 for t1, t2 in zip(times, times[1:])):
            raise InvalidScenario(f"player {p.object!r} waypoint times must strictly increase")


@dataclass
class ScenarioResult:
    scenario: Scenario
    engine: GameEngine
    net: SimNet
    clients: dict[str, GameClient]
    events: list[dict]
    truth: list[dict]
    replica_ok: dict[str, bool] = field(default_factory=dict)

    def event_log_bytes(self) -> bytes:
        return b"".join(
            json.dumps(e, sort_keys=True).encode("utf-8") + b"\n" for e in self.events
        )

    def session_offsets(self) -> dict[str, Millis]:
        return {
            device: session.estimated_offset_ms
            for device, session in sorted(self.engine.sessions.items())
        }

    def state_dict(self) -> dict:
        groups = {}
        if self.engine.tracker is not None:
            for group in self.engine.tracker.groups():
                progress = self.engine.tracker.progress(group)
                groups[group] = {
                    "current": progress.current,
                    "history": [[zone, t] for zone, t in progress.history],
                }
        return {
            "objects": {
                object_id: json.loads(canonical_state(self.engine.store, object_id))
                for object_id in self.engine.store.object_ids()
            },
            "groups": groups,
            "sessions": {k: v for k, v in self.session_offsets().items()},
            "replica_ok": dict(sorted(self.replica_ok.items())),
        }


def run_scenario(scenario: Scenario) -> ScenarioResult:
    """Execute one scenario to quiescence; fully deterministic per seed."""
    store = load_taxonomy(scenario.taxonomy)
    for script in scenario.players:
        if script.object not in store:
            raise InvalidScenario(f"player object {script.object!r} missing from taxonomy")
    events: list[dict] = []
    engine = GameEngine(
        store,
        zones=scenario.zones,
        quest_graph=scenario.quest,
        event_sink=events.append,
    )
    drop_rule = None
    if scenario.fault:
        drop_rule = DropRule(
            to_device=scenario.fault["drop_update_to"],
            msg_type=scenario.fault.get("msg_type", "UPDATE"),
            nth=int(scenario.fault.get("nth", 1)),
        )
    net = SimNet(
        engine,
        c2s_delay_ms=int(scenario.network.get("c2s_delay_ms", 20)),
        s2c_delay_ms=int(scenario.network.get("s2c_delay_ms", 20)),
        jitter_ms=int(scenario.network.get("jitter_ms", 0)),
        seed=scenario.seed,
        drop_rule=drop_rule,
    )
    engine.init_quest_groups(at=0)

    truth: list[dict] = []
    all_objects = sorted({p.object for p in scenario.players})
    first_sample = min(w[1] for p in scenario.players for w in p.waypoints[:1])
    sync_start = min(0, first_sample) - SYNC_LEAD_MS

    for script in sorted(scenario.players, key=lambda p: p.device):
        _wire_device(scenario, script, net, all_objects, truth, sync_start)

    net.run()

    clients = dict(net.clients)
    result = ScenarioResult(
        scenario=scenario,
        engine=engine,
        net=net,
        clients=clients,
        events=events,
        truth=truth,
    )
    for device, client in sorted(clients.items()):
        result.replica_ok[device] = replica_check(engine, client.replicas, client.subscriptions)
    return result


def _wire_device(
    scenario: Scenario,
    script: PlayerScript,
    net: SimNet,
    all_objects: list[str],
    truth: list[dict],
    sync_start: Millis,
) -> None:
    clock_model = scenario.clock_for(script.device)
    pos_rng = random.Random(f"{scenario.seed}/{script.device}/pos")
    time_rng = random.Random(f"{scenario.seed}/{script.device}/time")
    client = GameClient(device=script.device)
    client.subscriptions.update(all_objects)
    seqs = {"next": 0}
    sync = {"sent_at": None}

    def device_clock(now: Millis) -> Millis:
        # Handshake clock reads carry the device offset but not the
        # per-reading jitter, which models snapshot timestamping noise.
        return now + clock_model.offset_ms

    def hook(msg: dict, net: SimNet) -> None:
        kind = msg.get("type")
        if kind == "STATE" and sync["sent_at"] is None:
            sync["sent_at"] = device_clock(net.now)
            net.client_send(script.device, time_sync_request(sync["sent_at"]))
        elif kind == "TIME_SYNC_RESP" and not msg.get("complete"):
            net.client_send(
                script.device,
                time_sync_complete(
                    client_send_device_ts=msg["client_send_device_ts"],
                    server_recv_ts=msg["server_recv_ts"],
                    server_send_ts=msg["server_send_ts"],
                    client_recv_device_ts=device_clock(net.now),
                ),
            )
        elif kind == "TIME_SYNC_RESP" and msg.get("complete"):
            net.client_send(script.device, subscribe(all_objects))

    net.register_client(client, hook)
    net.client_send(script.device, hello(script.device), at=sync_start)

    def take_sample(t: Millis) -> None:
        true_point = script.position_at(t)
        measured = measure_position(true_point, scenario.measurement, pos_rng)
        device_ts = measure_time(t, clock_model, time_rng)
        seq = seqs["next"]
        seqs["next"] += 1
        truth.append(
            {
                "object": script.object,
                "device": script.device,
                "t_ms": t,
                "lat": true_point.lat,
                "lon": true_point.lon,
                "measured_lat": measured.lat,
                "measured_lon": measured.lon,
                "device_ts_ms": device_ts,
                "seq": seq,
            }
        )
        net.client_send(
            script.device,
            snapshot(script.object, measured.lat, measured.lon, device_ts, seq, measured.layer),
        )

    t = 0
    while t <= scenario.duration_ms:
        net.call_at(t, lambda t=t: take_sample(t))
        t += scenario.sampling_interval_ms


def write_outputs(result: ScenarioResult, out_dir: str | Path) -> dict[str, Path]:
    """Write the delimited outputs (observations, events, truth, state)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}

    obs_path = out / "observations.jsonl"
    with open(obs_path, "w", encoding="utf-8") as fh:
        for rec in result.engine.store.observations():
            fh.write(json.dumps(rec.to_json_dict(), sort_keys=True) + "\n")
    paths["observations"] = obs_path

    events_path = out / "events.jsonl"
    events_path.write_bytes(result.event_log_bytes())
    paths["events"] = events_path

    truth_path = out / "truth.jsonl"
    with open(truth_path, "w", encoding="utf-8") as fh:
        for entry in result.truth:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
    paths["truth"] = truth_path

    state_path = out / "state.json"
    state_path.write_text(
        json.dumps(result.state_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    paths["state"] = state_path
    return paths
