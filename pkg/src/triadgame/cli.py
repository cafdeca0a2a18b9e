"""Operator command line: run the engine or a scenario, query stored logs,
and export trails.

Every query subcommand evaluates through the same library entry points the
wire protocol uses and renders the result in the documented JSON shape; the
CLI adds no query logic of its own.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

from .chronos import Millis
from .engine import GameEngine
from .errors import GameModelError, UnknownGroup
from .geo import load_zones
from .quest import load_quest_graph
from .report import render_trails, write_geojson
from .sensing import ClockModel, MeasurementModel
from .simharness import load_scenario, run_scenario, write_outputs
from .stquery import Trajectory
from .transport import TcpEngineServer
from .triad_store import load_observation_log, load_taxonomy, store_from_observations


def parse_timestamp(text: str) -> Millis:
    """Accept integer epoch milliseconds or an RFC 3339 datetime."""
    try:
        return int(text)
    except ValueError:
        pass
    normalized = text.replace("Z", "+00:00").replace("z", "+00:00")
    try:
        dt = datetime.fromisoformat(normalized)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(
            f"{text!r} is neither epoch-milliseconds nor RFC 3339"
        ) from exc
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp() * 1000)


def _emit(payload: dict, fmt: str) -> None:
    if fmt == "table":
        print(_as_table(payload))
    else:
        print(json.dumps(payload, sort_keys=True))


def _as_table(payload: dict) -> str:
    rows: list[dict] | None = None
    for value in payload.values():
        if isinstance(value, list) and value and isinstance(value[0], dict):
            rows = value
            break
    scalars = {k: v for k, v in payload.items() if not isinstance(v, (list, dict))}
    lines = ["  ".join(f"{k}={v}" for k, v in sorted(scalars.items()))] if scalars else []
    if rows:
        cols = sorted({k for row in rows for k in row})
        widths = {
            c: max(len(c), max(len(str(row.get(c, ""))) for row in rows)) for c in cols
        }
        lines.append("  ".join(c.ljust(widths[c]) for c in cols))
        lines.append("  ".join("-" * widths[c] for c in cols))
        for row in rows:
            lines.append("  ".join(str(row.get(c, "")).ljust(widths[c]) for c in cols))
    elif not scalars:
        lines.append(json.dumps(payload, sort_keys=True))
    for key, value in payload.items():
        if isinstance(value, list) and (not value or not isinstance(value[0], dict)):
            lines.append(f"{key}: {', '.join(str(v) for v in value)}")
    return "\n".join(lines)


def _query_engine_from_args(args) -> GameEngine:
    records = load_observation_log(args.log)
    taxonomy = load_taxonomy(args.taxonomy) if args.taxonomy else None
    store = store_from_observations(records, taxonomy)
    zones = load_zones(args.zones) if args.zones else {}
    return GameEngine(store, zones=zones)


def _add_log_options(parser: argparse.ArgumentParser, zones_required: bool) -> None:
    parser.add_argument("--log", required=True, help="observation JSONL file")
    parser.add_argument("--zones", required=zones_required, help="zone JSON file")
    parser.add_argument("--taxonomy", help="taxonomy JSON file (optional)")
    parser.add_argument("--format", choices=("json", "table"), default="json")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="triadgame")
    sub = parser.add_subparsers(dest="command", required=True)

    p_engine = sub.add_parser("engine", help="run the game engine server")
    engine_sub = p_engine.add_subparsers(dest="engine_command", required=True)
    p_serve = engine_sub.add_parser("serve", help="serve the engine over TCP")
    p_serve.add_argument("--config", required=True)

    p_sim = sub.add_parser("sim", help="run simulated scenarios")
    sim_sub = p_sim.add_subparsers(dest="sim_command", required=True)
    p_run = sim_sub.add_parser("run", help="run a scenario end to end")
    p_run.add_argument("--scenario", required=True)
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--no-plot", action="store_true", help="skip the trail figure")

    p_query = sub.add_parser("query", help="evaluate a triad query against stored logs")
    query_sub = p_query.add_subparsers(dest="query_command", required=True)

    p_where = query_sub.add_parser("where", help="WHAT+WHEN -> WHERE (trajectory)")
    p_where.add_argument("--object", required=True)
    p_where.add_argument("--from", dest="from_ts", required=True, type=parse_timestamp)
    p_where.add_argument("--to", dest="to_ts", required=True, type=parse_timestamp)
    _add_log_options(p_where, zones_required=False)

    p_what = query_sub.add_parser("what", help="WHERE+WHEN -> WHAT (objects in zone)")
    p_what.add_argument("--zone", required=True)
    p_what.add_argument("--from", dest="from_ts", required=True, type=parse_timestamp)
    p_what.add_argument("--to", dest="to_ts", required=True, type=parse_timestamp)
    _add_log_options(p_what, zones_required=True)

    p_when = query_sub.add_parser("when", help="WHAT+WHERE -> WHEN (zone events)")
    p_when.add_argument("--object", required=True)
    p_when.add_argument("--zone", required=True)
    _add_log_options(p_when, zones_required=True)

    p_dist = query_sub.add_parser("dist", help="distance between object and object/zone")
    p_dist.add_argument("--a", required=True)
    p_dist.add_argument("--b", required=True, help="object id or zone id")
    p_dist.add_argument("--at", dest="at_ts", required=True, type=parse_timestamp)
    _add_log_options(p_dist, zones_required=False)

    p_export = sub.add_parser("export", help="export stored trails")
    export_sub = p_export.add_subparsers(dest="export_command", required=True)
    p_geojson = export_sub.add_parser("geojson", help="trail as a GeoJSON FeatureCollection")
    p_geojson.add_argument("--object", required=True)
    p_geojson.add_argument("--from", dest="from_ts", type=parse_timestamp)
    p_geojson.add_argument("--to", dest="to_ts", type=parse_timestamp)
    p_geojson.add_argument("--log", required=True)
    p_geojson.add_argument("--taxonomy")
    p_geojson.add_argument("--zones")
    p_geojson.add_argument("--out", required=True)
    p_geojson.add_argument("--format", choices=("json", "table"), default="json")

    p_quest = sub.add_parser("quest", help="quest progression")
    quest_sub = p_quest.add_subparsers(dest="quest_command", required=True)
    p_status = quest_sub.add_parser("status", help="a group's current stage")
    p_status.add_argument("--group", required=True)
    p_status.add_argument("--state", required=True, help="state.json from a sim run")
    p_status.add_argument("--format", choices=("json", "table"), default="json")

    return parser


def cmd_engine_serve(args) -> int:
    config = json.loads(Path(args.config).read_text(encoding="utf-8"))
    base = Path(args.config).resolve().parent

    def _resolve(name: str) -> Path | None:
        value = config.get(name)
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else base / p

    store = load_taxonomy(_resolve("taxonomy_file")) if config.get("taxonomy_file") else None
    if store is None:
        store = load_taxonomy({"objects": [{"id": "root"}]})
    zones = load_zones(_resolve("zones_file")) if config.get("zones_file") else {}
    graph = load_quest_graph(_resolve("quest_file")) if config.get("quest_file") else None
    storage = config.get("storage") or {}
    obs_path = storage.get("observations")
    if obs_path is not None and not Path(obs_path).is_absolute():
        obs_path = str(base / obs_path)
    engine = GameEngine(
        store,
        zones=zones,
        quest_graph=graph,
        observation_path=obs_path,
        measurement=MeasurementModel(**(config.get("measurement") or {})),
        clock_model=ClockModel(**(config.get("clock") or {})),
    )
    engine.init_quest_groups()
    listen = config.get("listen") or {}
    server = TcpEngineServer(
        engine, host=listen.get("host", "127.0.0.1"), port=int(listen.get("port", 7777))
    )
    host, port = server.address
    print(json.dumps({"serving": f"{host}:{port}"}), flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
    return 0


def cmd_sim_run(args) -> int:
    scenario = load_scenario(args.scenario)
    result = run_scenario(scenario)
    paths = write_outputs(result, args.out)
    summary = {
        "out": str(Path(args.out)),
        "files": {k: str(v) for k, v in sorted(paths.items())},
        "events": len(result.events),
        "observations": len(result.engine.store.observations()),
        "replica_ok": result.replica_ok,
        "groups": result.state_dict()["groups"],
    }
    if not args.no_plot:
        trajectories = _full_trajectories(result)
        figure = render_trails(
            trajectories,
            scenario.zones,
            Path(args.out) / "trails.png",
            truth=result.truth,
            title=f"scenario seed={scenario.seed}",
        )
        summary["files"]["figure"] = str(figure)
    print(json.dumps(summary, sort_keys=True))
    return 0


def _full_trajectories(result) -> list[Trajectory]:
    from .chronos import Interval
    from .errors import EmptyResult

    trajectories = []
    for script in result.scenario.players:
        try:
            trajectories.append(
                result.engine.queries.where_of(
                    script.object, Interval(-(2**62), 2**62)
                )
            )
        except EmptyResult:
            continue
    return trajectories


def cmd_query(args) -> int:
    engine = _query_engine_from_args(args)
    if args.query_command == "where":
        result = engine.evaluate_query(
            "where", {"object": args.object, "from_ms": args.from_ts, "to_ms": args.to_ts}
        )
    elif args.query_command == "what":
        result = engine.evaluate_query(
            "what", {"zone": args.zone, "from_ms": args.from_ts, "to_ms": args.to_ts}
        )
    elif args.query_command == "when":
        result = engine.evaluate_query("when", {"object": args.object, "zone": args.zone})
    else:
        result = engine.evaluate_query(
            "dist", {"a": args.a, "b": args.b, "at_ms": args.at_ts}
        )
    _emit(result, args.format)
    return 0


def cmd_export_geojson(args) -> int:
    records = load_observation_log(args.log)
    taxonomy = load_taxonomy(args.taxonomy) if args.taxonomy else None
    store = store_from_observations(records, taxonomy)
    from .chronos import Interval
    from .stquery import QueryEngine

    window = Interval(
        args.from_ts if args.from_ts is not None else -(2**62),
        args.to_ts if args.to_ts is not None else 2**62,
    )
    trajectory = QueryEngine(store).where_of(args.object, window)
    out = write_geojson(trajectory, args.out)
    _emit({"object": args.object, "points": len(trajectory.points), "out": str(out)}, args.format)
    return 0


def cmd_quest_status(args) -> int:
    state = json.loads(Path(args.state).read_text(encoding="utf-8"))
    groups = state.get("groups") or {}
    if args.group not in groups:
        raise UnknownGroup(f"no quest progress recorded for group {args.group!r}")
    entry = groups[args.group]
    _emit(
        {"group": args.group, "current": entry["current"], "history": entry["history"]},
        args.format,
    )
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "engine":
            return cmd_engine_serve(args)
        if args.command == "sim":
            return cmd_sim_run(args)
        if args.command == "query":
            return cmd_query(args)
        if args.command == "export":
            return cmd_export_geojson(args)
        if args.command == "quest":
            return cmd_quest_status(args)
        parser.error(f"unknown command {args.command!r}")
    except GameModelError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}), file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError) as exc:
        print(json.dumps({"error": "io_error", "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
