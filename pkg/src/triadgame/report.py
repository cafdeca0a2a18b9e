"""Trail exports: GeoJSON feature collections and rendered trail maps.

The GeoJSON export is the machine-readable stand-in for a map display; the
matplotlib rendering draws each player's movement trace as a line of dots
over the zone outlines, one figure per scenario run.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .geo import Circle, Zone
from .stquery import Trajectory


def trajectory_to_geojson(trajectory: Trajectory) -> dict:
    """FeatureCollection: one Point per fix (lon,lat order; properties carry
    the object id and timestamp) plus one LineString for trails of >= 2 fixes."""
    features = [
        {
            "type": "Feature",
            "geometry": {
                "type": "Point",
                "coordinates": [tp.point.lon, tp.point.lat],
            },
            "properties": {"object": trajectory.object, "timestamp": tp.time},
        }
        for tp in trajectory.points
    ]
    if len(trajectory.points) >= 2:
        features.append(
            {
                "type": "Feature",
                "geometry": {
                    "type": "LineString",
                    "coordinates": [[tp.point.lon, tp.point.lat] for tp in trajectory.points],
                },
                "properties": {
                    "object": trajectory.object,
                    "start_ms": trajectory.points[0].time,
                    "end_ms": trajectory.points[-1].time,
                },
            }
        )
    return {"type": "FeatureCollection", "features": features}


def write_geojson(trajectory: Trajectory, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(
        json.dumps(trajectory_to_geojson(trajectory), indent=2) + "\n", encoding="utf-8"
    )
    return path


# ---------------------------------------------------------------------------
# Figures
# ---------------------------------------------------------------------------

def _zone_outline(zone: Zone) -> tuple[list[float], list[float]]:
    shape = zone.shape
    if isinstance(shape, Circle):
        # Parametric boundary in degrees; good enough for a city-scale plot.
        from .geo import M_PER_DEG

        lat0, lon0 = shape.center.lat, shape.center.lon
        dlat = shape.radius_m / M_PER_DEG
        dlon = shape.radius_m / (M_PER_DEG * math.cos(math.radians(lat0)))
        theta = [2.0 * math.pi * k / 128 for k in range(129)]
        return (
            [lon0 + dlon * math.sin(t) for t in theta],
            [lat0 + dlat * math.cos(t) for t in theta],
        )
    ring = list(shape.boundary) + [shape.boundary[0]]
    return [p.lon for p in ring], [p.lat for p in ring]


def render_trails(
    trajectories: list[Trajectory],
    zones: dict[str, Zone],
    path: str | Path,
    truth: list[dict] | None = None,
    title: str = "movement trails",
) -> Path:
    """Draw trails and zones to an image file; returns the written path."""
    fig, ax = plt.subplots(figsize=(8, 8))
    for zone_id in sorted(zones):
        xs, ys = _zone_outline(zones[zone_id])
        ax.plot(xs, ys, linewidth=1.2, alpha=0.8)
        ax.annotate(zone_id, (xs[0], ys[0]), fontsize=8, alpha=0.8)
    if truth:
        by_object: dict[str, list[dict]] = {}
        for entry in truth:
            by_object.setdefault(entry["object"], []).append(entry)
        for object_id in sorted(by_object):
            entries = sorted(by_object[object_id], key=lambda e: e["t_ms"])
            ax.plot(
                [e["lon"] for e in entries],
                [e["lat"] for e in entries],
                linestyle="--",
                linewidth=0.8,
                alpha=0.5,
            )
    for trajectory in trajectories:
        lons = [tp.point.lon for tp in trajectory.points]
        lats = [tp.point.lat for tp in trajectory.points]
        ax.plot(lons, lats, marker="o", markersize=3, linewidth=1.0, label=trajectory.object)
    mid_lat = _mid_latitude(trajectories, zones)
    ax.set_aspect(1.0 / max(math.cos(math.radians(mid_lat)), 1e-6))
    ax.set_xlabel("longitude")
    ax.set_ylabel("latitude")
    ax.set_title(title)
    if trajectories:
        ax.legend(loc="best", fontsize=8)
    ax.grid(True, alpha=0.3)
    path = Path(path)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def _mid_latitude(trajectories: list[Trajectory], zones: dict[str, Zone]) -> float:
    lats = [tp.point.lat for t in trajectories for tp in t.points]
    lats.extend(z.reference.lat for z in zones.values())
    return sum(lats) / len(lats) if lats else 0.0
