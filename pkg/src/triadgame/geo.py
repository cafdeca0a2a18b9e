"""Location-based representation (the WHERE).

Georeferenced points and zones on a spherical Earth, the metric relation
(great-circle distance) and a coarse topological classification of zone
pairs. Zone geometry is evaluated in a local azimuthal-equidistant tangent
plane, which is why zones are restricted to diameters under 10 km.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence, Union

from .errors import InvalidZone, UnknownZone

# Mean Earth radius (IUGG), meters.
EARTH_RADIUS_M = 6371008.8
# Meters per degree of latitude on the sphere above.
M_PER_DEG = math.pi * EARTH_RADIUS_M / 180.0
# Tolerance for EQUALS/TOUCHES classification and on-edge containment, meters.
EPS_GEO_M = 0.01
# Zones larger than this break the tangent-plane approximation.
MAX_ZONE_DIAMETER_M = 10_000.0


@dataclass(frozen=True)
class GeoPoint:
    """A georeferenced coordinate, optionally on an elevational layer (2.5D).

    ``layer`` participates in point equality only; distance and containment
    ignore it (zones have implied infinite altitude).
    """

    lat: float
    lon: float
    layer: int | None = None

    def __post_init__(self) -> None:
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude out of range: {self.lat}")
        if not math.isfinite(self.lon):
            raise ValueError(f"longitude not finite: {self.lon}")
        # Normalize longitude to [-180, 180); in-range values pass through
        # untouched so float identity survives construction.
        if not -180.0 <= self.lon < 180.0:
            lon = ((self.lon + 180.0) % 360.0) - 180.0
            object.__setattr__(self, "lon", lon)


def geodesic_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters (haversine on the mean-radius sphere)."""
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dphi = math.radians(b.lat - a.lat)
    dlam = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


@dataclass(frozen=True)
class Circle:
    center: GeoPoint
    radius_m: float


@dataclass(frozen=True)
class Polygon:
    """Simple polygon given as an open ring of >= 3 vertices."""

    boundary: tuple[GeoPoint, ...]


Shape = Union[Circle, Polygon]


class TopoRelation(Enum):
    DISJOINT = "disjoint"
    TOUCHES = "touches"
    OVERLAPS = "overlaps"
    WITHIN = "within"
    CONTAINS = "contains"
    EQUALS = "equals"

    def inverse(self) -> "TopoRelation":
        if self is TopoRelation.WITHIN:
            return TopoRelation.CONTAINS
        if self is TopoRelation.CONTAINS:
            return TopoRelation.WITHIN
        return self


@dataclass(frozen=True)
class Zone:
    """A bounded area overlaid on the physical world (quest stages are zones)."""

    id: str
    shape: Shape

    def __post_init__(self) -> None:
        _validate_shape(self.shape)

    @property
    def reference(self) -> GeoPoint:
        """Reference point used to center the tangent-plane projection."""
        return _shape_reference(self.shape)


# ---------------------------------------------------------------------------
# Tangent-plane projection (azimuthal equidistant about a reference point)
# ---------------------------------------------------------------------------

def project(p: GeoPoint, ref: GeoPoint) -> tuple[float, float]:
    """Project ``p`` onto the tangent plane at ``ref``; returns (east, north) meters."""
    phi0 = math.radians(ref.lat)
    phi = math.radians(p.lat)
    dlam = math.radians(p.lon - ref.lon)
    cos_c = math.sin(phi0) * math.sin(phi) + math.cos(phi0) * math.cos(phi) * math.cos(dlam)
    cos_c = max(-1.0, min(1.0, cos_c))
    c = math.acos(cos_c)
    if c < 1e-12:
        return (0.0, 0.0)
    k = c / math.sin(c)
    x = EARTH_RADIUS_M * k * math.cos(phi) * math.sin(dlam)
    y = EARTH_RADIUS_M * k * (
        math.cos(phi0) * math.sin(phi) - math.sin(phi0) * math.cos(phi) * math.cos(dlam)
    )
    return (x, y)


def _shape_reference(shape: Shape) -> GeoPoint:
    if isinstance(shape, Circle):
        return shape.center
    lat = sum(p.lat for p in shape.boundary) / len(shape.boundary)
    lon = sum(p.lon for p in shape.boundary) / len(shape.boundary)
    return GeoPoint(lat, lon)


def _pair_reference(a: Shape, b: Shape) -> GeoPoint:
    ra, rb = _shape_reference(a), _shape_reference(b)
    return GeoPoint((ra.lat + rb.lat) / 2.0, (ra.lon + rb.lon) / 2.0)


def _validate_shape(shape: Shape) -> None:
    if isinstance(shape, Circle):
        if not shape.radius_m > 0.0:
            raise InvalidZone(f"circle radius must be positive, got {shape.radius_m}")
        if 2.0 * shape.radius_m >= MAX_ZONE_DIAMETER_M:
            raise InvalidZone("zone diameter must stay under 10 km")
        return
    if isinstance(shape, Polygon):
        ring = shape.boundary
        if len(ring) < 3:
            raise InvalidZone("polygon needs at least 3 vertices")
        diameter = max(
            geodesic_distance(ring[i], ring[j])
            for i in range(len(ring))
            for j in range(i + 1, len(ring))
        )
        if diameter >= MAX_ZONE_DIAMETER_M:
            raise InvalidZone("zone diameter must stay under 10 km")
        ref = _shape_reference(shape)
        xy = [project(p, ref) for p in ring]
        if abs(_ring_area(xy)) <= EPS_GEO_M**2:
            raise InvalidZone("polygon is degenerate (zero area)")
        n = len(xy)
        for i in range(n):
            a1, a2 = xy[i], xy[(i + 1) % n]
            if _dist(a1, a2) <= EPS_GEO_M:
                raise InvalidZone("polygon has coincident consecutive vertices")
            for j in range(i + 1, n):
                if j == i or (j + 1) % n == i or (i + 1) % n == j:
                    continue  # adjacent edges share a vertex by construction
                b1, b2 = xy[j], xy[(j + 1) % n]
                if _segments_intersect(a1, a2, b1, b2):
                    raise InvalidZone("polygon is self-intersecting")
        return
    raise InvalidZone(f"unsupported shape: {shape!r}")


# ---------------------------------------------------------------------------
# Planar primitives
# ---------------------------------------------------------------------------

def _dist(a: tuple[float, float], b: tuple[float, float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def _ring_area(xy: Sequence[tuple[float, float]]) -> float:
    area = 0.0
    n = len(xy)
    for i in range(n):
        x1, y1 = xy[i]
        x2, y2 = xy[(i + 1) % n]
        area += x1 * y2 - x2 * y1
    return area / 2.0


def _point_seg_dist(p: tuple[float, float], a: tuple[float, float], b: tuple[float, float]) -> float:
    ax, ay = a
    bx, by = b
    px, py = p
    dx, dy = bx - ax, by - ay
    denom = dx * dx + dy * dy
    if denom == 0.0:
        return math.hypot(px - ax, py - ay)
    t = max(0.0, min(1.0, ((px - ax) * dx + (py - ay) * dy) / denom))
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def _seg_seg_dist(a1, a2, b1, b2) -> float:
    if _segments_intersect(a1, a2, b1, b2):
        return 0.0
    return min(
        _point_seg_dist(a1, b1, b2),
        _point_seg_dist(a2, b1, b2),
        _point_seg_dist(b1, a1, a2),
        _point_seg_dist(b2, a1, a2),
    )


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _on_segment_collinear(a, b, p) -> bool:
    return (
        min(a[0], b[0]) - 1e-12 <= p[0] <= max(a[0], b[0]) + 1e-12
        and min(a[1], b[1]) - 1e-12 <= p[1] <= max(a[1], b[1]) + 1e-12
    )


def _segments_intersect(a1, a2, b1, b2) -> bool:
    """Closed-segment intersection test (touching counts)."""
    d1 = _orient(b1, b2, a1)
    d2 = _orient(b1, b2, a2)
    d3 = _orient(a1, a2, b1)
    d4 = _orient(a1, a2, b2)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and ((d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)):
        return True
    if d1 == 0 and _on_segment_collinear(b1, b2, a1):
        return True
    if d2 == 0 and _on_segment_collinear(b1, b2, a2):
        return True
    if d3 == 0 and _on_segment_collinear(a1, a2, b1):
        return True
    if d4 == 0 and _on_segment_collinear(a1, a2, b2):
        return True
    return False


def _orient_banded(a, b, c, eps: float) -> int:
    """Orientation sign with a deadband: 0 when c sits within eps of line ab."""
    value = _orient(a, b, c)
    threshold = eps * math.hypot(b[0] - a[0], b[1] - a[1])
    if abs(value) <= threshold:
        return 0
    return 1 if value > 0 else -1


def _segments_properly_cross(a1, a2, b1, b2, eps: float = EPS_GEO_M) -> bool:
    """True when the open interiors cross transversally beyond the eps band."""
    d1 = _orient_banded(b1, b2, a1, eps)
    d2 = _orient_banded(b1, b2, a2, eps)
    d3 = _orient_banded(a1, a2, b1, eps)
    d4 = _orient_banded(a1, a2, b2, eps)
    return d1 * d2 < 0 and d3 * d4 < 0


def _point_in_ring(p: tuple[float, float], ring: Sequence[tuple[float, float]], eps: float) -> bool:
    """Even-odd ray cast; points within ``eps`` of an edge count as inside."""
    n = len(ring)
    for i in range(n):
        if _point_seg_dist(p, ring[i], ring[(i + 1) % n]) <= eps:
            return True
    inside = False
    px, py = p
    for i in range(n):
        x1, y1 = ring[i]
        x2, y2 = ring[(i + 1) % n]
        if (y1 > py) != (y2 > py):
            x_cross = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
            if px < x_cross:
                inside = not inside
    return inside


def _ring_boundary_dist(p: tuple[float, float], ring: Sequence[tuple[float, float]]) -> float:
    n = len(ring)
    return min(_point_seg_dist(p, ring[i], ring[(i + 1) % n]) for i in range(n))


# ---------------------------------------------------------------------------
# Containment and distance
# ---------------------------------------------------------------------------

def contains(zone: Zone, p: GeoPoint) -> bool:
    """Boundary-inclusive containment; the point's layer is ignored."""
    shape = zone.shape
    if isinstance(shape, Circle):
        return geodesic_distance(shape.center, p) <= shape.radius_m
    ref = _shape_reference(shape)
    ring = [project(v, ref) for v in shape.boundary]
    return _point_in_ring(project(p, ref), ring, EPS_GEO_M)


def distance_to_zone(p: GeoPoint, zone: Zone) -> float:
    """Meters from ``p`` to the zone boundary; 0 when the point is inside."""
    shape = zone.shape
    if isinstance(shape, Circle):
        d = geodesic_distance(shape.center, p)
        return max(0.0, d - shape.radius_m)
    if contains(zone, p):
        return 0.0
    ref = _shape_reference(shape)
    ring = [project(v, ref) for v in shape.boundary]
    return _ring_boundary_dist(project(p, ref), ring)


# ---------------------------------------------------------------------------
# Topological classification
# ---------------------------------------------------------------------------

def topo_relation(a: Zone, b: Zone) -> TopoRelation:
    """Classify the pair into one of six coarse topological relations.

    Decision order: EQUALS, DISJOINT (closures separated), TOUCHES (only
    boundaries meet), WITHIN/CONTAINS (closure inclusion), else OVERLAPS.
    All tests run in a tangent plane centered between the two shapes so the
    classification is symmetric in its arguments.
    """
    ref = _pair_reference(a.shape, b.shape)
    sa, sb = a.shape, b.shape
    if isinstance(sa, Circle) and isinstance(sb, Circle):
        return _circle_circle(sa, sb, ref)
    if isinstance(sa, Circle) and isinstance(sb, Polygon):
        return _circle_polygon(sa, sb, ref)
    if isinstance(sa, Polygon) and isinstance(sb, Circle):
        return _circle_polygon(sb, sa, ref).inverse()
    return _polygon_polygon(sa, sb, ref)


def _circle_circle(a: Circle, b: Circle, ref: GeoPoint) -> TopoRelation:
    eps = EPS_GEO_M
    d = _dist(project(a.center, ref), project(b.center, ref))
    if d <= eps and abs(a.radius_m - b.radius_m) <= eps:
        return TopoRelation.EQUALS
    if d > a.radius_m + b.radius_m + eps:
        return TopoRelation.DISJOINT
    if abs(d - (a.radius_m + b.radius_m)) <= eps:
        return TopoRelation.TOUCHES
    if d + a.radius_m <= b.radius_m + eps:
        return TopoRelation.WITHIN
    if d + b.radius_m <= a.radius_m + eps:
        return TopoRelation.CONTAINS
    return TopoRelation.OVERLAPS


def _circle_polygon(c: Circle, poly: Polygon, ref: GeoPoint) -> TopoRelation:
    eps = EPS_GEO_M
    center = project(c.center, ref)
    ring = [project(v, ref) for v in poly.boundary]
    r = c.radius_m
    center_in = _point_in_ring(center, ring, eps)
    db = _ring_boundary_dist(center, ring)
    dmax = max(_dist(center, v) for v in ring)
    closures_meet = center_in or db <= r + eps
    if not closures_meet:
        return TopoRelation.DISJOINT
    interiors_meet = center_in or db < r - eps
    if not interiors_meet:
        return TopoRelation.TOUCHES
    if center_in and db >= r - eps:
        return TopoRelation.WITHIN
    if dmax <= r + eps:
        return TopoRelation.CONTAINS
    return TopoRelation.OVERLAPS


def _polygon_polygon(a: Polygon, b: Polygon, ref: GeoPoint) -> TopoRelation:
    eps = EPS_GEO_M
    ra = [project(v, ref) for v in a.boundary]
    rb = [project(v, ref) for v in b.boundary]
    edges_a = [(ra[i], ra[(i + 1) % len(ra)]) for i in range(len(ra))]
    edges_b = [(rb[i], rb[(i + 1) % len(rb)]) for i in range(len(rb))]

    proper_cross = any(
        _segments_properly_cross(e1[0], e1[1], e2[0], e2[1]) for e1 in edges_a for e2 in edges_b
    )
    boundary_near = proper_cross or any(
        _seg_seg_dist(e1[0], e1[1], e2[0], e2[1]) <= eps for e1 in edges_a for e2 in edges_b
    )

    def strictly_inside(p, ring) -> bool:
        return _point_in_ring(p, ring, 0.0) and _ring_boundary_dist(p, ring) > eps

    interiors_meet = (
        proper_cross
        or any(strictly_inside(v, rb) for v in ra)
        or any(strictly_inside(v, ra) for v in rb)
    )
    closures_meet = (
        boundary_near
        or any(_point_in_ring(v, rb, eps) for v in ra)
        or any(_point_in_ring(v, ra, eps) for v in rb)
    )

    def closure_in(ring, other_ring) -> bool:
        if proper_cross:
            return False
        probes = list(ring) + [
            ((ring[i][0] + ring[(i + 1) % len(ring)][0]) / 2.0,
             (ring[i][1] + ring[(i + 1) % len(ring)][1]) / 2.0)
            for i in range(len(ring))
        ]
        return all(_point_in_ring(p, other_ring, eps) for p in probes)

    a_in_b = closure_in(ra, rb)
    b_in_a = closure_in(rb, ra)
    if a_in_b and b_in_a:
        return TopoRelation.EQUALS
    if not closures_meet:
        return TopoRelation.DISJOINT
    if not interiors_meet:
        return TopoRelation.TOUCHES
    if a_in_b:
        return TopoRelation.WITHIN
    if b_in_a:
        return TopoRelation.CONTAINS
    return TopoRelation.OVERLAPS


# ---------------------------------------------------------------------------
# Zone files
# ---------------------------------------------------------------------------

def zone_from_dict(doc: dict) -> Zone:
    """Build a zone from its JSON form (see README for the schema)."""
    try:
        zone_id = doc["id"]
        if "circle" in doc:
            c = doc["circle"]
            shape: Shape = Circle(
                center=GeoPoint(c["center"]["lat"], c["center"]["lon"]),
                radius_m=float(c["radius_m"]),
            )
        elif "polygon" in doc:
            shape = Polygon(tuple(GeoPoint(v["lat"], v["lon"]) for v in doc["polygon"]))
        else:
            raise InvalidZone(f"zone {zone_id!r} has neither 'circle' nor 'polygon'")
    except (KeyError, TypeError) as exc:
        raise InvalidZone(f"bad zone document: {exc}") from exc
    return Zone(id=zone_id, shape=shape)


def zone_to_dict(zone: Zone) -> dict:
    if isinstance(zone.shape, Circle):
        return {
            "id": zone.id,
            "circle": {
                "center": {"lat": zone.shape.center.lat, "lon": zone.shape.center.lon},
                "radius_m": zone.shape.radius_m,
            },
        }
    return {
        "id": zone.id,
        "polygon": [{"lat": v.lat, "lon": v.lon} for v in zone.shape.boundary],
    }


def load_zones(path: str | Path) -> dict[str, Zone]:
    """Load ``{"zones": [...]}`` from a JSON file into an id -> Zone map."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    zones: dict[str, Zone] = {}
    for entry in doc.get("zones", []):
        zone = zone_from_dict(entry)
        if zone.id in zones:
            raise InvalidZone(f"duplicate zone id {zone.id!r}")
        zones[zone.id] = zone
    return zones


def require_zone(zones: dict[str, Zone], zone_id: str) -> Zone:
    try:
        return zones[zone_id]
    except KeyError:
        raise UnknownZone(f"unknown zone {zone_id!r}") from None
