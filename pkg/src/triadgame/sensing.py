"""The physical -> measured -> virtual pipeline for positions and clocks.

Positions reach the engine through a GPS-style error model (Gaussian radial
displacement, then decimal truncation at the device); timestamps through a
device clock model (fixed offset plus per-reading jitter). Ingest reconciles
device time to engine time and fixes storage precision at 7 decimal degrees
with truncation, so representation error is explicit and testable.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from decimal import ROUND_DOWN, Decimal

from .chronos import Millis, ObservationRecord
from .errors import InvalidHandshake, MalformedMessage
from .geo import M_PER_DEG, GeoPoint
from .triad_store import TriadStore

# Engine-side storage precision, decimal degrees (~1.1 cm).
ENGINE_DECIMALS = 7


@dataclass(frozen=True)
class MeasurementModel:
    """Horizontal GPS error: |N(0, sigma)| meters at a uniform bearing,
    then device-side truncation to ``quant_decimals`` decimal degrees."""

    noise_sigma_m: float = 0.0
    quant_decimals: int = ENGINE_DECIMALS

    def __post_init__(self) -> None:
        if self.noise_sigma_m < 0:
            raise ValueError("noise_sigma_m must be >= 0")
        if self.quant_decimals < 0:
            raise ValueError("quant_decimals must be >= 0")


@dataclass(frozen=True)
class ClockModel:
    """Device clock error: fixed offset (device minus physical) plus uniform
    per-reading jitter in [-jitter_ms, +jitter_ms]."""

    offset_ms: int = 0
    jitter_ms: int = 0

    def __post_init__(self) -> None:
        if self.jitter_ms < 0:
            raise ValueError("jitter_ms must be >= 0")


def _rng(seed) -> random.Random:
    if isinstance(seed, random.Random):
        return seed
    return random.Random(seed)


def truncate_decimal(value: float, decimals: int) -> float:
    """Digit-true truncation toward zero at ``decimals`` decimal places."""
    quantum = Decimal(1).scaleb(-decimals)
    return float(Decimal(repr(value)).quantize(quantum, rounding=ROUND_DOWN))


def measure_position(truth: GeoPoint, model: MeasurementModel, seed) -> GeoPoint:
    """One measured fix: truth displaced by the noise draw, then truncated.

    Draw order per call is one normal (displacement magnitude) then one
    uniform (bearing), so a seeded stream can be replayed externally.
    """
    rng = _rng(seed)
    magnitude = abs(rng.normalvariate(0.0, model.noise_sigma_m)) if model.noise_sigma_m > 0 else 0.0
    bearing = rng.uniform(0.0, 2.0 * math.pi) if model.noise_sigma_m > 0 else 0.0
    north = magnitude * math.cos(bearing)
    east = magnitude * math.sin(bearing)
    lat = truth.lat + north / M_PER_DEG
    lon = truth.lon + east / (M_PER_DEG * math.cos(math.radians(truth.lat)))
    lat = max(-90.0, min(90.0, lat))
    return GeoPoint(
        truncate_decimal(lat, model.quant_decimals),
        truncate_decimal(lon, model.quant_decimals),
        truth.layer,
    )


def measure_time(physical_ms: Millis, model: ClockModel, seed) -> Millis:
    """One device-clock reading of the given physical instant."""
    rng = _rng(seed)
    jitter = rng.uniform(-model.jitter_ms, model.jitter_ms) if model.jitter_ms > 0 else 0.0
    return int(round(physical_ms + model.offset_ms + jitter))


@dataclass(frozen=True)
class Handshake:
    """One request/response round trip of clock readings.

    Client timestamps are device-clock readings; server timestamps are
    engine-clock readings.
    """

    client_send_device_ts: Millis
    server_recv_ts: Millis
    server_send_ts: Millis
    client_recv_device_ts: Millis


def estimate_offset(handshake: Handshake) -> Millis:
    """Estimated (server clock - device clock) from one round trip.

    This is the classic symmetric-delay round-trip estimate; with one-way
    delays d1, d2 the error is bounded by |d1 - d2| / 2. Note the sign: a
    device running AHEAD of the engine yields a NEGATIVE estimate, i.e. the
    negation of ``ClockModel.offset_ms``.
    """
    if handshake.client_recv_device_ts < handshake.client_send_device_ts:
        raise InvalidHandshake("client received before it sent")
    if handshake.server_send_ts < handshake.server_recv_ts:
        raise InvalidHandshake("server sent before it received")
    total = (handshake.server_recv_ts - handshake.client_send_device_ts) + (
        handshake.server_send_ts - handshake.client_recv_device_ts
    )
    return int(total / 2)  # int() truncates toward zero


SNAPSHOT_REQUIRED_FIELDS = ("object", "lat", "lon", "device_ts_ms", "device", "seq")


def ingest(store: TriadStore, raw: dict, offset_ms: Millis) -> ObservationRecord:
    """Turn one device snapshot message into a stored observation.

    ``offset_ms`` follows the ClockModel convention (device minus engine):
    virtual_timestamp = device_timestamp - offset_ms. Coordinates are stored
    at the engine's fixed 7-decimal precision, truncated.
    """
    if not isinstance(raw, dict):
        raise MalformedMessage("snapshot message must be an object")
    missing = [f for f in SNAPSHOT_REQUIRED_FIELDS if raw.get(f) is None]
    if missing:
        raise MalformedMessage(f"snapshot message missing fields: {missing}")
    try:
        lat = truncate_decimal(float(raw["lat"]), ENGINE_DECIMALS)
        lon = truncate_decimal(float(raw["lon"]), ENGINE_DECIMALS)
        layer = raw.get("layer")
        point = GeoPoint(lat, lon, int(layer) if layer is not None else None)
        device_ts = int(raw["device_ts_ms"])
        rec = ObservationRecord(
            object=str(raw["object"]),
            point=point,
            device_timestamp=device_ts,
            virtual_timestamp=device_ts - int(offset_ms),
            device=str(raw["device"]),
            seq=int(raw["seq"]),
        )
    except (TypeError, ValueError) as exc:
        raise MalformedMessage(f"bad snapshot field: {exc}") from exc
    store.link_observation(rec)  # raises UnknownObject / StaleSequence
    return rec
