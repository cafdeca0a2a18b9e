"""Measurement and clock models: the physical -> measured -> virtual pipeline."""

from __future__ import annotations

import math
import random

import pytest

from triadgame.errors import InvalidHandshake, MalformedMessage, StaleSequence, UnknownObject
from triadgame.geo import M_PER_DEG, GeoPoint, geodesic_distance
from triadgame.sensing import (
    ENGINE_DECIMALS,
    ClockModel,
    Handshake,
    MeasurementModel,
    estimate_offset,
    ingest,
    measure_position,
    measure_time,
    truncate_decimal,
)
from triadgame.triad_store import TriadStore

from oracles import slc_distance

TRUTH = GeoPoint(59.3295, 18.0600)


@pytest.fixture
def store() -> TriadStore:
    s = TriadStore()
    s.create_object("root")
    s.create_object("Player-1", "root")
    return s


class TestTruncateDecimal:
    def test_digit_true_truncation(self):
        assert truncate_decimal(18.06, 7) == 18.06
        assert truncate_decimal(59.3295, 7) == 59.3295
        assert truncate_decimal(59.32949999, 4) == 59.3294
        assert truncate_decimal(-59.32949999, 4) == -59.3294  # toward zero

    def test_idempotent(self):
        value = truncate_decimal(18.123456789123, 7)
        assert truncate_decimal(value, 7) == value


class TestMeasurePosition:
    def test_zero_noise_truncates_truth(self):
        measured = measure_position(TRUTH, MeasurementModel(0.0, 7), seed=1)
        assert measured == GeoPoint(
            truncate_decimal(TRUTH.lat, 7), truncate_decimal(TRUTH.lon, 7)
        )

    def test_deterministic_per_seed(self):
        model = MeasurementModel(5.0, 7)
        assert measure_position(TRUTH, model, seed=42) == measure_position(
            TRUTH, model, seed=42
        )
        assert measure_position(TRUTH, model, seed=42) != measure_position(
            TRUTH, model, seed=43
        )

    def test_mean_displacement_matches_half_normal(self):
        # E|N(0, 5)| = 5 * sqrt(2/pi) ~= 3.99 m; quantization kept negligible.
        model = MeasurementModel(5.0, 12)
        rng = random.Random("displacement-stream")
        total = 0.0
        n = 10_000
        for _ in range(n):
            measured = measure_position(TRUTH, model, rng)
            total += slc_distance(TRUTH, measured)
        assert 3.5 <= total / n <= 4.5

    def test_quantization_bound_at_four_decimals(self):
        # 1e-4 deg * 111_194.9 m/deg * sqrt(2) ~= 15.73 m.
        bound = 1e-4 * M_PER_DEG * math.sqrt(2.0)
        assert bound == pytest.approx(15.73, abs=0.01)
        model = MeasurementModel(0.0, 4)
        rng = random.Random("quant-stream")
        for _ in range(2_000):
            truth = GeoPoint(
                59.0 + rng.random() * 0.6, 17.6 + rng.random() * 0.9
            )
            measured = measure_position(truth, model, rng)
            assert slc_distance(truth, measured) <= bound

    def test_noise_stays_within_drawn_magnitude_plus_quantization(self):
        # geodesic_distance is verified against the independent oracle in
        # test_geo; the law of cosines is too ill-conditioned below ~10 cm
        # to measure this bound itself.
        model = MeasurementModel(5.0, 7)
        quant_bound = 1e-7 * M_PER_DEG * math.sqrt(2.0)
        for seed in range(500):
            replay = random.Random(seed)
            magnitude = abs(replay.normalvariate(0.0, model.noise_sigma_m))
            measured = measure_position(TRUTH, model, seed=seed)
            assert geodesic_distance(TRUTH, measured) <= magnitude + quant_bound + 1e-6


class TestMeasureTime:
    def test_identity_without_error(self):
        assert measure_time(123_456, ClockModel(0, 0), seed=1) == 123_456

    def test_offset_applied(self):
        assert measure_time(10_000, ClockModel(offset_ms=2_000, jitter_ms=0), seed=1) == 12_000

    def test_jitter_bounded(self):
        model = ClockModel(offset_ms=0, jitter_ms=50)
        for seed in range(1_000):
            reading = measure_time(10_000, model, seed=seed)
            assert abs(reading - 10_000) <= 50

    def test_deterministic_per_seed(self):
        model = ClockModel(offset_ms=0, jitter_ms=50)
        assert measure_time(0, model, seed=9) == measure_time(0, model, seed=9)


class TestEstimateOffset:
    def test_symmetric_network_zero_offset(self):
        h = Handshake(1_000, 1_050, 1_060, 1_110)
        assert estimate_offset(h) == 0

    def test_device_ahead_by_two_seconds(self):
        # Device 2000 ms ahead, symmetric 100 ms one-way delay.
        h = Handshake(12_000, 10_100, 10_150, 12_250)
        assert estimate_offset(h) == -2_000

    def test_error_bounded_by_half_asymmetry(self):
        rng = random.Random(31337)
        for _ in range(2_000):
            offset = rng.randrange(-5_000, 5_000)
            d1 = rng.randrange(0, 400)
            d2 = rng.randrange(0, 400)
            t0 = rng.randrange(0, 10**9)
            processing = rng.randrange(0, 50)
            h = Handshake(
                client_send_device_ts=t0 + offset,
                server_recv_ts=t0 + d1,
                server_send_ts=t0 + d1 + processing,
                client_recv_device_ts=t0 + d1 + processing + d2 + offset,
            )
            estimated_device_offset = -estimate_offset(h)
            assert abs(estimated_device_offset - offset) <= abs(d1 - d2) / 2 + 1

    def test_invalid_handshakes_rejected(self):
        with pytest.raises(InvalidHandshake):
            estimate_offset(Handshake(2_000, 2_100, 2_150, 1_999))
        with pytest.raises(InvalidHandshake):
            estimate_offset(Handshake(2_000, 2_100, 2_050, 2_300))


class TestIngest:
    def _snapshot(self, device_ts, seq=0, lat=59.3295123456789, lon=18.0600987654321):
        return {
            "object": "Player-1",
            "lat": lat,
            "lon": lon,
            "device_ts_ms": device_ts,
            "device": "dev-1",
            "seq": seq,
        }

    def test_zero_offset_keeps_device_time(self, store):
        rec = ingest(store, self._snapshot(10_000), offset_ms=0)
        assert rec.virtual_timestamp == rec.device_timestamp == 10_000

    def test_offset_reconciliation(self, store):
        rec = ingest(store, self._snapshot(12_000), offset_ms=2_000)
        assert rec.virtual_timestamp == 10_000

    def test_engine_storage_precision(self, store):
        rec = ingest(store, self._snapshot(0), offset_ms=0)
        assert rec.point.lat == truncate_decimal(59.3295123456789, ENGINE_DECIMALS)
        assert rec.point.lon == truncate_decimal(18.0600987654321, ENGINE_DECIMALS)

    def test_malformed_message(self, store):
        with pytest.raises(MalformedMessage):
            ingest(store, {"object": "Player-1", "lat": 59.0}, offset_ms=0)

    def test_stale_sequence_propagates(self, store):
        ingest(store, self._snapshot(0, seq=1), offset_ms=0)
        with pytest.raises(StaleSequence):
            ingest(store, self._snapshot(1_000, seq=1), offset_ms=0)

    def test_unknown_object_propagates(self, store):
        raw = self._snapshot(0)
        raw["object"] = "ghost"
        with pytest.raises(UnknownObject):
            ingest(store, raw, offset_ms=0)

    def test_pipeline_round_trip_bounds(self, store):
        # physical truth -> measured (noise + quantization) -> ingest; the
        # recovered record must sit within the drawn displacement plus both
        # truncation bounds, and time within jitter of physical.
        model = MeasurementModel(5.0, 6)
        clock = ClockModel(offset_ms=2_000, jitter_ms=50)
        quant = 1e-6 * M_PER_DEG * math.sqrt(2.0) + 1e-7 * M_PER_DEG * math.sqrt(2.0)
        for seed in range(300):
            replay = random.Random(seed)
            magnitude = abs(replay.normalvariate(0.0, model.noise_sigma_m))
            measured = measure_position(TRUTH, model, seed=seed)
            device_ts = measure_time(50_000, clock, seed=seed)
            raw = {
                "object": "Player-1",
                "lat": measured.lat,
                "lon": measured.lon,
                "device_ts_ms": device_ts,
                "device": "dev-1",
                "seq": seed,
            }
            rec = ingest(store, raw, offset_ms=clock.offset_ms)
            assert geodesic_distance(TRUTH, rec.point) <= magnitude + quant + 1e-6
            assert abs(rec.virtual_timestamp - 50_000) <= clock.jitter_ms + 1
