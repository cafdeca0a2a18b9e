"""Temporal metric, Allen topology, and the sequent-snapshot log."""

from __future__ import annotations

import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from triadgame.chronos import (
    AllenRelation,
    Interval,
    ObservationRecord,
    PointRelation,
    SnapshotLog,
    append_snapshot,
    interval_relation,
    point_relation,
    temporal_distance,
)
from triadgame.errors import DegenerateInterval, InvalidInterval, StaleSequence
from triadgame.geo import GeoPoint

from oracles import allen_oracle


def rec(
    object_id="Player-1", lat=59.33, lon=18.06, device="dev-1", seq=0, t=0, device_t=None
) -> ObservationRecord:
    return ObservationRecord(
        object=object_id,
        point=GeoPoint(lat, lon),
        device_timestamp=device_t if device_t is not None else t,
        virtual_timestamp=t,
        device=device,
        seq=seq,
    )


class TestTemporalDistance:
    def test_zero_for_equal_instants(self):
        assert temporal_distance(1234, 1234) == 0

    def test_minute_apart(self):
        assert temporal_distance(100_000, 160_000) == 60_000

    @given(st.integers(-(2**40), 2**40), st.integers(-(2**40), 2**40))
    def test_symmetric(self, a, b):
        assert temporal_distance(a, b) == temporal_distance(b, a)
        assert temporal_distance(a, b) >= 0


class TestIntervalRelation:
    def test_equal_intervals(self):
        assert interval_relation(Interval(0, 10), Interval(0, 10)) is AllenRelation.EQUALS

    def test_meets_shares_single_endpoint(self):
        assert interval_relation(Interval(0, 10), Interval(10, 20)) is AllenRelation.MEETS

    def test_point_interval_rejected(self):
        with pytest.raises(DegenerateInterval):
            interval_relation(Interval(5, 5), Interval(0, 10))

    def test_backwards_interval_rejected(self):
        with pytest.raises(InvalidInterval):
            Interval(10, 0)

    def test_exhaustive_small_endpoints_match_decision_table(self):
        endpoints = range(6)
        seen = set()
        for a_s, a_e, b_s, b_e in itertools.product(endpoints, repeat=4):
            if a_s >= a_e or b_s >= b_e:
                continue
            got = interval_relation(Interval(a_s, a_e), Interval(b_s, b_e))
            assert got.value == allen_oracle(a_s, a_e, b_s, b_e)
            seen.add(got)
        assert seen == set(AllenRelation)  # all 13 relations exercised

    @given(
        st.integers(0, 10_000), st.integers(1, 10_000),
        st.integers(0, 10_000), st.integers(1, 10_000),
    )
    @settings(max_examples=500)
    def test_inverse_law(self, a_s, a_len, b_s, b_len):
        a = Interval(a_s, a_s + a_len)
        b = Interval(b_s, b_s + b_len)
        assert interval_relation(a, b).inverse() is interval_relation(b, a)


class TestPointRelation:
    @pytest.mark.parametrize(
        "t,expected",
        [
            (-1, PointRelation.BEFORE),
            (0, PointRelation.AT_START),
            (5, PointRelation.DURING),
            (10, PointRelation.AT_END),
            (11, PointRelation.AFTER),
        ],
    )
    def test_classification(self, t, expected):
        assert point_relation(t, Interval(0, 10)) is expected


class TestSnapshotLog:
    def test_append_to_empty(self):
        log = SnapshotLog()
        append_snapshot(log, rec(seq=0, t=1000))
        assert len(log) == 1

    def test_iteration_ordered_by_virtual_timestamp(self):
        log = SnapshotLog()
        log.append(rec(device="dev-1", seq=0, t=60_000))
        log.append(rec(device="dev-2", seq=0, t=0))
        assert [r.virtual_timestamp for r in log] == [0, 60_000]

    def test_stable_insertion_for_equal_timestamps(self):
        log = SnapshotLog()
        log.append(rec(device="dev-1", seq=0, t=500))
        log.append(rec(device="dev-2", seq=0, t=500))
        assert [r.device for r in log] == ["dev-1", "dev-2"]

    def test_replayed_seq_rejected_and_log_unchanged(self):
        log = SnapshotLog()
        log.append(rec(seq=3, t=0))
        with pytest.raises(StaleSequence):
            log.append(rec(seq=3, t=1000))
        with pytest.raises(StaleSequence):
            log.append(rec(seq=2, t=2000))
        assert len(log) == 1

    def test_seq_tracked_per_object_device_pair(self):
        log = SnapshotLog()
        log.append(rec(object_id="Player-1", device="dev-1", seq=5, t=0))
        log.append(rec(object_id="Player-2", device="dev-1", seq=0, t=1))
        log.append(rec(object_id="Player-1", device="dev-2", seq=0, t=2))
        assert len(log) == 3

    def test_slice_window_inclusive_both_ends(self):
        log = SnapshotLog()
        for i, t in enumerate((0, 30, 60)):
            log.append(rec(seq=i, t=t))
        got = log.slice("Player-1", Interval(10, 60))
        assert [r.virtual_timestamp for r in got] == [30, 60]

    def test_slice_empty_log(self):
        assert SnapshotLog().slice("Player-1", Interval(0, 10)) == []

    def test_slice_matches_linear_scan_on_random_logs(self):
        rng = random.Random(321)
        log = SnapshotLog()
        mirror = []
        for i in range(200):
            r = rec(
                object_id=rng.choice(["Player-1", "Player-2", "Player-3"]),
                device="dev-1",
                seq=i,
                t=rng.randrange(0, 5000),
            )
            log.append(r)
            mirror.append(r)
        for _ in range(50):
            lo = rng.randrange(0, 5000)
            hi = rng.randrange(lo, 5001)
            who = rng.choice(["Player-1", "Player-2", "Player-3"])
            window = Interval(lo, hi)
            expected = sorted(
                (r for r in mirror if r.object == who and lo <= r.virtual_timestamp <= hi),
                key=lambda r: r.virtual_timestamp,
            )
            got = log.slice(who, window)
            assert [r.virtual_timestamp for r in got] == [
                r.virtual_timestamp for r in expected
            ]
            assert all(lo <= r.virtual_timestamp <= hi for r in got)

    def test_slice_partition_concatenation(self):
        rng = random.Random(99)
        log = SnapshotLog()
        for i in range(120):
            log.append(rec(seq=i, t=rng.randrange(0, 1000)))
        whole = log.slice("Player-1", Interval(0, 999))
        left = log.slice("Player-1", Interval(0, 499))
        right = log.slice("Player-1", Interval(500, 999))
        assert [r.seq for r in left] + [r.seq for r in right] == [r.seq for r in whole]

    def test_append_only_prefix_stability(self):
        log = SnapshotLog()
        log.append(rec(seq=0, t=100))
        log.append(rec(seq=1, t=200))
        before = [r.to_json_dict() for r in log]
        log.append(rec(seq=2, t=150))  # lands between the two existing records
        after = [r.to_json_dict() for r in log]
        for snapshot in before:
            assert snapshot in after


class TestObservationRecordSerialization:
    def test_json_field_names_are_the_external_contract(self):
        doc = rec(seq=7, t=1234, device_t=1250).to_json_dict()
        assert set(doc) == {
            "object", "lat", "lon", "layer", "device_ts_ms", "virtual_ts_ms", "device", "seq",
        }

    def test_round_trip(self):
        original = ObservationRecord(
            object="Player-1",
            point=GeoPoint(59.33, 18.06, layer=2),
            device_timestamp=1250,
            virtual_timestamp=1234,
            device="dev-1",
            seq=7,
        )
        assert ObservationRecord.from_json_dict(original.to_json_dict()) == original
