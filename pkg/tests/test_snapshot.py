import struct

import numpy as np
import pytest
from conftest import CONTENT_DIMS, TAU, make_stream, make_window

from orbit.encoding import GeoCoordinate, ModalityEmbedding, WeightVector
from orbit.errors import SnapshotError
from orbit.harness.snapshot import FORMAT_VERSION, MAGIC, restore, snapshot
from orbit.retrieval import QueryProfile, query


def profiles(seed: int, t: float, count: int = 10) -> list[QueryProfile]:
    rng = np.random.default_rng(seed)
    result = []
    for _ in range(count):
        cues = tuple(ModalityEmbedding.normalized(rng.standard_normal(d), i + 1) for i, d in enumerate(CONTENT_DIMS))
        location = GeoCoordinate(rng.uniform(-1, 1), rng.uniform(-3, 3))
        result.append(QueryProfile(cues, t, location, WeightVector(rng.uniform(0.1, 1.0, 4)), k=5, ef_search=20))
    return result


def manifests(window) -> list[tuple]:
    return [(b.bucket_index, b.unit, list(b.record_ids)) for b in window.state.buckets]


class TestRoundTrip:
    def test_graph_window(self, tmp_path):
        window = make_window(kind="hnsw")
        for record in make_stream(seed=3, count=150, span=3.9 * TAU):
            window.push(record)
        path = snapshot(window, tmp_path / "w.snap")
        restored = restore(path)

        assert restored.kind == "hnsw"
        assert restored.state.shift_step == window.state.shift_step
        assert manifests(restored) == manifests(window)
        assert restored.ann_config == window.ann_config
        for p in profiles(1, 350.0):
            assert query(p, restored).ids == query(p, window).ids

    def test_after_retirements(self, tmp_path):
        stream = make_stream(seed=4, count=300, span=10 * TAU)
        window = make_window(kind="flat")
        for record in stream[:250]:
            window.push(record)
        restored = restore(snapshot(window, tmp_path / "w.snap"))

        assert restored.state.shift_step == window.state.shift_step > 0
        assert restored.state.last_advance_time == window.state.last_advance_time
        assert restored.state.last_ingest_time == window.state.last_ingest_time
        assert manifests(restored) == manifests(window)
        for record in stream[250:]:
            assert restored.push(record) == window.push(record)
        assert manifests(restored) == manifests(window)
        for p in profiles(2, 950.0):
            assert query(p, restored).ids == query(p, window).ids

    def test_naive_mode(self, tmp_path):
        window = make_window(kind="flat", mode="naive", lenient=True)
        for record in make_stream(seed=5, count=200, span=7 * TAU):
            window.push(record)
        restored = restore(snapshot(window, tmp_path / "n.snap"))
        assert restored.mode == window.mode
        assert restored.lenient
        assert restored.time_origin == window.time_origin
        for p in profiles(3, 650.0):
            assert query(p, restored).ids == query(p, window).ids

    def test_empty_window(self, tmp_path):
        window = make_window()
        restored = restore(snapshot(window, tmp_path / "e.snap"))
        assert restored.live_count() == 0
        assert restored.state.last_advance_time is None
        assert restored.state.last_ingest_time is None


class TestCorruption:
    @pytest.fixture
    def saved(self, tmp_path):
        window = make_window()
        for record in make_stream(seed=6, count=40, span=2 * TAU):
            window.push(record)
        return snapshot(window, tmp_path / "c.snap")

    def test_bad_magic(self, saved):
        data = saved.read_bytes()
        saved.write_bytes(b"XXXX" + data[4:])
        with pytest.raises(SnapshotError, match="magic"):
            restore(saved)

    def test_version_mismatch(self, saved):
        data = saved.read_bytes()
        saved.write_bytes(MAGIC + struct.pack("<I", FORMAT_VERSION + 1) + data[8:])
        with pytest.raises(SnapshotError, match="version"):
            restore(saved)

    def test_flipped_byte(self, saved):
        data = bytearray(saved.read_bytes())
        data[len(data) // 2] ^= 0xFF
        saved.write_bytes(bytes(data))
        with pytest.raises(SnapshotError, match="checksum"):
            restore(saved)

    def test_truncated(self, saved):
        saved.write_bytes(saved.read_bytes()[:-10])
        with pytest.raises(SnapshotError):
            restore(saved)

    def test_missing_file(self, tmp_path):
        with pytest.raises(SnapshotError):
            restore(tmp_path / "absent.snap")
