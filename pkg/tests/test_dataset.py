import math

import numpy as np
import pytest
from conftest import CONTENT_DIMS, small_config

from orbit.errors import ConfigError
from orbit.harness.dataset import generate_dataset, generate_queries, generate_timestamps, records_frame


class TestGenerateDataset:
    def test_deterministic(self):
        cfg = small_config()
        a, b = generate_dataset(cfg), generate_dataset(cfg)
        assert [r.timestamp for r in a] == [r.timestamp for r in b]
        for x, y in zip(a, b):
            assert all(np.array_equal(p, q) for p, q in zip(x.content, y.content))

    def test_seed_changes_stream(self):
        a = generate_dataset(small_config(seed=1))
        b = generate_dataset(small_config(seed=2))
        assert [r.timestamp for r in a] != [r.timestamp for r in b]

    def test_stream_shape(self):
        cfg = small_config()
        records = generate_dataset(cfg)
        assert [r.record_id for r in records] == list(range(300))
        times = [r.timestamp for r in records]
        assert times == sorted(times)
        assert 0.0 <= times[0] and times[-1] < cfg.data.span_seconds
        box = cfg.data.geo_box
        for r in records:
            assert math.radians(box.lat_min) <= r.location.latitude <= math.radians(box.lat_max)
            assert math.radians(box.lon_min) <= r.location.longitude <= math.radians(box.lon_max)
            assert [b.size for b in r.content] == list(CONTENT_DIMS)

    @pytest.mark.parametrize("distribution", ["random_unit", "gaussian_clusters", "moderate_blend"])
    def test_content_is_unit_norm(self, distribution):
        records = generate_dataset(small_config(data={"distribution": distribution, "cluster_count": 3}))
        norms = np.array([np.linalg.norm(b) for r in records for b in r.content])
        assert norms == pytest.approx(np.ones_like(norms), abs=1e-12)

    def test_record_count_override(self):
        cfg = small_config()
        assert len(generate_dataset(cfg, record_count=17)) == 17
        assert generate_dataset(cfg, record_count=0) == []

    def test_invalid_box(self):
        with pytest.raises(ConfigError):
            small_config(data={"geo_box": {"lat_min": 40.0, "lat_max": 30.0}})


class TestGenerateQueries:
    def test_queries_anchor_on_records(self):
        cfg = small_config()
        records = generate_dataset(cfg)
        times = {r.timestamp for r in records}
        queries = generate_queries(cfg, records)
        assert len(queries) == cfg.queries.count
        for spec in queries:
            assert spec.time_cue in times
            assert len(spec.weights) == cfg.schema_.m
            assert set(spec.weights.tolist()) <= set(cfg.queries.weight_levels)
            for block in spec.content:
                assert np.linalg.norm(block) == pytest.approx(1.0)

    def test_profile(self):
        cfg = small_config()
        spec = generate_queries(cfg, generate_dataset(cfg), count=1)[0]
        profile = spec.profile(k=10, ef_search=4)
        assert profile.ef_search == 10
        assert [c.modality_id for c in profile.content_cues] == [1, 2]
        assert profile.weights.weights.tolist() == spec.weights.tolist()

    def test_seed_offset(self):
        cfg = small_config()
        records = generate_dataset(cfg)
        a = generate_queries(cfg, records, count=5, seed_offset=0)
        b = generate_queries(cfg, records, count=5, seed_offset=1)
        assert [q.time_cue for q in a] != [q.time_cue for q in b]

    def test_no_records(self):
        assert generate_queries(small_config(), []) == []

    def test_moderate_blend_uses_anchors(self):
        cfg = small_config(data={"distribution": "moderate_blend"})
        specs = generate_queries(cfg, generate_dataset(cfg), count=20)
        distinct = {tuple(np.round(spec.content[0], 12)) for spec in specs}
        assert len(distinct) <= 8


class TestTimestampsAndFrame:
    def test_timestamps(self):
        cfg = small_config()
        times, queries = generate_timestamps(cfg)
        assert times.size == 200 and queries.size == 10
        assert np.all(np.diff(times) >= 0)
        assert np.all((times >= 0) & (times < 1000.0))

    def test_records_frame(self):
        records = generate_dataset(small_config(), record_count=5)
        frame = records_frame(records)
        assert len(frame) == 5
        assert {"record_id", "timestamp", "latitude_deg", "longitude_deg", "c1_0", "c2_2"} <= set(frame.columns)
        assert frame["latitude_deg"].between(29.18, 30.57).all()
