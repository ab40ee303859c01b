import math

import numpy as np
import pytest
from conftest import CONTENT_DIMS, TAU, make_record, make_stream, make_window

from orbit.encoding import GeoCoordinate, ModalityEmbedding, WeightVector
from orbit.errors import InvalidArgumentError, SchemaError
from orbit.records import SpatRecord
from orbit.retrieval import QueryProfile, exact_topk, query, recall_at_k


def cues_for(rng: np.random.Generator) -> tuple[ModalityEmbedding, ...]:
    return tuple(ModalityEmbedding.normalized(rng.standard_normal(d), i + 1) for i, d in enumerate(CONTENT_DIMS))


def profile(rng, t=350.0, weights=(1.0, 1.0, 1.0, 1.0), k=10, ef=64, location=None, **kw) -> QueryProfile:
    location = location or GeoCoordinate(0.3, 1.0)
    return QueryProfile(cues_for(rng), t, location, WeightVector(weights), k=k, ef_search=ef, **kw)


class TestQueryProfile:
    def test_invalid_k_and_ef(self, rng):
        with pytest.raises(InvalidArgumentError):
            profile(rng, k=0)
        with pytest.raises(InvalidArgumentError):
            profile(rng, k=20, ef=10)

    def test_non_finite_time(self, rng):
        with pytest.raises(InvalidArgumentError):
            profile(rng, t=math.nan)

    def test_schema_mismatch(self, rng, filled_window):
        with pytest.raises(SchemaError):
            query(profile(rng, weights=(1.0, 1.0, 1.0)), filled_window)


class TestRankingFidelity:
    def test_matches_exact_oracle(self, rng, filled_window):
        for weights in [(1.0, 1.0, 1.0, 1.0), (0.2, 1.0, 0.5, 0.0), (0.0, 0.0, 1.0, 2.0)]:
            p = profile(rng, weights=weights)
            got = query(p, filled_window)
            truth = exact_topk(p, filled_window)
            assert got.ids == [r.record_id for r in truth]
            for a, b in zip(got, truth):
                assert a.score == pytest.approx(b.score, abs=1e-12)
                assert a.weighted_sum == pytest.approx(b.weighted_sum, abs=1e-12)

    def test_field_scores(self, rng, filled_window):
        p = profile(rng, weights=(0.5, 1.0, 2.0, 1.5))
        got = query(p, filled_window, with_field_scores=True)
        truth = exact_topk(p, filled_window, with_field_scores=True)
        for a, b in zip(got, truth):
            assert np.asarray(a.per_field_scores) == pytest.approx(np.asarray(b.per_field_scores), abs=1e-12)
            assert a.weighted_sum == pytest.approx(float(np.dot(p.weights.weights, a.per_field_scores)), abs=1e-12)

    def test_weighted_sum_is_sqrt_m_times_score(self, rng, filled_window):
        got = query(profile(rng, weights=(0.7, 0.1, 1.0, 0.4)), filled_window)
        for r in got:
            assert r.weighted_sum == pytest.approx(2.0 * r.score)

    def test_graph_index_recall(self):
        window = make_window(kind="hnsw", max_neighbors=12, ef_construction=100)
        for record in make_stream(seed=8, count=800, span=3.9 * TAU):
            window.push(record)
        rng = np.random.default_rng(3)
        recalls = []
        for _ in range(30):
            p = profile(rng, t=380.0, ef=100)
            truth = [r.record_id for r in exact_topk(p, window)]
            recalls.append(recall_at_k(query(p, window).ids, truth, 10))
        assert np.mean(recalls) >= 0.9


class TestWeightSemantics:
    def test_scaling_weights_keeps_ranking(self, rng, filled_window):
        p = profile(rng, weights=(0.3, 0.9, 0.6, 1.2))
        scaled = p.with_weights(p.weights.scaled(7.5))
        assert query(p, filled_window).ids == query(scaled, filled_window).ids

    def test_normalized_query_keeps_ranking(self, rng, filled_window):
        p = profile(rng, weights=(0.3, 0.9, 0.6, 1.2))
        unit = QueryProfile(p.content_cues, p.time_cue, p.location_cue, p.weights, p.k, p.ef_search, normalize=True)
        a, b = query(p, filled_window), query(unit, filled_window)
        assert a.ids == b.ids
        for x, y in zip(a, b):
            assert y.score == pytest.approx(x.score)
            assert y.weighted_sum == pytest.approx(x.weighted_sum)

    def test_normalized_scores_match_field_sum(self, rng, filled_window):
        p = profile(rng, weights=(0.3, 0.9, 0.6, 1.2))
        unit = QueryProfile(p.content_cues, p.time_cue, p.location_cue, p.weights, p.k, p.ef_search, normalize=True)
        m = filled_window.schema.m
        for found in (query(unit, filled_window, with_field_scores=True).results,
                      exact_topk(unit, filled_window, with_field_scores=True)):
            for result in found:
                field_sum = sum(w * s for w, s in zip(p.weights.weights, result.per_field_scores))
                assert math.sqrt(m) * result.score == pytest.approx(field_sum, abs=1e-9)
                assert result.weighted_sum == pytest.approx(field_sum, abs=1e-9)

    def test_zero_weight_modality_ignored(self, rng, filled_window):
        p = profile(rng, weights=(1.0, 0.0, 1.0, 1.0))
        other_cue = ModalityEmbedding.normalized(rng.standard_normal(CONTENT_DIMS[1]), 2)
        swapped = QueryProfile((p.content_cues[0], other_cue), p.time_cue, p.location_cue, p.weights, p.k, p.ef_search)
        absent = QueryProfile((p.content_cues[0], None), p.time_cue, p.location_cue, p.weights, p.k, p.ef_search)
        expected = query(p, filled_window).ids
        assert query(swapped, filled_window).ids == expected
        assert query(absent, filled_window).ids == expected

    def test_missing_cue_with_weight_rejected(self, rng, filled_window):
        p = profile(rng)
        absent = QueryProfile((p.content_cues[0], None), p.time_cue, p.location_cue, p.weights)
        with pytest.raises(SchemaError):
            query(absent, filled_window)


class TestEdgeCases:
    def test_empty_window(self, rng, window):
        response = query(profile(rng), window)
        assert response.results == []
        assert exact_topk(profile(rng), window) == []

    def test_k_above_live_count(self, rng):
        window = make_window()
        for i in range(5):
            window.push(make_record(rng, i, 10.0 * i))
        response = query(profile(rng, t=40.0, k=10, ef=10), window)
        assert sorted(response.ids) == list(range(5))

    def test_out_of_window_time_cue_flagged(self, rng, filled_window, caplog):
        with caplog.at_level("WARNING"):
            response = query(profile(rng, t=-500.0), filled_window)
        assert not response.time_cue_in_window
        assert len(response) == 10
        assert "outside the live window" in caplog.text
        assert query(profile(rng, t=200.0), filled_window).time_cue_in_window


class TestModalitySemantics:
    def _window_with(self, records: list[SpatRecord]):
        window = make_window()
        for record in records:
            window.push(record)
        return window

    def test_time_only_query_prefers_closest_timestamp(self, rng):
        records = [make_record(rng, i, t) for i, t in enumerate([10.0, 120.0, 205.0, 290.0, 395.0])]
        window = self._window_with(records)
        p = profile(rng, t=200.0, weights=(0.0, 0.0, 1.0, 0.0), k=5, ef=5)
        assert query(p, window).ids == [2, 1, 3, 0, 4]

    def test_geo_only_query_orders_by_distance(self, rng):
        anchor = GeoCoordinate(0.5, 2.0)
        offsets = [0.3, 0.01, 0.1, 0.6]
        records = [
            make_record(rng, i, 10.0 * i, location=GeoCoordinate(0.5 + off, 2.0))
            for i, off in enumerate(offsets)
        ]
        window = self._window_with(records)
        p = profile(rng, t=40.0, weights=(0.0, 0.0, 0.0, 1.0), k=4, ef=4, location=anchor)
        assert query(p, window).ids == [1, 2, 0, 3]

    def test_content_match_wins_under_content_weight(self, rng):
        records = [make_record(rng, i, 10.0 * i) for i in range(20)]
        window = self._window_with(records)
        target = records[7]
        cues = tuple(ModalityEmbedding(c, i + 1) for i, c in enumerate(target.content))
        p = QueryProfile(cues, 0.0, GeoCoordinate(0.0, 0.0), WeightVector([1.0, 1.0, 0.0, 0.0]), k=1, ef_search=20)
        top = query(p, window).results[0]
        assert top.record_id == 7
        assert top.weighted_sum == pytest.approx(2.0)


class TestRecallAtK:
    def test_values(self):
        assert recall_at_k([1, 2, 3], [3, 2, 1], 3) == 1.0
        assert recall_at_k([1, 9, 8], [1, 2, 3], 3) == pytest.approx(1 / 3)
        assert recall_at_k([], [1, 2], 2) == 0.0

    def test_truth_size_must_equal_k(self):
        with pytest.raises(InvalidArgumentError):
            recall_at_k([1], [1, 2], 1)
