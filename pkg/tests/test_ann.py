import threading

import numpy as np
import pytest

from orbit.ann import AnnConfig, FlatIndex, HnswIndex, build_index
from orbit.errors import ConfigError, InvalidArgumentError, SchemaError

# -----------------------------------------------------------------------
# Helpers
# -----------------------------------------------------------------------


def unit_rows(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    x = rng.standard_normal((n, dim))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def filled(kind: str, vectors: np.ndarray, **params) -> HnswIndex | FlatIndex:
    config = AnnConfig(dim=vectors.shape[1], **{"max_neighbors": 8, "ef_construction": 64, "seed": 11, **params})
    index = build_index(config, kind)
    for i, v in enumerate(vectors):
        index.insert(v, i)
    return index


def exact_ids(vectors: np.ndarray, query: np.ndarray, k: int, active: np.ndarray | None = None) -> list[int]:
    scores = vectors @ query
    ids = np.arange(len(vectors))
    if active is not None:
        scores, ids = scores[active], ids[active]
    return ids[np.lexsort((ids, -scores))[:k]].tolist()


# -----------------------------------------------------------------------
# Tests
# -----------------------------------------------------------------------


class TestAnnConfig:
    @pytest.mark.parametrize(
        "params",
        [
            {"dim": 0},
            {"dim": 4, "max_neighbors": 1},
            {"dim": 4, "max_neighbors": 16, "ef_construction": 8},
            {"dim": 4, "compaction_threshold": 0.0},
        ],
    )
    def test_invalid(self, params):
        with pytest.raises(ConfigError):
            AnnConfig(**params)

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            build_index(AnnConfig(dim=3), "ivf")


class TestInsertAndSearch:
    def test_node_ids_ascend(self, rng):
        index = HnswIndex(AnnConfig(dim=5))
        ids = [index.insert(v, 100 + i) for i, v in enumerate(unit_rows(rng, 20, 5))]
        assert ids == sorted(ids)
        assert len(set(ids)) == 20
        assert index.node_of(105) == ids[5]

    def test_dimension_mismatch(self, rng):
        index = HnswIndex(AnnConfig(dim=5))
        with pytest.raises(SchemaError):
            index.insert(np.ones(4) / 2, 0)
        index.insert(unit_rows(rng, 1, 5)[0], 0)
        with pytest.raises(SchemaError):
            index.search(np.ones(3), 1)

    def test_duplicate_record_id(self, rng):
        index = FlatIndex(AnnConfig(dim=3))
        index.insert(unit_rows(rng, 1, 3)[0], 1)
        with pytest.raises(InvalidArgumentError):
            index.insert(unit_rows(rng, 1, 3)[0], 1)

    def test_capacity(self, rng):
        index = FlatIndex(AnnConfig(dim=3, max_elements=2))
        for i, v in enumerate(unit_rows(rng, 2, 3)):
            index.insert(v, i)
        with pytest.raises(InvalidArgumentError):
            index.insert(unit_rows(rng, 1, 3)[0], 9)

    def test_ef_below_k_rejected(self, rng):
        index = filled("hnsw", unit_rows(rng, 30, 4))
        with pytest.raises(InvalidArgumentError):
            index.search(unit_rows(rng, 1, 4)[0], k=10, ef_search=5)

    def test_single_vector(self, rng):
        v = unit_rows(rng, 1, 6)[0]
        index = filled("hnsw", v[None, :])
        result = index.search(v, k=1, ef_search=10)
        assert result.ids == [0]
        assert result.scores[0] == pytest.approx(1.0)

    def test_empty_index(self, rng):
        result = HnswIndex(AnnConfig(dim=4)).search(unit_rows(rng, 1, 4)[0], 3)
        assert result.entries == []

    def test_exhaustive_ef_is_exact(self, rng):
        vectors = unit_rows(rng, 300, 8)
        index = filled("hnsw", vectors)
        for q in unit_rows(rng, 20, 8):
            result = index.search(q, k=10, ef_search=300)
            assert result.ids == exact_ids(vectors, q, 10)
            assert result.scores == sorted(result.scores, reverse=True)

    def test_graph_search_recall(self, rng):
        vectors = unit_rows(rng, 2000, 8)
        index = filled("hnsw", vectors, max_neighbors=12, ef_construction=100)
        recalls = []
        for q in unit_rows(rng, 50, 8):
            result = index.search(q, k=10, ef_search=64)
            recalls.append(len(set(result.ids) & set(exact_ids(vectors, q, 10))) / 10)
        assert np.mean(recalls) >= 0.9

    def test_larger_ef_costs_more(self, rng):
        vectors = unit_rows(rng, 1500, 8)
        index = filled("hnsw", vectors)
        queries = unit_rows(rng, 30, 8)
        low = [index.search(q, 10, 10).stats.distance_computations for q in queries]
        high = [index.search(q, 10, 200).stats.distance_computations for q in queries]
        assert np.median(high) >= np.median(low)

    def test_ties_break_by_record_id(self):
        v = np.array([1.0, 0.0, 0.0])
        index = FlatIndex(AnnConfig(dim=3))
        for rid in (7, 3, 5):
            index.insert(v, rid)
        assert index.search(v, 3).ids == [3, 5, 7]

    def test_deterministic_build(self, rng):
        vectors = unit_rows(rng, 400, 6)
        q = unit_rows(rng, 1, 6)[0]
        a = filled("hnsw", vectors).search(q, 5, 20)
        b = filled("hnsw", vectors).search(q, 5, 20)
        assert a.entries == b.entries
        assert a.stats == b.stats


class TestDeactivate:
    def test_excluded_from_results(self, rng):
        vectors = unit_rows(rng, 500, 6)
        index = filled("hnsw", vectors)
        dead = list(range(0, 500, 2))
        assert index.deactivate(dead) == 250
        active = np.ones(500, dtype=bool)
        active[dead] = False
        for q in unit_rows(rng, 20, 6):
            result = index.search(q, 10, 40)
            assert not set(result.ids) & set(dead)
            assert index.search(q, 10, 500).ids == exact_ids(vectors, q, 10, active)

    def test_count_skips_unknown_and_repeated(self, rng):
        index = filled("flat", unit_rows(rng, 10, 3))
        assert index.deactivate([1, 2, 99]) == 2
        assert index.deactivate([1, 2]) == 0
        assert index.active_count == 8
        assert index.size == 10
        assert index.counters.deactivations == 2

    def test_all_deactivated(self, rng):
        index = filled("hnsw", unit_rows(rng, 50, 4))
        index.deactivate(range(50))
        assert index.search(unit_rows(rng, 1, 4)[0], 5).entries == []

    def test_recall_after_retiring_a_sixth(self, rng):
        vectors = unit_rows(rng, 2400, 8)
        index = filled("hnsw", vectors, max_neighbors=12, ef_construction=100)
        retired = list(range(400))
        index.deactivate(retired)
        active = np.arange(2400) >= 400
        recalls = []
        for q in unit_rows(rng, 50, 8):
            result = index.search(q, 10, 100)
            assert not set(result.ids) & set(retired)
            recalls.append(len(set(result.ids) & set(exact_ids(vectors, q, 10, active))) / 10)
        assert np.mean(recalls) >= 0.9

    def test_work_proportional_to_batch(self, rng):
        index = filled("hnsw", unit_rows(rng, 300, 4))
        before = index.counters.deactivations
        index.deactivate(range(17))
        assert index.counters.deactivations - before == 17


class TestCompaction:
    @pytest.mark.parametrize("kind", ["hnsw", "flat"])
    def test_compact_drops_tombstones(self, kind, rng):
        vectors = unit_rows(rng, 200, 5)
        index = filled(kind, vectors)
        old_max = index.node_of(199)
        index.deactivate(range(150))
        summary = index.compact()
        assert summary.dropped == 150
        assert index.size == index.active_count == 50
        assert index.node_of(0) is None
        assert index.node_of(150) > old_max
        q = unit_rows(rng, 1, 5)[0]
        active = np.arange(200) >= 150
        assert index.search(q, 5, 50).ids == exact_ids(vectors, q, 5, active)

    def test_maybe_compact_threshold(self, rng):
        index = filled("hnsw", unit_rows(rng, 100, 4), compaction_threshold=0.5)
        index.deactivate(range(40))
        assert index.maybe_compact() is None
        index.deactivate(range(40, 60))
        assert index.maybe_compact().dropped == 60
        assert index.counters.compactions == 1

    def test_vectors_unchanged_by_compaction(self, rng):
        vectors = unit_rows(rng, 60, 4)
        index = filled("hnsw", vectors)
        index.deactivate(range(30))
        index.compact()
        assert np.array_equal(index.vector_of(45), vectors[45])


class TestCounters:
    @pytest.mark.parametrize("kind,ef", [("hnsw", 10), ("hnsw", 40), ("hnsw", 1000), ("flat", 10)])
    def test_work_covers_the_result(self, kind, ef, rng):
        index = filled(kind, unit_rows(rng, 600, 6))
        index.deactivate(range(0, 600, 5))
        for q in unit_rows(rng, 20, 6):
            result = index.search(q, 10, ef)
            assert len(result) == 10
            assert result.stats.distance_computations >= len(result)
            assert result.stats.nodes_visited >= len(result)

    def test_graph_search_visits_fewer_nodes_than_scan(self, rng):
        index = filled("hnsw", unit_rows(rng, 1500, 8))
        q = unit_rows(rng, 1, 8)[0]
        assert index.search(q, 10, 20).stats.nodes_visited < index.search(q, 10, 1500).stats.nodes_visited

    def test_search_totals_accumulate(self, rng):
        index = filled("flat", unit_rows(rng, 40, 4))
        before = index.counters.search_distance_computations
        index.search(unit_rows(rng, 1, 4)[0], 5)
        assert index.counters.search_distance_computations - before == 40


class TestFlatTopk:
    def test_full_ranking(self, rng):
        vectors = unit_rows(rng, 25, 4)
        index = filled("flat", vectors)
        q = unit_rows(rng, 1, 4)[0]
        result = index.flat_topk(q, 100)
        assert result.ids == exact_ids(vectors, q, 25)
        assert result.stats.distance_computations == 25

    def test_inactive_included_on_request(self, rng):
        vectors = unit_rows(rng, 10, 4)
        index = filled("flat", vectors)
        index.deactivate([0])
        assert len(index.flat_topk(vectors[0], 10, active_only=False)) == 10
        assert 0 not in index.flat_topk(vectors[0], 10).ids


class TestConcurrency:
    def test_searches_during_inserts(self, rng):
        vectors = unit_rows(rng, 400, 6)
        index = filled("hnsw", vectors[:200])
        queries = unit_rows(rng, 50, 6)
        errors = []

        def reader():
            try:
                for q in queries:
                    result = index.search(q, 5, 30)
                    assert len(result) == 5
            except Exception as exc:  # noqa: BLE001
                errors.append(exc)

        threads = [threading.Thread(target=reader) for _ in range(3)]
        for t in threads:
            t.start()
        for i in range(200, 400):
            index.insert(vectors[i], i)
        for t in threads:
            t.join()
        assert errors == []
        assert index.size == 400
