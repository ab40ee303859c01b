"""
Baselines - scalar-filtered search and hybrid multi-index search

Both run on the same HnswIndex as the unified method and report the same
counters, so query cost can be compared on distance computations.

FilteredIndex stores content-only composites with (t, lat, lon) payloads
and applies a hard spatiotemporal predicate after the graph search, growing
the candidate budget until enough candidates survive.

HybridIndex keeps one index per modality (content blocks, time, geo), runs
one search per weighted modality and merges the candidate union by weighted
sum or reciprocal rank fusion.
"""

import dataclasses
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from orbit.ann import AnnConfig, HnswIndex, SearchResult, SearchStats
from orbit.encoding import (
    CompositeSchema,
    GeoCoordinate,
    ModalityEmbedding,
    TemporalScale,
    WeightVector,
    compose_query,
    compose_record,
    encode_geo,
    encode_time,
)
from orbit.errors import InvalidArgumentError, SchemaError
from orbit.records import SpatRecord
from orbit.retrieval import QueryResponse, ScoredResult

logger = logging.getLogger(__name__)


# ============================================================================
# FILTERED SEARCH
# ============================================================================

@dataclass(frozen=True)
class FilterPredicate:
    """
    Hard filter: closed time interval and lat/lon box (radians).

    Args:
        time_window: (t_lo, t_hi) in seconds
        geo_box: (lat_lo, lat_hi, lon_lo, lon_hi) in radians
    """

    time_window: tuple[float, float] = (-math.inf, math.inf)
    geo_box: tuple[float, float, float, float] = (-math.pi / 2, math.pi / 2, -math.pi, math.pi)

    def __post_init__(self):
        t_lo, t_hi = self.time_window
        lat_lo, lat_hi, lon_lo, lon_hi = self.geo_box
        if math.isnan(t_lo) or math.isnan(t_hi) or t_lo > t_hi:
            raise InvalidArgumentError(f"time window must satisfy t_lo <= t_hi, got {self.time_window}")
        if not (lat_lo <= lat_hi and lon_lo <= lon_hi):
            raise InvalidArgumentError(f"geo box bounds are not ordered: {self.geo_box}")

    @classmethod
    def around(cls, t: float, location: GeoCoordinate, time_radius: float, angle_radius: float) -> "FilterPredicate":
        """Interval of +-time_radius seconds and a box of +-angle_radius radians around a point."""
        return cls(
            (t - time_radius, t + time_radius),
            (
                location.latitude - angle_radius,
                location.latitude + angle_radius,
                location.longitude - angle_radius,
                location.longitude + angle_radius,
            ),
        )

    def matches(self, t: float, latitude: float, longitude: float) -> bool:
        lat_lo, lat_hi, lon_lo, lon_hi = self.geo_box
        return (
            self.time_window[0] <= t <= self.time_window[1]
            and lat_lo <= latitude <= lat_hi
            and lon_lo <= longitude <= lon_hi
        )


class FilteredIndex:
    """Content-only composites with scalar payloads (t, lat, lon)."""

    def __init__(self, schema: CompositeSchema, ann_config: AnnConfig):
        self.schema = schema
        self.index = HnswIndex(dataclasses.replace(ann_config, dim=sum(schema.content_dims)))
        self._payloads: dict[int, tuple[float, float, float]] = {}

    def insert(self, record: SpatRecord) -> int:
        subs = [ModalityEmbedding(block, mid) for mid, block in zip(self.schema.content_ids, record.content)]
        composite = compose_record(subs)
        node_id = self.index.insert(composite.values, record.record_id)
        self._payloads[record.record_id] = (record.timestamp, record.location.latitude, record.location.longitude)
        return node_id

    def deactivate(self, record_ids: Iterable[int]) -> int:
        return self.index.deactivate(record_ids)

    def payload(self, record_id: int) -> tuple[float, float, float]:
        return self._payloads[record_id]

    def content_query(self, cues: Sequence[ModalityEmbedding | None], weights: Sequence[float]) -> np.ndarray:
        """Weighted content-only query vector."""
        layout = self.schema.layout[: len(self.schema.content_dims)]
        return compose_query(cues, WeightVector(weights), layout=layout)

    @classmethod
    def from_records(cls, schema: CompositeSchema, ann_config: AnnConfig, records: Iterable[SpatRecord]) -> "FilteredIndex":
        built = cls(schema, ann_config)
        for record in records:
            built.insert(record)
        return built


def filtered_search(
    content_query: np.ndarray,
    pred: FilterPredicate,
    k: int,
    ef_search: int,
    index: FilteredIndex,
) -> SearchResult:
    """
    Graph search followed by a hard predicate, with a doubling candidate budget.

    The budget starts at k and doubles (capped at the active entry count)
    until k candidates pass the predicate or the index is exhausted. Every
    round's distance computations are counted, rejected candidates included.

    Returns:
        SearchResult: at most k surviving (id, score) pairs
    """
    if k < 1:
        raise InvalidArgumentError(f"k must be >= 1, got {k}")
    stats = SearchStats()
    available = index.index.active_count
    if available == 0:
        return SearchResult([], stats)

    budget = min(k, available)
    while True:
        found = index.index.search(content_query, budget, max(ef_search, budget))
        stats.merge(found.stats)
        survivors = [(rid, score) for rid, score in found if pred.matches(*index.payload(rid))]
        if len(survivors) >= k or budget >= available:
            return SearchResult(survivors[:k], stats)
        budget = min(2 * budget, available)
        logger.debug("Filtered search: %d/%d survivors, budget raised to %d", len(survivors), k, budget)


# ============================================================================
# HYBRID SEARCH
# ============================================================================

class MergeRule(str, Enum):
    WEIGHTED_SUM = "weighted_sum"
    RECIPROCAL_RANK = "reciprocal_rank"


@dataclass(frozen=True)
class HybridConfig:
    per_modality_k: int = 10
    merge_rule: MergeRule = MergeRule.WEIGHTED_SUM
    rrf_constant: float = 60.0

    def __post_init__(self):
        object.__setattr__(self, "merge_rule", MergeRule(self.merge_rule))
        if self.per_modality_k < 1:
            raise InvalidArgumentError(f"per_modality_k must be >= 1, got {self.per_modality_k}")
        if not self.rrf_constant > 0:
            raise InvalidArgumentError("rrf_constant must be positive")


class HybridIndex:
    """One HnswIndex per modality plus a block store for rescoring."""

    def __init__(self, schema: CompositeSchema, ann_config: AnnConfig, scale: TemporalScale, time_origin: float = 0.0):
        self.schema = schema
        self.scale = scale
        self.time_origin = time_origin
        dims = (*schema.content_dims, 2, 3)
        self.indexes = [
            HnswIndex(dataclasses.replace(ann_config, dim=dim, seed=ann_config.seed + i))
            for i, dim in enumerate(dims)
        ]
        self._blocks: list[list[np.ndarray]] = [[] for _ in dims]
        self._row_of: dict[int, int] = {}

    @property
    def m(self) -> int:
        return len(self.indexes)

    def insert(self, record: SpatRecord) -> None:
        if len(record.content) != len(self.schema.content_dims):
            raise SchemaError(f"expected {len(self.schema.content_dims)} content blocks, got {len(record.content)}")
        blocks = [
            *record.content,
            np.asarray(encode_time(record.timestamp - self.time_origin, self.scale)),
            np.asarray(encode_geo(record.location)),
        ]
        self._row_of[record.record_id] = len(self._blocks[0])
        for index, store, block in zip(self.indexes, self._blocks, blocks):
            index.insert(block, record.record_id)
            store.append(block)

    def deactivate(self, record_ids: Iterable[int]) -> int:
        record_ids = list(record_ids)
        counts = [index.deactivate(record_ids) for index in self.indexes]
        return counts[0]

    def cues_for(
        self, content_cues: Sequence[ModalityEmbedding | None], time_cue: float, location_cue: GeoCoordinate
    ) -> list[np.ndarray | None]:
        return [
            *(None if cue is None else cue.values for cue in content_cues),
            np.asarray(encode_time(time_cue - self.time_origin, self.scale)),
            np.asarray(encode_geo(location_cue)),
        ]

    def block_matrix(self, modality: int, record_ids: Sequence[int]) -> np.ndarray:
        rows = [self._row_of[rid] for rid in record_ids]
        return np.array([self._blocks[modality][r] for r in rows], dtype=np.float64)

    @classmethod
    def from_records(
        cls,
        schema: CompositeSchema,
        ann_config: AnnConfig,
        scale: TemporalScale,
        records: Iterable[SpatRecord],
        time_origin: float = 0.0,
    ) -> "HybridIndex":
        built = cls(schema, ann_config, scale, time_origin)
        for record in records:
            built.insert(record)
        return built


def hybrid_search(
    cues: Sequence[np.ndarray | None],
    weights: WeightVector,
    k: int,
    ef_search: int,
    cfg: HybridConfig,
    index: HybridIndex,
) -> QueryResponse:
    """
    One search per weighted modality, then merge of the candidate union.

    Modalities with zero weight are not searched. WEIGHTED_SUM rescores the
    union with sum_i w_i <v_i, q_i> (one block dot product per searched
    modality and candidate, counted in the stats); RECIPROCAL_RANK sums 1/(c + rank) over the lists
    a candidate appears in.

    Args:
        cues: One cue vector per modality (content..., time, geo); None where the weight is 0
        weights: Weights over the m modalities
        k: Number of merged results
        ef_search: Beam width of every per-modality search
        cfg: Merge settings
        index: Per-modality indexes

    Returns:
        QueryResponse: merged results and the stats of all traversals
    """
    if len(cues) != index.m or len(weights) != index.m:
        raise SchemaError(f"hybrid search needs {index.m} cues and weights")
    if cfg.per_modality_k < k:
        raise InvalidArgumentError(f"per_modality_k ({cfg.per_modality_k}) must be >= k ({k})")

    stats = SearchStats()
    searched: list[int] = []
    ranked_lists: list[list[int]] = []
    for i, (cue, sub_index) in enumerate(zip(cues, index.indexes)):
        if weights[i] == 0.0:
            continue
        if cue is None:
            raise SchemaError(f"modality {i + 1} has weight {weights[i]} but no cue")
        found = sub_index.search(cue, cfg.per_modality_k, max(ef_search, cfg.per_modality_k))
        stats.merge(found.stats)
        searched.append(i)
        ranked_lists.append(found.ids)

    candidates = sorted({rid for ids in ranked_lists for rid in ids})
    if not candidates:
        return QueryResponse([], stats)

    ids = np.array(candidates, dtype=np.int64)
    if cfg.merge_rule is MergeRule.RECIPROCAL_RANK:
        fused = dict.fromkeys(candidates, 0.0)
        for ranked in ranked_lists:
            for rank, rid in enumerate(ranked, start=1):
                fused[rid] += 1.0 / (cfg.rrf_constant + rank)
        scores = np.array([fused[rid] for rid in candidates])
        order = np.lexsort((ids, -scores))[:k]
        results = [ScoredResult(int(ids[j]), float(scores[j]), float(scores[j])) for j in order]
        return QueryResponse(results, stats)

    total = np.zeros(ids.size)
    for i in searched:
        total += weights[i] * (index.block_matrix(i, candidates) @ cues[i])
        stats.distance_computations += ids.size
    order = np.lexsort((ids, -total))[:k]
    root_m = math.sqrt(index.m)
    results = [ScoredResult(int(ids[j]), float(total[j]) / root_m, float(total[j])) for j in order]
    return QueryResponse(results, stats)
