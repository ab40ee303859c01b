"""
Weighted retrieval over the live window, with the exact oracle and recall.

query() answers a weighted multi-modal question with a single index search:
the weights are folded into the query vector, so the composite inner product
equals the weighted per-field similarity sum divided by sqrt(m).
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from orbit.ann import SearchStats
from orbit.encoding import (
    GeoCoordinate,
    ModalityEmbedding,
    WeightVector,
    compose_query,
    encode_geo,
    encode_time,
)
from orbit.errors import InvalidArgumentError, SchemaError
from orbit.window import SlidingWindow

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class QueryProfile:
    """
    A weighted query.

    Args:
        content_cues: One cue per content modality; None allowed where the weight is 0
        time_cue: Query timestamp t_q
        location_cue: Query location
        weights: Weights over all m modalities (content..., time, geo)
        k: Number of results
        ef_search: Beam width, at least k
        normalize: Search with the unit-normalised query vector
    """

    content_cues: tuple[ModalityEmbedding | None, ...]
    time_cue: float
    location_cue: GeoCoordinate
    weights: WeightVector
    k: int = 10
    ef_search: int = 100
    normalize: bool = False

    def __post_init__(self):
        object.__setattr__(self, "content_cues", tuple(self.content_cues))
        if self.k < 1:
            raise InvalidArgumentError(f"k must be >= 1, got {self.k}")
        if self.ef_search < self.k:
            raise InvalidArgumentError(f"ef_search ({self.ef_search}) must be >= k ({self.k})")
        if not math.isfinite(self.time_cue):
            raise InvalidArgumentError("time cue must be finite")

    @property
    def m(self) -> int:
        return len(self.content_cues) + 2

    def with_weights(self, weights: WeightVector) -> "QueryProfile":
        return QueryProfile(
            self.content_cues, self.time_cue, self.location_cue, weights, self.k, self.ef_search, self.normalize
        )


@dataclass(frozen=True)
class ScoredResult:
    """
    One ranked record.

    score is the composite-space inner product of the unnormalised weighted
    query, so sqrt(m) * score = weighted_sum = sum_i w_i * per_field_i whether
    or not the search ran with a normalised query.
    """

    record_id: int
    score: float
    weighted_sum: float
    per_field_scores: tuple[float, ...] | None = None


@dataclass
class QueryResponse:
    results: list[ScoredResult]
    stats: SearchStats = field(default_factory=SearchStats)
    time_cue_in_window: bool = True

    @property
    def ids(self) -> list[int]:
        return [r.record_id for r in self.results]

    def __len__(self) -> int:
        return len(self.results)

    def __iter__(self):
        return iter(self.results)


def _cues(profile: QueryProfile, window: SlidingWindow) -> list[ModalityEmbedding | None]:
    schema = window.schema
    if len(profile.content_cues) != len(schema.content_dims) or len(profile.weights) != schema.m:
        raise SchemaError(
            f"profile has {len(profile.content_cues)} content cues and {len(profile.weights)} weights; "
            f"schema expects {len(schema.content_dims)} and {schema.m}"
        )
    time_values = np.asarray(encode_time(profile.time_cue - window.time_origin, window.scale))
    geo_values = np.asarray(encode_geo(profile.location_cue))
    return [
        *profile.content_cues,
        ModalityEmbedding(time_values, schema.time_id),
        ModalityEmbedding(geo_values, schema.geo_id),
    ]


def query(profile: QueryProfile, window: SlidingWindow, with_field_scores: bool = False) -> QueryResponse:
    """
    Top-k live records for a weighted profile with one index search.

    Args:
        profile: Cues, weights, k and ef_search
        window: Live window and its index
        with_field_scores: Also report the m per-field similarities of each hit

    Returns:
        QueryResponse: results by descending score, search stats and whether
        the time cue lies inside the live window

    Raises:
        SchemaError: profile does not match the window schema
    """
    schema = window.schema
    with window.reading():
        cues = _cues(profile, window)
        vector = compose_query(cues, profile.weights, normalize=profile.normalize, layout=schema.layout)
        found = window.index.search(vector, profile.k, profile.ef_search)
        in_window = window.contains(profile.time_cue)
        if not in_window:
            logger.warning("Time cue %s lies outside the live window; scores use folded phases", profile.time_cue)

        weight_norm = profile.weights.norm if profile.normalize else 1.0
        results = []
        for record_id, score in found:
            per_field = None
            if with_field_scores:
                stored = np.asarray(window.index.vector_of(record_id)) * math.sqrt(schema.m)
                per_field = tuple(
                    0.0 if cue is None else float(stored[b.offset:b.offset + b.dim] @ cue.values)
                    for cue, b in zip(cues, schema.layout)
                )
            score *= weight_norm
            results.append(ScoredResult(record_id, score, score * math.sqrt(schema.m), per_field))
        return QueryResponse(results, found.stats, in_window)


def exact_topk(profile: QueryProfile, window: SlidingWindow, with_field_scores: bool = False) -> list[ScoredResult]:
    """
    Brute-force ground truth: S = sum_i w_i <v_i, q_i> over every live record.

    Scores are computed per field from the raw records, independently of the
    composite index. Ties go to the smaller record id.
    """
    schema = window.schema
    with window.reading():
        cues = _cues(profile, window)
        view = window.live_view()
    n = view.record_ids.size
    if n == 0:
        return []

    blocks = [*view.content, view.time_enc, view.geo_enc]
    fields = np.zeros((schema.m, n))
    for i, (cue, block) in enumerate(zip(cues, blocks)):
        if cue is not None:
            fields[i] = block @ cue.values
    weights = np.asarray(profile.weights.weights)
    total = weights @ fields

    order = np.lexsort((view.record_ids, -total))[:profile.k]
    root_m = math.sqrt(schema.m)
    return [
        ScoredResult(
            int(view.record_ids[j]),
            float(total[j]) / root_m,
            float(total[j]),
            tuple(fields[:, j].tolist()) if with_field_scores else None,
        )
        for j in order
    ]


def recall_at_k(retrieved: Iterable[int], truth: Sequence[int] | set[int], k: int) -> float:
    """
    |retrieved & truth| / k.

    Raises:
        InvalidArgumentError: truth does not hold exactly k ids
    """
    truth = set(truth)
    if k < 1 or len(truth) != k:
        raise InvalidArgumentError(f"ground truth must hold exactly k={k} ids, got {len(truth)}")
    return len(set(retrieved) & truth) / k
