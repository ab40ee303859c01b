"""
Orbit - rotary spatiotemporal vector retrieval

Content embeddings, a rotary time encoding and a unit-sphere location
encoding share one composite vector; weighted multi-modal queries run as a
single inner-product search over a sliding window of phase buckets.
"""

from orbit.ann import AnnConfig, FlatIndex, HnswIndex, SearchResult, SearchStats, build_index
from orbit.encoding import (
    CompositeSchema,
    GeoCoordinate,
    ModalityEmbedding,
    PrecisionSpec,
    TemporalScale,
    WeightVector,
)
from orbit.errors import ConfigError, InvalidArgumentError, OrbitError, SchemaError, SnapshotError
from orbit.records import SpatRecord
from orbit.retrieval import QueryProfile, QueryResponse, ScoredResult, exact_topk, query, recall_at_k
from orbit.window import DISCARDED, EXPIRED, SlidingWindow, WindowConfig, WindowMode

__all__ = [
    "AnnConfig",
    "CompositeSchema",
    "ConfigError",
    "DISCARDED",
    "EXPIRED",
    "FlatIndex",
    "GeoCoordinate",
    "HnswIndex",
    "InvalidArgumentError",
    "ModalityEmbedding",
    "OrbitError",
    "PrecisionSpec",
    "QueryProfile",
    "QueryResponse",
    "SchemaError",
    "ScoredResult",
    "SearchResult",
    "SearchStats",
    "SlidingWindow",
    "SnapshotError",
    "SpatRecord",
    "TemporalScale",
    "WeightVector",
    "WindowConfig",
    "WindowMode",
    "build_index",
    "exact_topk",
    "query",
    "recall_at_k",
]
