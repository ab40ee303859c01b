"""
Synthetic Dataset - seeded spatiotemporal records and weighted queries

Timestamps are uniform over the configured span and sorted, coordinates are
uniform in the bounding box, and content blocks are unit vectors drawn from
one of three distributions:

- random_unit: isotropic Gaussian directions
- gaussian_clusters: noisy copies of a few centroids per modality
- moderate_blend: half the records match one anchor closely in a single
  modality ("specialists"), the other half match it moderately in every
  modality ("generalists"); the weighted sum favours generalists while
  every single-modality ranking favours specialists
"""

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from config.settings import ExperimentConfig, GeoBox
from orbit.encoding import GeoCoordinate, ModalityEmbedding, WeightVector
from orbit.errors import ConfigError
from orbit.records import SpatRecord
from orbit.retrieval import QueryProfile

_SPECIALIST_NOISE = 0.3
_GENERALIST_NOISE = 1.2
_ANCHOR_COUNT = 8


def _unit_rows(matrix: np.ndarray) -> np.ndarray:
    return matrix / np.linalg.norm(matrix, axis=1, keepdims=True)


def _noisy(rng: np.random.Generator, centers: np.ndarray, sigma: float) -> np.ndarray:
    """Unit vectors at angle ~atan(sigma) from their centers."""
    dim = centers.shape[1]
    noise = rng.standard_normal(centers.shape) * (sigma / math.sqrt(dim))
    return _unit_rows(centers + noise)


def _check_box(box: GeoBox) -> None:
    if not (-90 <= box.lat_min <= box.lat_max <= 90 and -180 <= box.lon_min <= box.lon_max < 180):
        raise ConfigError(f"invalid geo box: {box}")


def anchors(cfg: ExperimentConfig) -> list[np.ndarray]:
    """Per-modality anchor directions of the moderate_blend distribution."""
    rng = np.random.default_rng([cfg.seed, 1])
    return [_unit_rows(rng.standard_normal((_ANCHOR_COUNT, d))) for d in cfg.schema_.content_dims]


def _content(cfg: ExperimentConfig, rng: np.random.Generator, n: int) -> list[np.ndarray]:
    dims = cfg.schema_.content_dims
    data = cfg.data
    if data.distribution == 'random_unit':
        return [_unit_rows(rng.standard_normal((n, d))) for d in dims]

    if data.distribution == 'gaussian_clusters':
        blocks = []
        for d in dims:
            centroids = _unit_rows(rng.standard_normal((data.cluster_count, d)))
            members = rng.integers(0, data.cluster_count, size=n)
            blocks.append(_noisy(rng, centroids[members], data.cluster_spread * math.sqrt(d)))
        return blocks

    # moderate_blend
    anchor_sets = anchors(cfg)
    picks = rng.integers(0, _ANCHOR_COUNT, size=n)
    specialist = rng.random(n) < 0.5
    focus = rng.integers(0, len(dims), size=n)
    blocks = []
    for i, (d, anchor_set) in enumerate(zip(dims, anchor_sets)):
        block = _noisy(rng, anchor_set[picks], _GENERALIST_NOISE)
        close = specialist & (focus == i)
        far = specialist & (focus != i)
        block[close] = _noisy(rng, anchor_set[picks[close]], _SPECIALIST_NOISE)
        block[far] = _unit_rows(rng.standard_normal((int(far.sum()), d)))
        blocks.append(block)
    return blocks


def generate_dataset(cfg: ExperimentConfig, record_count: int | None = None) -> list[SpatRecord]:
    """
    Deterministic record stream, sorted by timestamp; ids follow stream order.

    Args:
        cfg: Experiment config (data, schema and window sections are used)
        record_count: Overrides cfg.data.record_count

    Raises:
        ConfigError: invalid bounding box
    """
    _check_box(cfg.data.geo_box)
    n = cfg.data.record_count if record_count is None else record_count
    if n == 0:
        return []
    rng = np.random.default_rng(cfg.seed)
    box = cfg.data.geo_box

    start = cfg.window.t0
    timestamps = np.sort(rng.uniform(start, start + cfg.data.span_seconds, size=n))
    latitude = np.radians(rng.uniform(box.lat_min, box.lat_max, size=n))
    longitude = np.radians(rng.uniform(box.lon_min, box.lon_max, size=n))
    content = _content(cfg, rng, n)

    return [
        SpatRecord(
            record_id=i,
            content=tuple(block[i] for block in content),
            timestamp=float(timestamps[i]),
            location=GeoCoordinate(float(latitude[i]), float(longitude[i])),
        )
        for i in range(n)
    ]


@dataclass(frozen=True, eq=False)
class QuerySpec:
    """A generated query, independent of k and ef."""

    content: tuple[np.ndarray, ...]
    time_cue: float
    location: GeoCoordinate
    weights: np.ndarray

    def profile(self, k: int, ef_search: int, weights: WeightVector | None = None, normalize: bool = False) -> QueryProfile:
        cues = tuple(ModalityEmbedding(block, mid) for mid, block in enumerate(self.content, start=1))
        return QueryProfile(
            content_cues=cues,
            time_cue=self.time_cue,
            location_cue=self.location,
            weights=weights if weights is not None else WeightVector(self.weights),
            k=k,
            ef_search=max(ef_search, k),
            normalize=normalize,
        )


def generate_queries(
    cfg: ExperimentConfig,
    records: list[SpatRecord],
    count: int | None = None,
    seed_offset: int = 0,
) -> list[QuerySpec]:
    """
    Queries anchored on random records: noisy content cues, the record's
    time and place, and weights drawn from cfg.queries.weight_levels.

    Under moderate_blend the content cues are the record's anchors instead.
    """
    count = cfg.queries.count if count is None else count
    if not records or count == 0:
        return []
    rng = np.random.default_rng([cfg.seed, 2, seed_offset])
    levels = np.asarray(cfg.queries.weight_levels, dtype=np.float64)
    m = cfg.schema_.m
    anchor_sets = anchors(cfg) if cfg.data.distribution == 'moderate_blend' else None

    queries = []
    for _ in range(count):
        base = records[int(rng.integers(len(records)))]
        if anchor_sets is not None:
            pick = int(rng.integers(_ANCHOR_COUNT))
            content = tuple(anchor_set[pick] for anchor_set in anchor_sets)
        else:
            content = tuple(
                _noisy(rng, block[None, :], cfg.queries.cue_noise * math.sqrt(block.size))[0]
                if cfg.queries.cue_noise > 0 else block
                for block in base.content
            )
        queries.append(QuerySpec(content, base.timestamp, base.location, rng.choice(levels, size=m)))
    return queries


def generate_timestamps(cfg: ExperimentConfig) -> tuple[np.ndarray, np.ndarray]:
    """Timestamps-only dataset for the temporal scale sweep: (records, queries), both sorted."""
    sweep = cfg.alpha_sweep
    rng = np.random.default_rng([cfg.seed, 3])
    start = cfg.window.t0
    times = np.sort(rng.uniform(start, start + sweep.span_seconds, size=sweep.record_count))
    queries = np.sort(rng.uniform(start, start + sweep.span_seconds, size=sweep.query_count))
    return times, queries


def records_frame(records: list[SpatRecord]) -> pd.DataFrame:
    """Flat table of a record stream (degrees for readability)."""
    rows = []
    for record in records:
        row = {
            'record_id': record.record_id,
            'timestamp': record.timestamp,
            'latitude_deg': math.degrees(record.location.latitude),
            'longitude_deg': math.degrees(record.location.longitude),
        }
        for mid, block in enumerate(record.content, start=1):
            row.update({f'c{mid}_{j}': float(v) for j, v in enumerate(block)})
        rows.append(row)
    return pd.DataFrame(rows)
