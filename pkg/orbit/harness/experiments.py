"""
Experiment Drivers - streaming ablation, sweeps and method comparison

Every driver takes an ExperimentConfig and returns MetricRow series.
Operation counts (distance computations, maintenance operations) are the
primary measurements; wall-clock latency is reported alongside.
"""

import logging
import math
import time
from typing import Iterable, Sequence, TypeVar

import numpy as np
from tqdm import tqdm

from config.settings import ExperimentConfig, settings
from orbit.ann import AnnConfig
from orbit.baselines import (
    FilteredIndex,
    FilterPredicate,
    HybridConfig,
    HybridIndex,
    filtered_search,
    hybrid_search,
)
from orbit.encoding import TWO_PI, CompositeSchema, WeightVector
from orbit.harness.dataset import QuerySpec, generate_dataset, generate_queries, generate_timestamps
from orbit.harness.metrics import MetricRow
from orbit.records import SpatRecord
from orbit.retrieval import exact_topk, query, recall_at_k
from orbit.window import SlidingWindow, WindowConfig, WindowMode

logger = logging.getLogger(__name__)

METHODS = ('unified', 'filtered', 'hybrid')

T = TypeVar('T')


def _progress(items: Iterable[T], desc: str, total: int | None = None) -> Iterable[T]:
    return tqdm(items, desc=desc, total=total, disable=not settings.HARNESS.SHOW_PROGRESS, leave=False)


def _ms(seconds: float) -> float:
    return seconds * 1000.0


def schema_for(cfg: ExperimentConfig) -> CompositeSchema:
    return CompositeSchema(tuple(cfg.schema_.content_dims))


def ann_config_for(cfg: ExperimentConfig, dim: int) -> AnnConfig:
    return AnnConfig(
        dim=dim,
        max_neighbors=cfg.ann.max_neighbors,
        ef_construction=cfg.ann.ef_construction,
        default_ef_search=cfg.ann.ef_search,
        seed=cfg.seed,
        compaction_threshold=cfg.ann.compaction_threshold,
    )


def new_window(cfg: ExperimentConfig, mode: WindowMode | str = WindowMode.CIRCULAR) -> SlidingWindow:
    schema = schema_for(cfg)
    window_cfg = WindowConfig(cfg.window.tau, cfg.window.bucket_count, cfg.window.t0)
    return SlidingWindow(schema, window_cfg, ann_config_for(cfg, schema.dim), kind=cfg.ann.kind, mode=mode)


def build_window(
    cfg: ExperimentConfig,
    records: Sequence[SpatRecord],
    mode: WindowMode | str = WindowMode.CIRCULAR,
) -> SlidingWindow:
    """Streams records into a fresh window (advance to each record, then ingest)."""
    window = new_window(cfg, mode)
    for record in _progress(records, 'ingest', total=len(records)):
        window.push(record)
    return window


def _median(values: list[float]) -> float:
    return float(np.median(values)) if values else 0.0


def _mean(values: list[float]) -> float:
    return float(np.mean(values)) if values else 0.0


# ============================================================================
# STREAMING ABLATION
# ============================================================================

def run_streaming_ablation(cfg: ExperimentConfig) -> list[MetricRow]:
    """
    Month-by-month stream in circular and naive mode, for each dataset size.

    Each row covers one month: the maintenance done by the advance into it,
    the inserts of its records and the queries answered at its end.
    """
    streaming = cfg.streaming
    tau = cfg.window.tau
    rows: list[MetricRow] = []

    for size in streaming.sizes:
        stream_cfg = cfg.model_copy(
            update={'data': cfg.data.model_copy(update={'record_count': size, 'span_seconds': streaming.months * tau})}
        )
        records = generate_dataset(stream_cfg)
        months: list[list[SpatRecord]] = [[] for _ in range(streaming.months)]
        for record in records:
            months[min(int((record.timestamp - cfg.window.t0) // tau), streaming.months - 1)].append(record)

        for mode in (WindowMode.CIRCULAR, WindowMode.NAIVE):
            logger.info("Streaming ablation: %d records, %s mode", size, mode.value)
            window = new_window(stream_cfg, mode)
            for month, batch in enumerate(_progress(months, f'{mode.value} {size}')):
                maintenance_ops = retired = 0
                started = time.perf_counter()
                if month > 0:
                    before = len(window.reports)
                    window.advance(cfg.window.t0 + month * tau)
                    for report in window.reports[before:]:
                        maintenance_ops += report.operations
                        retired += report.retired_records
                maintenance_ms = _ms(time.perf_counter() - started)

                work_before = window.index.counters.insert_distance_computations
                started = time.perf_counter()
                for record in batch:
                    window.push(record)
                insert_ms = _ms(time.perf_counter() - started)
                insert_ops = window.index.counters.insert_distance_computations - work_before

                queries = generate_queries(stream_cfg, window.live_records(), streaming.queries_per_month, month)
                recall, ops, latency = _score_unified(window, queries, streaming.k, cfg.ann.ef_search)
                rows.append(
                    MetricRow(
                        experiment_id=cfg.experiment_id,
                        method=mode.value,
                        step=month,
                        dataset_size=size,
                        live_records=window.live_count(),
                        insert_ops=insert_ops,
                        insert_latency_ms=insert_ms,
                        retired_records=retired,
                        maintenance_ops=maintenance_ops,
                        maintenance_latency_ms=maintenance_ms,
                        query_ops=_median(ops),
                        query_latency_ms=_median(latency),
                        distance_computations=int(insert_ops + sum(ops)),
                        recall=recall,
                    )
                )
    return rows


def _score_unified(
    window: SlidingWindow, queries: list[QuerySpec], k: int, ef_search: int
) -> tuple[dict[int, float], list[float], list[float]]:
    k = min(k, window.live_count())
    if k == 0 or not queries:
        return {}, [], []
    recalls, ops, latency = [], [], []
    for spec in queries:
        profile = spec.profile(k, ef_search)
        truth = [r.record_id for r in exact_topk(profile, window)]
        started = time.perf_counter()
        response = query(profile, window)
        latency.append(_ms(time.perf_counter() - started))
        ops.append(response.stats.distance_computations)
        recalls.append(recall_at_k(response.ids, truth, k))
    return {k: _mean(recalls)}, ops, latency


def maintenance_ratios(rows: list[MetricRow]) -> dict[int, float]:
    """Naive over circular maintenance operations per dataset size, over boundaries with a retirement."""
    ratios = {}
    for size in sorted({row.dataset_size for row in rows}):
        circular = {row.step: row for row in rows if row.dataset_size == size and row.method == WindowMode.CIRCULAR.value}
        naive = {row.step: row for row in rows if row.dataset_size == size and row.method == WindowMode.NAIVE.value}
        steps = [s for s, row in circular.items() if row.retired_records > 0 and s in naive]
        circular_ops = sum(circular[s].maintenance_ops for s in steps)
        if circular_ops:
            ratios[size] = sum(naive[s].maintenance_ops for s in steps) / circular_ops
    return ratios


# ============================================================================
# SWEEPS
# ============================================================================

def run_ef_sweep(cfg: ExperimentConfig, k: int = 10) -> list[MetricRow]:
    """Mean recall@k and median query cost of the unified method per ef_search value."""
    records = generate_dataset(cfg)
    window = build_window(cfg, records)
    queries = generate_queries(cfg, window.live_records())
    k = min(k, window.live_count())
    if k == 0:
        return []
    truths = [[r.record_id for r in exact_topk(spec.profile(k, k), window)] for spec in queries]

    rows = []
    for ef in cfg.ann.ef_sweep:
        recalls, ops, latency = [], [], []
        for spec, truth in zip(queries, truths):
            started = time.perf_counter()
            response = query(spec.profile(k, ef), window)
            latency.append(_ms(time.perf_counter() - started))
            ops.append(response.stats.distance_computations)
            recalls.append(recall_at_k(response.ids, truth, k))
        rows.append(
            MetricRow(
                experiment_id=cfg.experiment_id,
                method='unified',
                step=ef,
                dataset_size=len(records),
                live_records=window.live_count(),
                query_ops=_median(ops),
                query_latency_ms=_median(latency),
                distance_computations=int(sum(ops)),
                recall={k: _mean(recalls)},
            )
        )
        logger.info("ef_search=%d: recall@%d=%.3f", ef, k, rows[-1].recall[k])
    return rows


def _single_precision_encode(times: np.ndarray, alpha_t: float, origin: float) -> np.ndarray:
    phases = ((alpha_t * (times - origin)) % TWO_PI).astype(np.float32)
    return np.stack([np.cos(phases), np.sin(phases)], axis=-1)


def run_alpha_sweep(cfg: ExperimentConfig) -> list[MetricRow]:
    """
    Recall of exact search over single-precision time encodings against the
    true temporal-proximity ranking, per alpha_t.

    Small scales collapse phase gaps below float32 resolution; large scales
    wrap lags past half a revolution.
    """
    sweep = cfg.alpha_sweep
    times, query_times = generate_timestamps(cfg)
    ids = np.arange(times.size)
    k = min(sweep.k, times.size)
    truths = [set(np.lexsort((ids, np.abs(times - tq)))[:k].tolist()) for tq in query_times]

    rows = []
    for alpha_t in sweep.alphas:
        encoded = _single_precision_encode(times, alpha_t, cfg.window.t0)
        cues = _single_precision_encode(query_times, alpha_t, cfg.window.t0)
        recalls = []
        for cue, truth in zip(cues, truths):
            scores = encoded @ cue
            top = np.lexsort((ids, -scores))[:k]
            recalls.append(recall_at_k(top.tolist(), truth, k))
        rows.append(
            MetricRow(
                experiment_id=cfg.experiment_id,
                method='unified',
                step=alpha_t,
                dataset_size=int(times.size),
                query_ops=float(times.size),
                distance_computations=int(times.size * query_times.size),
                recall={k: _mean(recalls)},
            )
        )
        logger.info("alpha_t=%.3g: recall@%d=%.3f", alpha_t, k, rows[-1].recall[k])
    return rows


def run_weight_ablation(cfg: ExperimentConfig, k: int = 10) -> list[MetricRow]:
    """Recall@k with the query's own weights versus uniform weights; truth always uses the query's weights."""
    records = generate_dataset(cfg)
    window = build_window(cfg, records)
    queries = generate_queries(cfg, window.live_records())
    k = min(k, window.live_count())
    if k == 0:
        return []
    uniform = WeightVector.uniform(cfg.schema_.m)

    results: dict[str, tuple[list[float], list[float]]] = {'weighted': ([], []), 'uniform': ([], [])}
    for spec in queries:
        truth = [r.record_id for r in exact_topk(spec.profile(k, k), window)]
        for name, weights in (('weighted', None), ('uniform', uniform)):
            response = query(spec.profile(k, cfg.ann.ef_search, weights=weights), window)
            results[name][0].append(recall_at_k(response.ids, truth, k))
            results[name][1].append(response.stats.distance_computations)

    return [
        MetricRow(
            experiment_id=cfg.experiment_id,
            method=name,
            step=cfg.ann.ef_search,
            dataset_size=len(records),
            live_records=window.live_count(),
            query_ops=_median(ops),
            distance_computations=int(sum(ops)),
            recall={k: _mean(recalls)},
        )
        for name, (recalls, ops) in results.items()
    ]


# ============================================================================
# METHOD COMPARISON
# ============================================================================

def selected_methods(cfg: ExperimentConfig) -> tuple[str, ...]:
    """Methods named by cfg.method; 'all' runs every method."""
    return METHODS if cfg.method == 'all' else (cfg.method,)


def run_method_comparison(cfg: ExperimentConfig, methods: Sequence[str] = METHODS) -> list[MetricRow]:
    """
    Unified, filtered and hybrid search on the same live records and queries.

    Ground truth is the exact weighted ranking; recall is reported for every
    k in cfg.queries.k_list (capped at the live count).
    """
    records = generate_dataset(cfg)
    window = build_window(cfg, records)
    live = window.live_records()
    queries = generate_queries(cfg, live)
    k_list = sorted({min(k, len(live)) for k in cfg.queries.k_list} - {0})
    if not k_list or not queries:
        return []
    top_k = k_list[-1]
    ef = max(cfg.ann.ef_search, top_k)
    schema = window.schema
    content_count = len(schema.content_dims)

    filtered = hybrid = None
    if 'filtered' in methods:
        filtered = FilteredIndex.from_records(schema, window.ann_config, _progress(live, 'filtered index'))
    if 'hybrid' in methods:
        hybrid = HybridIndex.from_records(
            schema, window.ann_config, window.scale, _progress(live, 'hybrid index'), window.time_origin
        )
    hybrid_cfg = HybridConfig(
        per_modality_k=max(cfg.baselines.per_modality_k, top_k),
        merge_rule=cfg.baselines.merge_rule,
        rrf_constant=cfg.baselines.rrf_constant,
    )
    half_width = cfg.baselines.filter_time_fraction * cfg.data.span_seconds / 2
    box = cfg.data.geo_box
    geo_box = tuple(math.radians(v) for v in (box.lat_min, box.lat_max, box.lon_min, box.lon_max))

    recalls = {m: {k: [] for k in k_list} for m in methods}
    ops = {m: [] for m in methods}
    latency = {m: [] for m in methods}
    for spec in _progress(queries, 'queries'):
        profile = spec.profile(top_k, ef)
        truth = [r.record_id for r in exact_topk(profile, window)]
        for method in methods:
            started = time.perf_counter()
            if method == 'unified':
                response = query(profile, window)
                found, stats = response.ids, response.stats
            elif method == 'filtered':
                pred = FilterPredicate((spec.time_cue - half_width, spec.time_cue + half_width), geo_box)
                content_query = filtered.content_query(profile.content_cues, spec.weights[:content_count])
                result = filtered_search(content_query, pred, top_k, ef, filtered)
                found, stats = result.ids, result.stats
            else:
                cues = hybrid.cues_for(profile.content_cues, spec.time_cue, spec.location)
                response = hybrid_search(cues, profile.weights, top_k, ef, hybrid_cfg, hybrid)
                found, stats = response.ids, response.stats
            latency[method].append(_ms(time.perf_counter() - started))
            ops[method].append(stats.distance_computations)
            for k in k_list:
                recalls[method][k].append(recall_at_k(found[:k], truth[:k], k))

    rows = []
    for method in methods:
        rows.append(
            MetricRow(
                experiment_id=cfg.experiment_id,
                method=method,
                step=ef,
                dataset_size=len(records),
                live_records=len(live),
                query_ops=_median(ops[method]),
                query_latency_ms=_median(latency[method]),
                distance_computations=int(sum(ops[method])),
                recall={k: _mean(values) for k, values in recalls[method].items()},
            )
        )
        logger.info("%s: recall@%d=%.3f, median distance computations %.0f",
                    method, top_k, rows[-1].recall[top_k], rows[-1].query_ops)
    return rows
