"""
Sliding Window - rotating phase buckets over an append-only index

Time is cut into unit steps of length tau and the horizon is L steps. The
live records are those with t in (now - L*tau, now]. That interval touches
the L full steps behind the current one plus the current, partly filled step,
so the ring has L + 1 bucket slots of width pi/L each. A step is retired once
its whole interval lies at or below now - L*tau: the aperture (the shift n)
rotates by one bucket, the step's records are deactivated and its manifest
is erased. Stored vectors are never re-encoded.

The naive mode is kept for comparison: it re-encodes every live record
against a fresh origin at each boundary and rebuilds the index.
"""

import logging
import math
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator

import numpy as np

from orbit.ann import AnnConfig, CompactionSummary, build_index
from orbit.encoding import TWO_PI, CompositeSchema, TemporalScale, encode_geos, encode_times
from orbit.errors import ConfigError, InvalidArgumentError, SchemaError
from orbit.records import SpatRecord
from orbit.sync import ReadWriteLock

logger = logging.getLogger(__name__)


class WindowSentinel(Enum):
    EXPIRED = "expired"
    DISCARDED = "discarded"


EXPIRED = WindowSentinel.EXPIRED
DISCARDED = WindowSentinel.DISCARDED


class WindowMode(str, Enum):
    CIRCULAR = "circular"
    NAIVE = "naive"


@dataclass(frozen=True)
class WindowConfig:
    """
    Window geometry.

    Args:
        tau: Seconds per unit step
        bucket_count: Horizon length L in unit steps (the ring holds L + 1)
        t0: Epoch boundary; unit steps start at t0 + j*tau
    """

    tau: float
    bucket_count: int
    t0: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.tau) or self.tau <= 0:
            raise ConfigError(f"tau must be a positive number of seconds, got {self.tau}")
        if self.bucket_count < 2:
            raise ConfigError(f"bucket_count must be >= 2, got {self.bucket_count}")
        if not math.isfinite(self.t0):
            raise ConfigError("t0 must be finite")

    @property
    def alpha_t(self) -> float:
        return math.pi / (self.bucket_count * self.tau)

    @property
    def delta_theta(self) -> float:
        return math.pi / self.bucket_count

    @property
    def horizon(self) -> float:
        return self.bucket_count * self.tau

    @property
    def slot_count(self) -> int:
        """Ring slots: the L full steps of the horizon plus the current one."""
        return self.bucket_count + 1

    @property
    def scale(self) -> TemporalScale:
        return TemporalScale(self.alpha_t)

    def unit_of(self, t: float) -> int:
        """Index j of the unit step [t0 + j*tau, t0 + (j+1)*tau) holding t."""
        return math.floor((t - self.t0) / self.tau)

    def shift_for(self, now: float) -> int:
        """
        Aperture shift at ``now``: the oldest unit step still inside the horizon.

        Step j ends at t0 + (j+1)*tau, so it is past the horizon exactly when
        j + 1 <= unit_of(now) - L.
        """
        return max(0, self.unit_of(now) - self.bucket_count)


@dataclass
class BucketManifest:
    """
    Bucket header: ring slot, the unit step it currently holds and its records.

    start_offset and end_offset bound the NodeIds of the records (half-open).
    """

    bucket_index: int
    record_ids: list[int] = field(default_factory=list)
    start_offset: int = 0
    end_offset: int = 0
    unit: int | None = None

    def __len__(self) -> int:
        return len(self.record_ids)

    def add(self, record_id: int, node_id: int) -> None:
        if not self.record_ids:
            self.start_offset, self.end_offset = node_id, node_id + 1
        else:
            self.start_offset = min(self.start_offset, node_id)
            self.end_offset = max(self.end_offset, node_id + 1)
        self.record_ids.append(record_id)

    def erase(self) -> None:
        self.record_ids = []
        self.start_offset = self.end_offset = 0
        self.unit = None


@dataclass
class WindowState:
    config: WindowConfig
    shift_step: int = 0
    buckets: list[BucketManifest] = field(default_factory=list)
    last_advance_time: float | None = None
    last_ingest_time: float | None = None

    def __post_init__(self):
        if not self.buckets:
            self.buckets = [BucketManifest(i) for i in range(self.config.slot_count)]

    @property
    def phi(self) -> float:
        """Aperture shift, one of the 2L multiples of delta_theta."""
        return (self.shift_step % (2 * self.config.bucket_count)) * self.config.delta_theta

    @property
    def live_units(self) -> range:
        return range(self.shift_step, self.shift_step + self.config.slot_count)

    def manifest_for_unit(self, unit: int) -> BucketManifest:
        return self.buckets[unit % self.config.slot_count]

    def live_manifests(self) -> list[BucketManifest]:
        """Occupied manifests, oldest unit first."""
        occupied = [b for b in self.buckets if b.unit is not None]
        return sorted(occupied, key=lambda b: b.unit)


# ============================================================================
# PHASE ARITHMETIC
# ============================================================================

def phase_of(t: float, cfg: WindowConfig) -> float:
    """Absolute phase alpha_t * (t - t0) reduced to [0, 2pi)."""
    if not math.isfinite(t):
        raise InvalidArgumentError(f"timestamp must be finite, got {t}")
    return (cfg.alpha_t * (t - cfg.t0)) % TWO_PI


def active_phase(theta: float, state: WindowState) -> float:
    """Phase relative to the aperture: (theta - phi) mod 2pi."""
    return (theta - state.phi) % TWO_PI


def bucket_of(t: float, state: WindowState) -> int | WindowSentinel:
    """
    Relative bucket k = floor(theta*/delta_theta) of a timestamp, or EXPIRED.

    k runs over [0, L]; k = L is the current step once the horizon is full.
    Computed on integer unit steps, which equals the phase rule inside the
    window and also rejects timestamps a full revolution (or more) away.
    """
    if not math.isfinite(t):
        raise InvalidArgumentError(f"timestamp must be finite, got {t}")
    relative = state.config.unit_of(t) - state.shift_step
    if 0 <= relative < state.config.slot_count:
        return relative
    return EXPIRED


def live_count(state: WindowState) -> int:
    return sum(len(b) for b in state.buckets)


# ============================================================================
# WINDOW
# ============================================================================

@dataclass(frozen=True)
class MaintenanceReport:
    """Work done by one advance()."""

    time: float
    shift_step: int
    retired_slots: tuple[int, ...] = ()
    retired_records: int = 0
    deactivated: int = 0
    manifest_erasures: int = 0
    re_encodings: int = 0
    rebuild_distance_computations: int = 0
    compaction_dropped: int = 0
    compaction_distance_computations: int = 0

    @property
    def operations(self) -> int:
        """Per-boundary maintenance operations; compaction is counted separately."""
        return self.deactivated + self.manifest_erasures + self.re_encodings + self.rebuild_distance_computations


@dataclass(frozen=True)
class LiveView:
    """Raw live records as matrices, for brute-force scoring."""

    record_ids: np.ndarray
    content: tuple[np.ndarray, ...]
    time_enc: np.ndarray
    geo_enc: np.ndarray
    timestamps: np.ndarray


class SlidingWindow:
    """
    Live window of records over one composite index.

    advance() and ingest() are exclusive writers; queries hold the read side
    of the same lock through reading() and see either the pre-advance or the
    post-advance state.
    """

    def __init__(
        self,
        schema: CompositeSchema,
        config: WindowConfig,
        ann_config: AnnConfig,
        kind: str = "hnsw",
        mode: WindowMode | str = WindowMode.CIRCULAR,
        lenient: bool = False,
    ):
        if ann_config.dim != schema.dim:
            raise SchemaError(f"index dim {ann_config.dim} does not match schema dim {schema.dim}")
        self.schema = schema
        self.config = config
        self.ann_config = ann_config
        self.kind = kind
        self.mode = WindowMode(mode)
        self.lenient = lenient
        self.state = WindowState(config)
        self.index = build_index(ann_config, kind)
        self.reports: list[MaintenanceReport] = []
        self._records: dict[int, SpatRecord] = {}
        self._lock = ReadWriteLock()
        self._version = 0
        self._view: tuple[int, LiveView] | None = None
        self._view_lock = threading.Lock()

    @property
    def scale(self) -> TemporalScale:
        return self.config.scale

    @property
    def time_origin(self) -> float:
        """Origin the stored time blocks were encoded against."""
        if self.mode is WindowMode.NAIVE:
            return self.config.t0 + self.state.shift_step * self.config.tau
        return self.config.t0

    @contextmanager
    def reading(self) -> Iterator[None]:
        with self._lock.read():
            yield

    @contextmanager
    def exclusive(self) -> Iterator[None]:
        with self._lock.write():
            yield

    def live_count(self) -> int:
        with self._lock.read():
            return live_count(self.state)

    def record(self, record_id: int) -> SpatRecord:
        return self._records[record_id]

    def live_records(self) -> list[SpatRecord]:
        """Live records in bucket order (oldest unit first, ingest order within)."""
        with self._lock.read():
            return [self._records[rid] for b in self.state.live_manifests() for rid in b.record_ids]

    def contains(self, t: float) -> bool:
        return bucket_of(t, self.state) is not EXPIRED

    def advance(self, now: float) -> list[int]:
        """
        Moves the aperture to ``now`` and retires the steps that left the horizon.

        A manifest is retired once every timestamp its step can hold is at or
        below now - L*tau: its records are deactivated in the index and the
        manifest is erased. Calling again with the same ``now`` does nothing.

        Returns:
            list[int]: retired ring slots, oldest first

        Raises:
            InvalidArgumentError: now is not finite or earlier than the last advance
        """
        if not math.isfinite(now):
            raise InvalidArgumentError(f"now must be finite, got {now}")
        with self._lock.write():
            state = self.state
            if state.last_advance_time is not None and now < state.last_advance_time:
                raise InvalidArgumentError(
                    f"advance moves backwards: {now} < {state.last_advance_time}"
                )
            state.last_advance_time = now
            target = self.config.shift_for(now)
            if target <= state.shift_step:
                return []

            state.shift_step = target
            retired_slots: list[int] = []
            retired_records = deactivated = erasures = 0
            for manifest in state.live_manifests():
                if manifest.unit >= target:
                    continue
                deactivated += self.index.deactivate(manifest.record_ids)
                for record_id in manifest.record_ids:
                    self._records.pop(record_id, None)
                logger.info(
                    "Retired bucket %d (unit %d): %d records", manifest.bucket_index, manifest.unit, len(manifest)
                )
                retired_records += len(manifest)
                retired_slots.append(manifest.bucket_index)
                manifest.erase()
                erasures += 1

            re_encodings = rebuild_work = 0
            compaction: CompactionSummary | None = None
            if self.mode is WindowMode.NAIVE:
                re_encodings, rebuild_work = self._rebuild()
            else:
                compaction = self.index.maybe_compact()
                if compaction is not None:
                    self._refresh_offsets()

            self.reports.append(
                MaintenanceReport(
                    time=now,
                    shift_step=target,
                    retired_slots=tuple(retired_slots),
                    retired_records=retired_records,
                    deactivated=deactivated,
                    manifest_erasures=erasures,
                    re_encodings=re_encodings,
                    rebuild_distance_computations=rebuild_work,
                    compaction_dropped=compaction.dropped if compaction else 0,
                    compaction_distance_computations=compaction.distance_computations if compaction else 0,
                )
            )
            self._version += 1
            return retired_slots

    def ingest(self, record: SpatRecord) -> int | WindowSentinel:
        """
        Encodes a record, inserts it and appends it to its bucket manifest.

        Returns:
            int | WindowSentinel: relative bucket k in [0, L], or DISCARDED

        Raises:
            InvalidArgumentError: timestamp older than the last ingest (strict mode)
        """
        t = record.timestamp
        if not math.isfinite(t):
            raise InvalidArgumentError(f"timestamp must be finite, got {t}")
        with self._lock.write():
            state = self.state
            if state.last_ingest_time is not None and t < state.last_ingest_time:
                if not self.lenient:
                    raise InvalidArgumentError(
                        f"record {record.record_id} at {t} is older than the last ingest {state.last_ingest_time}"
                    )
                logger.warning("Out-of-order record %d accepted in lenient mode", record.record_id)
            bucket = bucket_of(t, state)
            if bucket is EXPIRED:
                logger.debug("Discarded record %d at %s: outside the live window", record.record_id, t)
                return DISCARDED

            vector = self.schema.encode(record.content, t, record.location, self.scale, self.time_origin)
            node_id = self.index.insert(vector.values, record.record_id)
            unit = self.config.unit_of(t)
            manifest = state.manifest_for_unit(unit)
            if manifest.unit is None:
                manifest.unit = unit
            manifest.add(record.record_id, node_id)
            self._records[record.record_id] = record
            if state.last_ingest_time is None or t > state.last_ingest_time:
                state.last_ingest_time = t
            self._version += 1
            return bucket

    def push(self, record: SpatRecord) -> int | WindowSentinel:
        """advance() to the record's time, then ingest() it."""
        with self._lock.write():
            self.advance(record.timestamp)
            return self.ingest(record)

    def live_view(self) -> LiveView:
        """Matrices of the live records, cached until the window changes."""
        with self._lock.read(), self._view_lock:
            cached = self._view
            if cached is not None and cached[0] == self._version:
                return cached[1]
            records = [self._records[rid] for b in self.state.live_manifests() for rid in b.record_ids]
            view = self._build_view(records)
            self._view = (self._version, view)
            return view

    def _build_view(self, records: list[SpatRecord]) -> LiveView:
        n = len(records)
        content = tuple(
            np.array([r.content[i] for r in records], dtype=np.float64).reshape(n, dim)
            for i, dim in enumerate(self.schema.content_dims)
        )
        timestamps = np.array([r.timestamp for r in records], dtype=np.float64)
        latitude = np.array([r.location.latitude for r in records], dtype=np.float64)
        longitude = np.array([r.location.longitude for r in records], dtype=np.float64)
        return LiveView(
            record_ids=np.array([r.record_id for r in records], dtype=np.int64),
            content=content,
            time_enc=encode_times(timestamps - self.time_origin, self.scale).reshape(n, 2),
            geo_enc=encode_geos(latitude, longitude).reshape(n, 3),
            timestamps=timestamps,
        )

    def _rebuild(self) -> tuple[int, int]:
        """Naive maintenance: re-encode all live records against the new origin into a fresh index."""
        index = build_index(self.ann_config, self.kind)
        origin = self.time_origin
        re_encodings = 0
        for manifest in self.state.live_manifests():
            ids = manifest.record_ids
            manifest.record_ids = []
            for record_id in ids:
                record = self._records[record_id]
                vector = self.schema.encode(record.content, record.timestamp, record.location, self.scale, origin)
                manifest.add(record_id, index.insert(vector.values, record_id))
                re_encodings += 1
        self.index = index
        return re_encodings, index.counters.insert_distance_computations

    def _refresh_offsets(self) -> None:
        for manifest in self.state.live_manifests():
            nodes = [self.index.node_of(rid) for rid in manifest.record_ids]
            manifest.start_offset = min(nodes)
            manifest.end_offset = max(nodes) + 1

    @classmethod
    def restore(
        cls,
        schema: CompositeSchema,
        state: WindowState,
        records: list[SpatRecord],
        ann_config: AnnConfig,
        kind: str = "hnsw",
        mode: WindowMode | str = WindowMode.CIRCULAR,
        lenient: bool = False,
    ) -> "SlidingWindow":
        """
        Rebuilds a window from a saved state and its live records.

        Records are re-inserted in manifest order, so the same inputs always
        give the same index.
        """
        window = cls(schema, state.config, ann_config, kind=kind, mode=mode, lenient=lenient)
        by_id = {r.record_id: r for r in records}
        window.state = WindowState(
            config=state.config,
            shift_step=state.shift_step,
            buckets=[BucketManifest(b.bucket_index, unit=b.unit) for b in state.buckets],
            last_advance_time=state.last_advance_time,
            last_ingest_time=state.last_ingest_time,
        )
        for saved in sorted((b for b in state.buckets if b.unit is not None), key=lambda b: b.unit):
            manifest = window.state.buckets[saved.bucket_index]
            for record_id in saved.record_ids:
                if record_id not in by_id:
                    raise SchemaError(f"manifest references unknown record {record_id}")
                record = by_id[record_id]
                vector = schema.encode(record.content, record.timestamp, record.location, window.scale, window.time_origin)
                manifest.add(record_id, window.index.insert(vector.values, record_id))
                window._records[record_id] = record
        return window
