"""
Window Snapshot - binary save and restore of a live window

Layout (little-endian):

    magic   4 bytes  b"ORBW"
    version u32
    crc32   u32      over everything after this field
    then sections, each: tag u32, length u64, payload

Sections: schema, window state, manifests, records, index config. The index
itself is not stored; restore() rebuilds it from the live records in
manifest order, which is deterministic.
"""

import io
import logging
import struct
import zlib
from pathlib import Path

import numpy as np

from orbit.ann import AnnConfig
from orbit.encoding import CompositeSchema, GeoCoordinate
from orbit.errors import OrbitError, SnapshotError
from orbit.records import SpatRecord
from orbit.window import BucketManifest, SlidingWindow, WindowConfig, WindowMode, WindowState

logger = logging.getLogger(__name__)

MAGIC = b"ORBW"
FORMAT_VERSION = 1

_SCHEMA, _WINDOW, _MANIFESTS, _RECORDS, _INDEX = 1, 2, 3, 4, 5
_KINDS = ("hnsw", "flat")
_MODES = (WindowMode.CIRCULAR, WindowMode.NAIVE)
_NAN = float("nan")


class _Reader:
    def __init__(self, data: bytes, what: str):
        self._buf = io.BytesIO(data)
        self._what = what

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        chunk = self._buf.read(size)
        if len(chunk) != size:
            raise SnapshotError(f"truncated {self._what} section")
        values = struct.unpack(fmt, chunk)
        return values[0] if len(values) == 1 else values

    def array(self, count: int, dtype: str) -> np.ndarray:
        size = count * np.dtype(dtype).itemsize
        chunk = self._buf.read(size)
        if len(chunk) != size:
            raise SnapshotError(f"truncated {self._what} section")
        return np.frombuffer(chunk, dtype=dtype).copy()

    def done(self) -> None:
        if self._buf.read(1):
            raise SnapshotError(f"trailing bytes in {self._what} section")


def _section(tag: int, payload: bytes) -> bytes:
    return struct.pack("<IQ", tag, len(payload)) + payload


def _optional(value: float | None) -> float:
    return _NAN if value is None else float(value)


def snapshot(window: SlidingWindow, path: str | Path) -> Path:
    """
    Writes the window's schema, state, manifests, live records and index config.

    Holds the window's write side while serialising.
    """
    path = Path(path)
    with window.exclusive():
        state = window.state
        cfg = state.config
        schema = window.schema

        schema_bytes = struct.pack("<I", len(schema.content_dims)) + struct.pack(
            f"<{len(schema.content_dims)}I", *schema.content_dims
        )
        window_bytes = struct.pack(
            "<dIdQddBB",
            cfg.tau,
            cfg.bucket_count,
            cfg.t0,
            state.shift_step,
            _optional(state.last_advance_time),
            _optional(state.last_ingest_time),
            _MODES.index(window.mode),
            int(window.lenient),
        )

        manifest_bytes = bytearray(struct.pack("<I", len(state.buckets)))
        for manifest in state.buckets:
            manifest_bytes += struct.pack(
                "<IBqI",
                manifest.bucket_index,
                manifest.unit is not None,
                manifest.unit if manifest.unit is not None else 0,
                len(manifest.record_ids),
            )
            manifest_bytes += np.asarray(manifest.record_ids, dtype="<i8").tobytes()

        records = [window.record(rid) for m in state.live_manifests() for rid in m.record_ids]
        record_bytes = bytearray(struct.pack("<Q", len(records)))
        for record in records:
            record_bytes += struct.pack(
                "<qddd", record.record_id, record.timestamp, record.location.latitude, record.location.longitude
            )
            for block in record.content:
                record_bytes += np.asarray(block, dtype="<f8").tobytes()

        ann = window.ann_config
        index_bytes = struct.pack(
            "<IIIqdB",
            ann.max_neighbors,
            ann.ef_construction,
            ann.default_ef_search,
            ann.seed,
            ann.compaction_threshold,
            _KINDS.index(window.kind),
        )

        body = b"".join(
            [
                _section(_SCHEMA, schema_bytes),
                _section(_WINDOW, window_bytes),
                _section(_MANIFESTS, bytes(manifest_bytes)),
                _section(_RECORDS, bytes(record_bytes)),
                _section(_INDEX, index_bytes),
            ]
        )

    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(MAGIC + struct.pack("<II", FORMAT_VERSION, zlib.crc32(body)) + body)
    logger.info("Snapshot of %d live records written to %s", len(records), path)
    return path


def _read_sections(data: bytes) -> dict[int, bytes]:
    if len(data) < 12 or data[:4] != MAGIC:
        raise SnapshotError("not a window snapshot (bad magic)")
    version, crc = struct.unpack("<II", data[4:12])
    if version != FORMAT_VERSION:
        raise SnapshotError(f"unsupported snapshot version {version} (expected {FORMAT_VERSION})")
    body = data[12:]
    if zlib.crc32(body) != crc:
        raise SnapshotError("checksum mismatch: snapshot is corrupt")

    sections: dict[int, bytes] = {}
    offset = 0
    while offset < len(body):
        if offset + 12 > len(body):
            raise SnapshotError("truncated section header")
        tag, length = struct.unpack("<IQ", body[offset:offset + 12])
        offset += 12
        if offset + length > len(body):
            raise SnapshotError(f"section {tag} overruns the file")
        sections[tag] = body[offset:offset + length]
        offset += length
    missing = {_SCHEMA, _WINDOW, _MANIFESTS, _RECORDS, _INDEX} - sections.keys()
    if missing:
        raise SnapshotError(f"missing sections {sorted(missing)}")
    return sections


def restore(path: str | Path) -> SlidingWindow:
    """
    Reads a snapshot and rebuilds the window and its index.

    Raises:
        SnapshotError: bad magic, version mismatch, checksum failure,
            truncated or inconsistent sections
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise SnapshotError(f"cannot read snapshot {path}: {exc}") from exc
    sections = _read_sections(data)

    try:
        reader = _Reader(sections[_SCHEMA], "schema")
        count = reader.take("<I")
        dims = reader.array(count, "<u4").tolist()
        reader.done()
        schema = CompositeSchema(tuple(dims))

        reader = _Reader(sections[_WINDOW], "window")
        tau, bucket_count, t0, shift, last_advance, last_ingest, mode, lenient = reader.take("<dIdQddBB")
        reader.done()
        config = WindowConfig(tau, bucket_count, t0)

        reader = _Reader(sections[_MANIFESTS], "manifests")
        buckets = []
        for _ in range(reader.take("<I")):
            index, has_unit, unit, size = reader.take("<IBqI")
            manifest = BucketManifest(index, reader.array(size, "<i8").tolist(), unit=unit if has_unit else None)
            buckets.append(manifest)
        reader.done()
        if [b.bucket_index for b in buckets] != list(range(config.slot_count)):
            raise SnapshotError("manifest slots do not match the ring size")

        reader = _Reader(sections[_RECORDS], "records")
        records = []
        for _ in range(reader.take("<Q")):
            record_id, timestamp, latitude, longitude = reader.take("<qddd")
            content = tuple(reader.array(d, "<f8") for d in dims)
            records.append(SpatRecord(record_id, content, timestamp, GeoCoordinate(latitude, longitude)))
        reader.done()

        reader = _Reader(sections[_INDEX], "index")
        max_neighbors, ef_construction, ef_search, seed, threshold, kind = reader.take("<IIIqdB")
        reader.done()
        ann_config = AnnConfig(
            dim=schema.dim,
            max_neighbors=max_neighbors,
            ef_construction=ef_construction,
            default_ef_search=ef_search,
            seed=seed,
            compaction_threshold=threshold,
        )

        state = WindowState(
            config=config,
            shift_step=shift,
            buckets=buckets,
            last_advance_time=None if np.isnan(last_advance) else last_advance,
            last_ingest_time=None if np.isnan(last_ingest) else last_ingest,
        )
        window = SlidingWindow.restore(
            schema, state, records, ann_config, kind=_KINDS[kind], mode=_MODES[mode], lenient=bool(lenient)
        )
    except SnapshotError:
        raise
    except (OrbitError, IndexError, ValueError) as exc:
        raise SnapshotError(f"inconsistent snapshot {path}: {exc}") from exc

    logger.info("Restored %d live records from %s", len(records), path)
    return window
