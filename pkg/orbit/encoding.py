"""
Rotary Encoding - time and geolocation as unit vectors

Timestamps are rotated onto the unit circle and coordinates projected onto the
unit sphere, so that inner products depend only on the temporal lag and on the
great-circle separation. Encoded blocks are concatenated with content
embeddings into a single composite vector; queries scale each block by a
per-modality interest weight so that one inner product reproduces the weighted
sum of per-field similarities.

Also holds the precision calculators used to pick the temporal scale.
"""

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from orbit.errors import InvalidArgumentError, SchemaError

TWO_PI = 2.0 * math.pi
EARTH_RADIUS_KM = 6371.0

UNIT_NORM_TOL = 1e-9


def _finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise InvalidArgumentError(f"{name} must be finite, got {value}")
    return value


# ============================================================================
# SCALAR TYPES
# ============================================================================

@dataclass(frozen=True)
class TemporalScale:
    """Radians of rotation per second of elapsed time."""

    alpha_t: float

    def __post_init__(self):
        alpha = _finite("alpha_t", self.alpha_t)
        if alpha <= 0.0:
            raise InvalidArgumentError(f"alpha_t must be > 0, got {alpha}")
        object.__setattr__(self, "alpha_t", alpha)

    @classmethod
    def from_window(cls, bucket_count: int, tau: float) -> "TemporalScale":
        """Scale that maps L unit steps of tau seconds onto half a revolution."""
        if bucket_count < 1 or tau <= 0:
            raise InvalidArgumentError("bucket_count must be >= 1 and tau > 0")
        return cls(math.pi / (bucket_count * tau))

    def covers(self, dt_max: float) -> bool:
        """True when every lag up to dt_max stays inside the monotone range [0, pi]."""
        return self.alpha_t * _finite("dt_max", dt_max) <= math.pi * (1.0 + 1e-12)

    @property
    def horizon(self) -> float:
        return horizon_for_scale(self)


@dataclass(frozen=True)
class GeoCoordinate:
    """Latitude in [-pi/2, pi/2] and longitude in [-pi, pi), both in radians."""

    latitude: float
    longitude: float

    def __post_init__(self):
        lat = _finite("latitude", self.latitude)
        lon = _finite("longitude", self.longitude)
        if not -math.pi / 2 <= lat <= math.pi / 2:
            raise InvalidArgumentError(f"latitude {lat} outside [-pi/2, pi/2]")
        if not -math.pi <= lon < math.pi:
            raise InvalidArgumentError(f"longitude {lon} outside [-pi, pi)")
        object.__setattr__(self, "latitude", lat)
        object.__setattr__(self, "longitude", lon)

    @classmethod
    def from_degrees(cls, latitude: float, longitude: float) -> "GeoCoordinate":
        # 180 deg east and west are the same meridian; keep the half-open range.
        if longitude == 180.0:
            longitude = -180.0
        return cls(math.radians(latitude), math.radians(longitude))


class TimeEncoding(NamedTuple):
    x: float
    y: float


class GeoEncoding(NamedTuple):
    x: float
    y: float
    z: float


class BlockLayout(NamedTuple):
    modality_id: int
    offset: int
    dim: int


@dataclass(frozen=True, eq=False)
class ModalityEmbedding:
    """
    One L2-normalised sub-embedding tagged with its modality.

    Args:
        values: 1-D vector of dimension d_i with unit norm
        modality_id: modality index, 1-based
    """

    values: np.ndarray
    modality_id: int

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        if values.size == 0 or not np.all(np.isfinite(values)):
            raise InvalidArgumentError(f"modality {self.modality_id}: values must be finite and non-empty")
        norm = float(np.linalg.norm(values))
        if abs(norm - 1.0) > UNIT_NORM_TOL:
            raise InvalidArgumentError(
                f"modality {self.modality_id}: expected unit norm, got {norm:.12g}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "modality_id", int(self.modality_id))

    @classmethod
    def normalized(cls, values, modality_id: int) -> "ModalityEmbedding":
        """Builds an embedding from an arbitrary non-zero vector by L2-normalising it."""
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        norm = float(np.linalg.norm(values))
        if not math.isfinite(norm) or norm == 0.0:
            raise InvalidArgumentError(f"modality {modality_id}: zero-norm or non-finite vector")
        return cls(values / norm, modality_id)

    @property
    def dim(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True, eq=False)
class CompositeVector:
    """Concatenated unit blocks divided by their joint norm (sqrt(m))."""

    values: np.ndarray
    layout: tuple[BlockLayout, ...]

    @property
    def m(self) -> int:
        return len(self.layout)

    @property
    def dim(self) -> int:
        return int(self.values.size)

    def block(self, modality_id: int) -> np.ndarray:
        for entry in self.layout:
            if entry.modality_id == modality_id:
                return self.values[entry.offset:entry.offset + entry.dim]
        raise SchemaError(f"modality {modality_id} not in composite layout")

    def recover(self, modality_id: int) -> np.ndarray:
        """Original unit sub-embedding of one modality."""
        return self.block(modality_id) * math.sqrt(self.m)


@dataclass(frozen=True, eq=False)
class WeightVector:
    """Non-negative per-modality interest weights, not all zero."""

    weights: np.ndarray

    def __post_init__(self):
        weights = np.array(self.weights, dtype=np.float64).reshape(-1)
        if weights.size == 0 or not np.all(np.isfinite(weights)):
            raise InvalidArgumentError("weights must be finite and non-empty")
        if np.any(weights < 0):
            raise InvalidArgumentError(f"weights must be non-negative, got {weights.tolist()}")
        if not np.any(weights > 0):
            raise InvalidArgumentError("at least one weight must be positive")
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def uniform(cls, m: int) -> "WeightVector":
        return cls(np.ones(m))

    def scaled(self, factor: float) -> "WeightVector":
        if not factor > 0:
            raise InvalidArgumentError("scale factor must be positive")
        return WeightVector(self.weights * factor)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.weights))

    def __len__(self) -> int:
        return int(self.weights.size)

    def __getitem__(self, i: int) -> float:
        return float(self.weights[i])


@dataclass(frozen=True)
class PrecisionSpec:
    """
    Resolution targets for choosing the temporal scale.

    eps_cos is the smallest cosine decrement an index can tell apart. The
    decrement 1 - cos x never exceeds 2, so eps_cos is accepted in (0, 2].
    """

    eps_cos: float
    dt_min: float = 1.0
    earth_radius_km: float = EARTH_RADIUS_KM

    def __post_init__(self):
        eps = _finite("eps_cos", self.eps_cos)
        if not 0.0 < eps <= 2.0:
            raise InvalidArgumentError(f"eps_cos must be in (0, 2], got {eps}")
        if not _finite("dt_min", self.dt_min) > 0.0:
            raise InvalidArgumentError("dt_min must be > 0")
        if not _finite("earth_radius_km", self.earth_radius_km) > 0.0:
            raise InvalidArgumentError("earth_radius_km must be > 0")


# ============================================================================
# ENCODERS
# ============================================================================

def encode_time(t: float, scale: TemporalScale) -> TimeEncoding:
    """
    Rotates a timestamp onto the unit circle.

    The phase alpha_t * t is reduced modulo 2*pi before evaluating cos/sin.

    Args:
        t: Seconds since a fixed epoch
        scale: Temporal scale

    Returns:
        TimeEncoding: (cos(alpha_t t), sin(alpha_t t))
    """
    phase = (scale.alpha_t * _finite("t", t)) % TWO_PI
    return TimeEncoding(math.cos(phase), math.sin(phase))


def time_similarity(a: float, b: float, scale: TemporalScale) -> float:
    """cos(alpha_t (a - b)): the inner product of the two time encodings."""
    return math.cos(scale.alpha_t * (_finite("a", a) - _finite("b", b)))


def encode_geo(g: GeoCoordinate) -> GeoEncoding:
    """Projects a coordinate onto the unit sphere."""
    cos_lat = math.cos(g.latitude)
    return GeoEncoding(
        cos_lat * math.cos(g.longitude),
        cos_lat * math.sin(g.longitude),
        math.sin(g.latitude),
    )


def geo_similarity(a: GeoCoordinate, b: GeoCoordinate) -> float:
    """Cosine of the central angle between two coordinates."""
    cos_delta = (
        math.sin(a.latitude) * math.sin(b.latitude)
        + math.cos(a.latitude) * math.cos(b.latitude) * math.cos(a.longitude - b.longitude)
    )
    return min(1.0, max(-1.0, cos_delta))


def central_angle(a: GeoCoordinate, b: GeoCoordinate) -> float:
    """Central angle in radians, haversine form (stable for nearby points)."""
    dlat = b.latitude - a.latitude
    dlon = b.longitude - a.longitude
    h = math.sin(dlat / 2) ** 2 + math.cos(a.latitude) * math.cos(b.latitude) * math.sin(dlon / 2) ** 2
    return 2.0 * math.asin(min(1.0, math.sqrt(h)))


def great_circle_km(a: GeoCoordinate, b: GeoCoordinate, radius_km: float = EARTH_RADIUS_KM) -> float:
    return central_angle(a, b) * radius_km


def encode_times(t: np.ndarray, scale: TemporalScale) -> np.ndarray:
    """Vectorised encode_time; returns an (n, 2) array."""
    t = np.asarray(t, dtype=np.float64)
    if not np.all(np.isfinite(t)):
        raise InvalidArgumentError("timestamps must be finite")
    phase = np.mod(scale.alpha_t * t, TWO_PI)
    return np.stack([np.cos(phase), np.sin(phase)], axis=-1)


def encode_geos(latitude: np.ndarray, longitude: np.ndarray) -> np.ndarray:
    """Vectorised encode_geo over radian arrays; returns an (n, 3) array."""
    lat = np.asarray(latitude, dtype=np.float64)
    lon = np.asarray(longitude, dtype=np.float64)
    if np.any(np.abs(lat) > math.pi / 2) or np.any(lon < -math.pi) or np.any(lon >= math.pi):
        raise InvalidArgumentError("coordinates outside valid ranges")
    cos_lat = np.cos(lat)
    return np.stack([cos_lat * np.cos(lon), cos_lat * np.sin(lon), np.sin(lat)], axis=-1)


# ============================================================================
# COMPOSITE ASSEMBLY
# ============================================================================

def _layout_for(blocks: Sequence[ModalityEmbedding]) -> tuple[BlockLayout, ...]:
    layout = []
    offset = 0
    for block in blocks:
        layout.append(BlockLayout(block.modality_id, offset, block.dim))
        offset += block.dim
    return tuple(layout)


def compose_record(
    subs: Sequence[ModalityEmbedding],
    time_enc: TimeEncoding | None = None,
    geo_enc: GeoEncoding | None = None,
    schema: "CompositeSchema | None" = None,
) -> CompositeVector:
    """
    Concatenates unit sub-embeddings and normalises the result.

    Content modalities come first in ascending modality id; the time and geo
    encodings, when given, are appended as the two modalities that follow.

    Args:
        subs: Content sub-embeddings, one per content modality
        time_enc: Time encoding (optional)
        geo_enc: Geo encoding (optional)
        schema: When given, the content modalities and dims must match it exactly

    Returns:
        CompositeVector: unit-norm composite with its block layout

    Raises:
        SchemaError: missing, duplicate or mis-sized modality
        InvalidArgumentError: zero-norm sub-embedding
    """
    content = sorted(subs, key=lambda s: s.modality_id)
    ids = [s.modality_id for s in content]
    if len(set(ids)) != len(ids):
        raise SchemaError(f"duplicate content modality in {ids}")
    if ids != list(range(1, len(ids) + 1)):
        raise SchemaError(f"content modalities must be numbered 1..{len(ids)}, got {ids}")
    for sub in content:
        if abs(float(np.linalg.norm(sub.values)) - 1.0) > UNIT_NORM_TOL:
            raise InvalidArgumentError(f"modality {sub.modality_id} is not unit-norm")

    if schema is not None:
        if ids != list(schema.content_ids):
            raise SchemaError(f"expected content modalities {list(schema.content_ids)}, got {ids}")
        for sub, dim in zip(content, schema.content_dims):
            if sub.dim != dim:
                raise SchemaError(f"modality {sub.modality_id}: expected dim {dim}, got {sub.dim}")
        if time_enc is None or geo_enc is None:
            raise SchemaError("schema requires both time and geo encodings")

    next_id = (ids[-1] + 1) if ids else 1
    blocks = list(content)
    if time_enc is not None:
        blocks.append(ModalityEmbedding(np.asarray(time_enc), next_id))
        next_id += 1
    if geo_enc is not None:
        blocks.append(ModalityEmbedding(np.asarray(geo_enc), next_id))
    if not blocks:
        raise SchemaError("composite needs at least one block")

    values = np.concatenate([b.values for b in blocks])
    values = values / np.linalg.norm(values)
    values.setflags(write=False)
    return CompositeVector(values, _layout_for(blocks))


def compose_query(
    cues: Sequence[ModalityEmbedding | None],
    weights: WeightVector,
    normalize: bool = False,
    layout: Sequence[BlockLayout] | None = None,
) -> np.ndarray:
    """
    Builds the weighted query vector [w_1 q_1; ...; w_m q_m].

    A modality with zero weight may pass None as its cue; its block is zero.
    The dimension of a None block comes from ``layout``.

    Args:
        cues: One cue per modality, in layout order
        weights: Interest weights, same length as cues
        normalize: Divide by sqrt(sum w_i^2) to get a unit query
        layout: Block layout of the target composite

    Returns:
        np.ndarray: query vector of dimension d

    Raises:
        SchemaError: weight/cue/layout length or dimension mismatch, missing cue
    """
    if len(weights) != len(cues):
        raise SchemaError(f"{len(weights)} weights for {len(cues)} modalities")
    if layout is not None and len(layout) != len(cues):
        raise SchemaError(f"{len(cues)} cues for a {len(layout)}-block layout")

    blocks = []
    for i, cue in enumerate(cues):
        w = weights[i]
        expected = layout[i] if layout is not None else None
        if cue is None:
            if w != 0.0:
                raise SchemaError(f"modality {i + 1} has weight {w} but no cue")
            if expected is None:
                raise SchemaError(f"modality {i + 1}: absent cue needs a layout to size its block")
            blocks.append(np.zeros(expected.dim))
            continue
        if expected is not None:
            if cue.dim != expected.dim:
                raise SchemaError(f"modality {expected.modality_id}: cue dim {cue.dim} != {expected.dim}")
            if cue.modality_id != expected.modality_id:
                raise SchemaError(f"cue for modality {cue.modality_id} in slot of {expected.modality_id}")
        blocks.append(w * cue.values)

    query = np.concatenate(blocks)
    if normalize:
        query = query / weights.norm
    return query


@dataclass(frozen=True)
class CompositeSchema:
    """
    Declared modality layout: content modalities (ids 1..c) then time, then geo.

    Args:
        content_dims: Dimension of each content modality, in modality-id order
    """

    content_dims: tuple[int, ...]
    layout: tuple[BlockLayout, ...] = field(init=False, repr=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.content_dims)
        if any(d < 1 for d in dims):
            raise SchemaError(f"content dims must be positive, got {dims}")
        object.__setattr__(self, "content_dims", dims)
        layout = []
        offset = 0
        for mid, dim in enumerate(dims + (2, 3), start=1):
            layout.append(BlockLayout(mid, offset, dim))
            offset += dim
        object.__setattr__(self, "layout", tuple(layout))

    @property
    def content_ids(self) -> tuple[int, ...]:
        return tuple(range(1, len(self.content_dims) + 1))

    @property
    def time_id(self) -> int:
        return len(self.content_dims) + 1

    @property
    def geo_id(self) -> int:
        return len(self.content_dims) + 2

    @property
    def m(self) -> int:
        return len(self.content_dims) + 2

    @property
    def dim(self) -> int:
        return sum(self.content_dims) + 5

    def encode(
        self,
        content: Sequence[np.ndarray],
        timestamp: float,
        location: GeoCoordinate,
        scale: TemporalScale,
        time_origin: float = 0.0,
    ) -> CompositeVector:
        """Encodes one record's pieces into its composite vector."""
        if len(content) != len(self.content_dims):
            raise SchemaError(f"expected {len(self.content_dims)} content blocks, got {len(content)}")
        subs = [ModalityEmbedding(block, mid) for mid, block in zip(self.content_ids, content)]
        return compose_record(
            subs,
            encode_time(timestamp - time_origin, scale),
            encode_geo(location),
            schema=self,
        )


# ============================================================================
# PRECISION CALCULATORS
# ============================================================================

def min_scale_for_resolution(spec: PrecisionSpec) -> TemporalScale:
    """Smallest alpha_t that separates any two events at least dt_min apart."""
    return TemporalScale(math.sqrt(2.0 * spec.eps_cos / spec.dt_min ** 2))


def horizon_for_scale(scale: TemporalScale) -> float:
    """Seconds covered by half a revolution (the non-aliasing horizon)."""
    return math.pi / scale.alpha_t


def min_distinguishable_distance(spec: PrecisionSpec) -> float:
    """Smallest resolvable ground distance in kilometers."""
    return math.sqrt(2.0 * spec.eps_cos) * spec.earth_radius_km
