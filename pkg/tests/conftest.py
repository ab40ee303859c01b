import math

import numpy as np
import pytest

from config.settings import ExperimentConfig, build_experiment_config
from orbit.ann import AnnConfig
from orbit.encoding import CompositeSchema, GeoCoordinate
from orbit.records import SpatRecord
from orbit.window import SlidingWindow, WindowConfig

# -----------------------------------------------------------------------
# Helpers
# -----------------------------------------------------------------------

TAU = 100.0
BUCKETS = 4
CONTENT_DIMS = (4, 3)


def unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def make_record(
    rng: np.random.Generator,
    record_id: int,
    timestamp: float,
    dims: tuple[int, ...] = CONTENT_DIMS,
    location: GeoCoordinate | None = None,
) -> SpatRecord:
    if location is None:
        location = GeoCoordinate(rng.uniform(-1.2, 1.2), rng.uniform(-math.pi, math.pi - 1e-9))
    return SpatRecord(record_id, tuple(unit(rng, d) for d in dims), timestamp, location)


def make_stream(seed: int, count: int, span: float, dims: tuple[int, ...] = CONTENT_DIMS) -> list[SpatRecord]:
    rng = np.random.default_rng(seed)
    times = np.sort(rng.uniform(0.0, span, size=count))
    return [make_record(rng, i, float(t), dims) for i, t in enumerate(times)]


def make_window(kind: str = "flat", mode: str = "circular", lenient: bool = False, **ann) -> SlidingWindow:
    schema = CompositeSchema(CONTENT_DIMS)
    params = dict(dim=schema.dim, max_neighbors=8, ef_construction=32, default_ef_search=32, seed=3)
    params.update(ann)
    return SlidingWindow(schema, WindowConfig(TAU, BUCKETS), AnnConfig(**params), kind=kind, mode=mode, lenient=lenient)


def small_config(**sections) -> ExperimentConfig:
    """Desk-sized experiment: a few hundred records, four live steps of TAU seconds."""
    data = {
        "experiment_id": "test",
        "seed": 11,
        "schema": {"content_dims": list(CONTENT_DIMS)},
        "window": {"tau": TAU, "bucket_count": BUCKETS, "t0": 0.0},
        "ann": {"max_neighbors": 8, "ef_construction": 32, "ef_search": 32, "ef_sweep": [8, 16, 400]},
        "data": {"record_count": 300, "span_seconds": 6 * TAU},
        "queries": {"count": 10, "k_list": [1, 5, 10]},
        "baselines": {"per_modality_k": 20},
        "streaming": {"months": 7, "sizes": [200], "queries_per_month": 4, "k": 5},
        "alpha_sweep": {"alphas": [1e-9, 1e-3, 0.1], "record_count": 200, "span_seconds": 1000.0, "query_count": 10, "k": 5},
    }
    for name, values in sections.items():
        if isinstance(values, dict):
            data[name] = {**data.get(name, {}), **values}
        else:
            data[name] = values
    return build_experiment_config(data)


# -----------------------------------------------------------------------
# Fixtures
# -----------------------------------------------------------------------


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def schema() -> CompositeSchema:
    return CompositeSchema(CONTENT_DIMS)


@pytest.fixture
def window() -> SlidingWindow:
    return make_window()


@pytest.fixture
def filled_window() -> SlidingWindow:
    """Flat-index window holding 120 records spread over its four live steps."""
    w = make_window()
    for record in make_stream(seed=5, count=120, span=BUCKETS * TAU):
        w.push(record)
    return w
