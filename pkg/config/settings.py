import logging
import os
from pathlib import Path
from typing import Annotated, Literal

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from orbit.errors import ConfigError

# Cargar variables de entorno desde .env
ROOT_DIR = Path(__file__).resolve().parent.parent
load_dotenv(ROOT_DIR / '.env')

MONTH_SECONDS = 2_592_000.0


def _flag(value: str) -> bool:
    return value.strip().lower() not in ('0', 'false', 'no', 'off', '')


# Logging
class LoggingConfig:
    LEVEL = os.getenv('ORBIT_LOG_LEVEL', 'INFO').upper()


# Harness outputs and default experiment file
class HarnessConfig:
    OUTPUT_DIR = os.getenv('ORBIT_OUTPUT_DIR', 'results')
    CONFIG_PATH = os.getenv('ORBIT_CONFIG_PATH', str(ROOT_DIR / 'config' / 'default.yaml'))
    SHOW_PROGRESS = _flag(os.getenv('ORBIT_PROGRESS', '1'))


class Settings:
    LOGGING = LoggingConfig()
    HARNESS = HarnessConfig()

    @classmethod
    def validate(cls):
        """Valida la configuración de entorno."""
        if cls.LOGGING.LEVEL not in logging.getLevelNamesMapping():
            raise ConfigError(f"ORBIT_LOG_LEVEL desconocido: {cls.LOGGING.LEVEL}")
        if not cls.HARNESS.OUTPUT_DIR:
            raise ConfigError("ORBIT_OUTPUT_DIR no puede estar vacío")


settings = Settings()


# ============================================================================
# EXPERIMENT CONFIG
# ============================================================================

class _Section(BaseModel):
    model_config = ConfigDict(extra='forbid')


class SchemaSection(_Section):
    content_dims: Annotated[list[Annotated[int, Field(gt=0)]], Field(min_length=1, description="Dimension of each content modality")] = [32, 32]

    @property
    def m(self) -> int:
        return len(self.content_dims) + 2


class WindowSection(_Section):
    tau: Annotated[float, Field(gt=0, description="Seconds per unit step")] = MONTH_SECONDS
    bucket_count: Annotated[int, Field(ge=2, description="Live unit steps L")] = 6
    t0: Annotated[float, Field(description="Epoch boundary in seconds")] = 0.0


class AnnSection(_Section):
    kind: Literal['hnsw', 'flat'] = 'hnsw'
    max_neighbors: Annotated[int, Field(ge=2)] = 16
    ef_construction: Annotated[int, Field(gt=0)] = 100
    ef_search: Annotated[int, Field(gt=0)] = 100
    ef_sweep: Annotated[list[Annotated[int, Field(gt=0)]], Field(min_length=1)] = [10, 20, 40, 80]
    compaction_threshold: Annotated[float, Field(gt=0, le=1)] = 0.5

    @model_validator(mode='after')
    def _check_construction(self):
        if self.ef_construction < self.max_neighbors:
            raise ValueError("ef_construction must be >= max_neighbors")
        return self


class GeoBox(_Section):
    """Bounding box in degrees."""

    lat_min: Annotated[float, Field(ge=-90, le=90)] = 29.18
    lat_max: Annotated[float, Field(ge=-90, le=90)] = 30.57
    lon_min: Annotated[float, Field(ge=-180, lt=180)] = 118.33
    lon_max: Annotated[float, Field(ge=-180, lt=180)] = 120.62

    @model_validator(mode='after')
    def _check_order(self):
        if self.lat_min > self.lat_max or self.lon_min > self.lon_max:
            raise ValueError("geo box bounds must be ordered (min <= max)")
        return self


class DataSection(_Section):
    record_count: Annotated[int, Field(ge=0)] = 5000
    span_seconds: Annotated[float, Field(gt=0, description="Timestamps are uniform over [t0, t0 + span)")] = 6 * MONTH_SECONDS
    geo_box: GeoBox = GeoBox()
    distribution: Literal['random_unit', 'gaussian_clusters', 'moderate_blend'] = 'random_unit'
    cluster_count: Annotated[int, Field(gt=0)] = 16
    cluster_spread: Annotated[float, Field(gt=0)] = 0.3


class QuerySection(_Section):
    count: Annotated[int, Field(gt=0)] = 100
    k_list: Annotated[list[Annotated[int, Field(gt=0)]], Field(min_length=1)] = [1, 10, 50, 100]
    weight_levels: Annotated[list[Annotated[float, Field(gt=0)]], Field(min_length=1)] = [0.25, 0.5, 1.0]
    cue_noise: Annotated[float, Field(ge=0)] = 0.1


class BaselineSection(_Section):
    per_modality_k: Annotated[int, Field(gt=0)] = 100
    merge_rule: Literal['weighted_sum', 'reciprocal_rank'] = 'weighted_sum'
    rrf_constant: Annotated[float, Field(gt=0)] = 60.0
    filter_time_fraction: Annotated[float, Field(gt=0, le=1, description="Filter window as a fraction of the data span")] = 0.1


class StreamingSection(_Section):
    months: Annotated[int, Field(gt=0)] = 13
    sizes: Annotated[list[Annotated[int, Field(gt=0)]], Field(min_length=1)] = [10_000, 30_000, 60_000]
    queries_per_month: Annotated[int, Field(ge=0)] = 20
    k: Annotated[int, Field(gt=0)] = 10


class AlphaSweepSection(_Section):
    alphas: Annotated[list[Annotated[float, Field(gt=0)]], Field(min_length=1)] = [1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5]
    record_count: Annotated[int, Field(gt=0)] = 2000
    span_seconds: Annotated[float, Field(gt=0)] = 365 * 86_400.0
    query_count: Annotated[int, Field(gt=0)] = 100
    k: Annotated[int, Field(gt=0)] = 10


class ExperimentConfig(_Section):
    """Everything a harness run needs; emitted next to the results."""

    experiment_id: str = 'default'
    seed: int = 7
    method: Literal['all', 'unified', 'filtered', 'hybrid'] = 'all'
    output_dir: str = Field(default_factory=lambda: settings.HARNESS.OUTPUT_DIR)
    schema_: Annotated[SchemaSection, Field(alias='schema')] = SchemaSection()
    window: WindowSection = WindowSection()
    ann: AnnSection = AnnSection()
    data: DataSection = DataSection()
    queries: QuerySection = QuerySection()
    baselines: BaselineSection = BaselineSection()
    streaming: StreamingSection = StreamingSection()
    alpha_sweep: AlphaSweepSection = AlphaSweepSection()

    model_config = ConfigDict(extra='forbid', populate_by_name=True)

    def override(self, **changes) -> 'ExperimentConfig':
        """Copy with top-level fields replaced; None values are ignored."""
        data = self.model_dump(by_alias=True)
        data.update({key: value for key, value in changes.items() if value is not None})
        return build_experiment_config(data)

    def resolved(self) -> dict:
        return self.model_dump(mode='json', by_alias=True)


def build_experiment_config(data: dict | None) -> ExperimentConfig:
    """
    Valida un diccionario de configuración.

    Raises:
        ConfigError: con el diagnóstico de pydantic
    """
    try:
        return ExperimentConfig.model_validate(data or {})
    except ValidationError as exc:
        raise ConfigError(f"Configuración de experimento inválida:\n{exc}") from exc


def load_experiment_config(path: str | Path | None = None) -> ExperimentConfig:
    """
    Carga un ExperimentConfig desde YAML.

    Args:
        path: Archivo YAML; por defecto ORBIT_CONFIG_PATH

    Returns:
        ExperimentConfig: configuración validada
    """
    path = Path(path or settings.HARNESS.CONFIG_PATH)
    if not path.exists():
        raise ConfigError(f"No existe el archivo de configuración: {path}")
    try:
        data = yaml.safe_load(path.read_text(encoding='utf-8'))
    except yaml.YAMLError as exc:
        raise ConfigError(f"YAML inválido en {path}: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path} debe contener un mapa de secciones")
    return build_experiment_config(data)
