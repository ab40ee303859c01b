"""Metric rows and their CSV / JSON emission."""

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import pandas as pd

from config.settings import ExperimentConfig
from orbit.errors import InvalidArgumentError

logger = logging.getLogger(__name__)

LATENCY_COLUMNS = ('insert_latency_ms', 'maintenance_latency_ms', 'query_latency_ms')


@dataclass
class MetricRow:
    """
    One measurement of one method at one step.

    step holds the month index of a streaming run or the swept value
    (ef_search, alpha_t). Operation counts are deterministic under a fixed
    seed; latency columns are not.
    """

    experiment_id: str
    method: str
    step: float
    dataset_size: int = 0
    live_records: int = 0
    insert_ops: int = 0
    insert_latency_ms: float = 0.0
    retired_records: int = 0
    maintenance_ops: int = 0
    maintenance_latency_ms: float = 0.0
    query_ops: float = 0.0
    query_latency_ms: float = 0.0
    distance_computations: int = 0
    recall: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        for k, value in self.recall.items():
            if not 0.0 <= value <= 1.0:
                raise InvalidArgumentError(f"recall@{k} = {value} outside [0, 1]")

    def flat(self) -> dict:
        row = asdict(self)
        recall = row.pop('recall')
        row.update({f'recall@{k}': recall[k] for k in sorted(recall)})
        return row


def metrics_frame(rows: list[MetricRow], include_latency: bool = True) -> pd.DataFrame:
    frame = pd.DataFrame([row.flat() for row in rows])
    if not include_latency and not frame.empty:
        frame = frame.drop(columns=[c for c in LATENCY_COLUMNS if c in frame.columns])
    return frame


def write_metrics(
    rows: list[MetricRow],
    out_dir: str | Path,
    name: str,
    config: ExperimentConfig,
    summary: dict | None = None,
) -> tuple[Path, Path]:
    """
    Writes <name>.csv (one row per MetricRow) and <name>.json (resolved
    config, row count and any run summary).

    Returns:
        tuple[Path, Path]: CSV and JSON paths
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f'{name}.csv'
    json_path = out / f'{name}.json'

    metrics_frame(rows).to_csv(csv_path, index=False, float_format='%.10g')
    payload = {
        'experiment': name,
        'rows': len(rows),
        'config': config.resolved(),
        'summary': summary or {},
    }
    json_path.write_text(json.dumps(payload, indent=2, sort_keys=True), encoding='utf-8')
    logger.info("Wrote %d rows to %s", len(rows), csv_path)
    return csv_path, json_path
