"""Database record: content sub-embeddings, acquisition time and location."""

from dataclasses import dataclass

import numpy as np

from orbit.encoding import GeoCoordinate


@dataclass(frozen=True, eq=False)
class SpatRecord:
    """
    One item of the stream.

    Args:
        record_id: External id, unique within a dataset
        content: Unit-norm content blocks in modality-id order
        timestamp: Seconds since the stream epoch
        location: Acquisition coordinate
    """

    record_id: int
    content: tuple[np.ndarray, ...]
    timestamp: float
    location: GeoCoordinate

    def __post_init__(self):
        blocks = []
        for block in self.content:
            block = np.array(block, dtype=np.float64).reshape(-1)
            block.setflags(write=False)
            blocks.append(block)
        object.__setattr__(self, "content", tuple(blocks))
        object.__setattr__(self, "record_id", int(self.record_id))
        object.__setattr__(self, "timestamp", float(self.timestamp))
