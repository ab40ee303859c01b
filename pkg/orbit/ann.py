"""
ANN Index - graph search with tombstones, plus an exact flat oracle

HnswIndex is a hierarchical navigable small-world graph scored by inner
product. Deactivated entries (tombstones) stay in the graph and are still
traversed, but never enter a result list; compact() rebuilds the graph from
the active entries only. FlatIndex exposes the same protocol with exact
brute-force scoring and serves as ground truth.

Both count distance computations and visited nodes so query cost can be
compared across retrieval methods independently of wall-clock time.
"""

import heapq
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Protocol

import numpy as np

from orbit.errors import ConfigError, InvalidArgumentError, SchemaError
from orbit.sync import ReadWriteLock

logger = logging.getLogger(__name__)

_INITIAL_CAPACITY = 1024


@dataclass(frozen=True)
class AnnConfig:
    """
    Index parameters. The metric is always inner product.

    Args:
        dim: Vector dimension
        max_neighbors: Graph degree M on upper layers (2*M on the base layer)
        ef_construction: Beam width while linking a new node
        default_ef_search: Beam width when search() gets no ef_search
        seed: Seed of the level generator
        compaction_threshold: Deactivated fraction above which maybe_compact() rebuilds
        max_elements: Optional capacity; None means unbounded
    """

    dim: int
    max_neighbors: int = 16
    ef_construction: int = 100
    default_ef_search: int = 100
    seed: int = 0
    compaction_threshold: float = 0.5
    max_elements: int | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError(f"dim must be >= 1, got {self.dim}")
        if self.max_neighbors < 2:
            raise ConfigError(f"max_neighbors must be >= 2, got {self.max_neighbors}")
        if self.ef_construction < self.max_neighbors:
            raise ConfigError("ef_construction must be >= max_neighbors")
        if self.default_ef_search < 1:
            raise ConfigError("default_ef_search must be >= 1")
        if not 0.0 < self.compaction_threshold <= 1.0:
            raise ConfigError("compaction_threshold must be in (0, 1]")
        if self.max_elements is not None and self.max_elements < 1:
            raise ConfigError("max_elements must be positive")


@dataclass
class SearchStats:
    distance_computations: int = 0
    nodes_visited: int = 0

    def merge(self, other: "SearchStats") -> "SearchStats":
        self.distance_computations += other.distance_computations
        self.nodes_visited += other.nodes_visited
        return self


@dataclass
class SearchResult:
    """(record id, score) pairs by descending score, ties by ascending id."""

    entries: list[tuple[int, float]]
    stats: SearchStats = field(default_factory=SearchStats)

    @property
    def ids(self) -> list[int]:
        return [rid for rid, _ in self.entries]

    @property
    def scores(self) -> list[float]:
        return [score for _, score in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


@dataclass(frozen=True)
class CompactionSummary:
    dropped: int
    size: int
    distance_computations: int = 0


@dataclass
class IndexCounters:
    """Cumulative work counters since the index was created."""

    inserts: int = 0
    insert_distance_computations: int = 0
    deactivations: int = 0
    compactions: int = 0
    compaction_distance_computations: int = 0
    searches: int = 0
    search_distance_computations: int = 0


class AnnIndex(Protocol):
    """What the window, retrieval and baselines need from an index."""

    config: AnnConfig
    counters: IndexCounters

    def insert(self, vector, record_id: int) -> int: ...

    def search(self, query, k: int, ef_search: int | None = None) -> SearchResult: ...

    def deactivate(self, record_ids: Iterable[int]) -> int: ...

    def compact(self) -> CompactionSummary: ...

    def maybe_compact(self) -> CompactionSummary | None: ...

    def node_of(self, record_id: int) -> int | None: ...

    def vector_of(self, record_id: int) -> np.ndarray: ...

    @property
    def size(self) -> int: ...

    @property
    def active_count(self) -> int: ...


def _rank(record_ids: np.ndarray, scores: np.ndarray, k: int) -> list[tuple[int, float]]:
    """Top-k (id, score) by descending score, ties by ascending id."""
    if scores.size == 0:
        return []
    if k < scores.size:
        # Keep every entry tied with the k-th score so the id tie-break is exact.
        kth = np.partition(-scores, k - 1)[k - 1]
        keep = np.flatnonzero(-scores <= kth)
        record_ids = record_ids[keep]
        scores = scores[keep]
    order = np.lexsort((record_ids, -scores))[:k]
    return [(int(record_ids[i]), float(scores[i])) for i in order]


class _VectorStore:
    """Growable vector storage with tombstones, shared by both index kinds."""

    def __init__(self, config: AnnConfig):
        self.config = config
        self.counters = IndexCounters()
        self._lock = ReadWriteLock()
        self._reset_storage(id_base=0)

    def _reset_storage(self, id_base: int) -> None:
        self._vectors = np.empty((_INITIAL_CAPACITY, self.config.dim), dtype=np.float64)
        self._active = np.zeros(_INITIAL_CAPACITY, dtype=bool)
        self._record_ids = np.empty(_INITIAL_CAPACITY, dtype=np.int64)
        self._slot_of: dict[int, int] = {}
        self._size = 0
        self._active_count = 0
        # NodeId = id_base + slot; ids keep growing across compactions.
        self._id_base = id_base

    def _check_vector(self, vector, what: str = "vector") -> np.ndarray:
        values = np.asarray(getattr(vector, "values", vector), dtype=np.float64).reshape(-1)
        if values.size != self.config.dim:
            raise SchemaError(f"{what} has dimension {values.size}, index expects {self.config.dim}")
        return values

    def _append(self, values: np.ndarray, record_id: int) -> int:
        record_id = int(record_id)
        if record_id in self._slot_of:
            raise InvalidArgumentError(f"record id {record_id} already indexed")
        if self.config.max_elements is not None and self._size >= self.config.max_elements:
            raise InvalidArgumentError(f"index at capacity ({self.config.max_elements})")
        if self._size == self._vectors.shape[0]:
            capacity = 2 * self._vectors.shape[0]
            self._vectors = np.concatenate([self._vectors, np.empty_like(self._vectors)])[:capacity]
            self._active = np.concatenate([self._active, np.zeros_like(self._active)])
            self._record_ids = np.concatenate([self._record_ids, np.empty_like(self._record_ids)])
        slot = self._size
        self._vectors[slot] = values
        self._active[slot] = True
        self._record_ids[slot] = record_id
        self._slot_of[record_id] = slot
        self._size += 1
        self._active_count += 1
        self.counters.inserts += 1
        return slot

    @property
    def size(self) -> int:
        """Stored entries, tombstones included."""
        return self._size

    @property
    def active_count(self) -> int:
        return self._active_count

    def node_of(self, record_id: int) -> int | None:
        slot = self._slot_of.get(int(record_id))
        return None if slot is None else self._id_base + slot

    def vector_of(self, record_id: int) -> np.ndarray:
        slot = self._slot_of.get(int(record_id))
        if slot is None:
            raise KeyError(record_id)
        view = self._vectors[slot]
        view.flags.writeable = False
        return view

    def is_active(self, record_id: int) -> bool:
        slot = self._slot_of.get(int(record_id))
        return slot is not None and bool(self._active[slot])

    def active_ids(self) -> list[int]:
        return self._record_ids[:self._size][self._active[:self._size]].tolist()

    def deactivate(self, record_ids: Iterable[int]) -> int:
        """
        Marks entries inactive. Unknown and already inactive ids are skipped.

        Returns:
            int: number of entries newly deactivated
        """
        with self._lock.write():
            count = 0
            for record_id in record_ids:
                slot = self._slot_of.get(int(record_id))
                if slot is not None and self._active[slot]:
                    self._active[slot] = False
                    count += 1
            self._active_count -= count
            self.counters.deactivations += count
            return count

    def fragmentation(self) -> float:
        if self._size == 0:
            return 0.0
        return (self._size - self._active_count) / self._size

    def maybe_compact(self) -> CompactionSummary | None:
        """Compacts when the deactivated fraction exceeds the configured threshold."""
        with self._lock.write():
            if self.fragmentation() > self.config.compaction_threshold:
                return self.compact()
        return None

    def compact(self) -> CompactionSummary:
        """Rebuilds storage (and graph) with the active entries only."""
        with self._lock.write():
            dropped = self._size - self._active_count
            if dropped == 0:
                return CompactionSummary(0, self._size)
            keep = np.flatnonzero(self._active[:self._size])
            vectors = self._vectors[keep].copy()
            record_ids = self._record_ids[keep].tolist()
            self._reset_storage(id_base=self._id_base + self._size)
            work = self._rebuild(vectors, record_ids)
            self.counters.compactions += 1
            self.counters.compaction_distance_computations += work
            logger.info("Compacted index: dropped %d tombstones, %d entries remain", dropped, self._size)
            return CompactionSummary(dropped, self._size, work)

    def _rebuild(self, vectors: np.ndarray, record_ids: list[int]) -> int:
        raise NotImplementedError

    def _scan(self, query: np.ndarray, k: int, active_only: bool = True) -> SearchResult:
        if active_only:
            slots = np.flatnonzero(self._active[:self._size])
        else:
            slots = np.arange(self._size)
        scores = self._vectors[slots] @ query
        entries = _rank(self._record_ids[slots], scores, k)
        stats = SearchStats(distance_computations=int(slots.size), nodes_visited=int(slots.size))
        return SearchResult(entries, stats)

    def _validate_search(self, query, k: int, ef_search: int | None) -> tuple[np.ndarray, int]:
        ef = self.config.default_ef_search if ef_search is None else int(ef_search)
        if k < 1:
            raise InvalidArgumentError(f"k must be >= 1, got {k}")
        if ef < k:
            raise InvalidArgumentError(f"ef_search ({ef}) must be >= k ({k})")
        return self._check_vector(query, "query"), ef

    def _record_search(self, result: SearchResult) -> SearchResult:
        self.counters.searches += 1
        self.counters.search_distance_computations += result.stats.distance_computations
        return result


class FlatIndex(_VectorStore):
    """Exact brute-force index with the same protocol as HnswIndex."""

    def insert(self, vector, record_id: int) -> int:
        values = self._check_vector(vector)
        with self._lock.write():
            return self._id_base + self._append(values, record_id)

    def _rebuild(self, vectors: np.ndarray, record_ids: list[int]) -> int:
        for values, record_id in zip(vectors, record_ids):
            self._append(values, record_id)
        return 0

    def flat_topk(self, query, k: int, active_only: bool = True) -> SearchResult:
        """
        Exact top-k by inner product.

        Args:
            query: Query vector
            k: Number of results (k >= stored entries yields the full ranking)
            active_only: Skip deactivated entries

        Returns:
            SearchResult: exact ranking; distance_computations = entries scored
        """
        if k < 1:
            raise InvalidArgumentError(f"k must be >= 1, got {k}")
        query = self._check_vector(query, "query")
        with self._lock.read():
            return self._record_search(self._scan(query, k, active_only))

    def search(self, query, k: int, ef_search: int | None = None) -> SearchResult:
        query, _ = self._validate_search(query, k, ef_search)
        with self._lock.read():
            return self._record_search(self._scan(query, k))


class HnswIndex(_VectorStore):
    """
    Hierarchical navigable small-world graph over inner-product scores.

    Levels follow a geometric distribution with normalisation 1/ln(M). The
    base layer keeps up to 2*M neighbours, upper layers up to M, pruned with
    the neighbour-diversity heuristic.
    """

    def __init__(self, config: AnnConfig):
        super().__init__(config)
        self._rng = np.random.default_rng(config.seed)
        self._level_mult = 1.0 / math.log(config.max_neighbors)
        self._m0 = 2 * config.max_neighbors

    def _reset_storage(self, id_base: int) -> None:
        super()._reset_storage(id_base)
        # self._graphs[level][slot] is the neighbour list of slot on that level.
        self._graphs: list[dict[int, list[int]]] = []
        self._entry: int | None = None
        self._max_level = -1

    def insert(self, vector, record_id: int) -> int:
        """
        Adds a vector and links it into the graph.

        Returns:
            int: NodeId, ascending in insertion order and never reused

        Raises:
            SchemaError: dimension mismatch
        """
        values = self._check_vector(vector)
        with self._lock.write():
            slot = self._append(values, record_id)
            stats = SearchStats()
            self._link(slot, stats)
            self.counters.insert_distance_computations += stats.distance_computations
            return self._id_base + slot

    def _rebuild(self, vectors: np.ndarray, record_ids: list[int]) -> int:
        stats = SearchStats()
        for values, record_id in zip(vectors, record_ids):
            self._link(self._append(values, record_id), stats)
        return stats.distance_computations

    def search(self, query, k: int, ef_search: int | None = None) -> SearchResult:
        """
        Approximate top-k among active entries.

        When ef_search covers every active entry the search degenerates to an
        exact scan.

        Raises:
            InvalidArgumentError: ef_search < k
            SchemaError: query dimension mismatch
        """
        query, ef = self._validate_search(query, k, ef_search)
        with self._lock.read():
            if self._active_count == 0:
                return self._record_search(SearchResult([]))
            if ef >= self._active_count:
                return self._record_search(self._scan(query, k))

            stats = SearchStats()
            seen: set[int] = set()
            entry = self._entry
            entry_dist = -float(self._vectors[entry] @ query)
            stats.distance_computations += 1
            seen.add(entry)
            for level in range(self._max_level, 0, -1):
                entry, entry_dist = self._greedy(query, entry, entry_dist, self._graphs[level], stats, seen)
            found = self._search_layer(query, [(entry_dist, entry)], self._graphs[0], ef, stats, seen, active_only=True)
            stats.nodes_visited = len(seen)

            slots = np.fromiter((slot for _, slot in found), dtype=np.int64, count=len(found))
            scores = np.fromiter((-dist for dist, _ in found), dtype=np.float64, count=len(found))
            entries = _rank(self._record_ids[slots], scores, k)
            return self._record_search(SearchResult(entries, stats))

    # ------------------------------------------------------------------
    # graph construction
    # ------------------------------------------------------------------

    def _link(self, slot: int, stats: SearchStats) -> None:
        level = int(-math.log(1.0 - self._rng.random()) * self._level_mult)
        if self._entry is None:
            for _ in range(level + 1):
                self._graphs.append({slot: []})
            self._entry = slot
            self._max_level = level
            return

        point = self._vectors[slot]
        seen: set[int] = set()
        entry = self._entry
        entry_dist = -float(self._vectors[entry] @ point)
        stats.distance_computations += 1
        # Greedy descent through the levels above the new node's top level.
        for lvl in range(self._max_level, level, -1):
            entry, entry_dist = self._greedy(point, entry, entry_dist, self._graphs[lvl], stats, seen)

        entry_points = [(entry_dist, entry)]
        for lvl in range(min(level, self._max_level), -1, -1):
            layer = self._graphs[lvl]
            level_m = self._m0 if lvl == 0 else self.config.max_neighbors
            # Tombstones remain valid neighbours.
            found = self._search_layer(
                point, entry_points, layer, self.config.ef_construction, stats, seen, active_only=False
            )
            neighbors = self._select_neighbors(point, found, level_m, stats)
            layer[slot] = neighbors
            for neighbor in neighbors:
                adjacency = layer[neighbor]
                adjacency.append(slot)
                if len(adjacency) > level_m:
                    layer[neighbor] = self._shrink(neighbor, adjacency, level_m, stats)
            entry_points = found

        for _ in range(self._max_level + 1, level + 1):
            self._graphs.append({slot: []})
        if level > self._max_level:
            self._max_level = level
            self._entry = slot

    def _select_neighbors(
        self,
        point: np.ndarray,
        candidates: list[tuple[float, int]],
        max_size: int,
        stats: SearchStats,
    ) -> list[int]:
        """Keeps a candidate only if it is closer to the base point than to every neighbour kept so far."""
        if len(candidates) <= max_size:
            return [slot for _, slot in candidates]
        selected: list[int] = []
        for dist, slot in candidates:
            if len(selected) >= max_size:
                break
            if selected:
                sims = self._vectors[selected] @ self._vectors[slot]
                stats.distance_computations += len(selected)
                if float(sims.max()) > -dist:
                    continue
            selected.append(slot)
        return selected

    def _shrink(self, slot: int, adjacency: list[int], max_size: int, stats: SearchStats) -> list[int]:
        point = self._vectors[slot]
        sims = self._vectors[adjacency] @ point
        stats.distance_computations += len(adjacency)
        candidates = sorted(zip((-sims).tolist(), adjacency))
        return self._select_neighbors(point, candidates, max_size, stats)

    # ------------------------------------------------------------------
    # traversal
    # ------------------------------------------------------------------

    def _greedy(
        self,
        query: np.ndarray,
        entry: int,
        entry_dist: float,
        layer: dict[int, list[int]],
        stats: SearchStats,
        seen: set[int],
    ) -> tuple[int, float]:
        """Moves to the best neighbour until no neighbour improves (beam width 1)."""
        improved = True
        while improved:
            improved = False
            neighbors = layer[entry]
            if not neighbors:
                break
            sims = self._vectors[neighbors] @ query
            stats.distance_computations += len(neighbors)
            seen.update(neighbors)
            best = int(np.argmax(sims))
            if -float(sims[best]) < entry_dist:
                entry, entry_dist = neighbors[best], -float(sims[best])
                improved = True
        return entry, entry_dist

    def _search_layer(
        self,
        query: np.ndarray,
        entry_points: list[tuple[float, int]],
        layer: dict[int, list[int]],
        ef: int,
        stats: SearchStats,
        seen: set[int],
        active_only: bool,
    ) -> list[tuple[float, int]]:
        """
        Beam search on one layer.

        Args:
            query: Query point
            entry_points: (distance, slot) pairs to start from
            layer: Adjacency of the layer
            ef: Beam width
            stats: Counters to update
            seen: Union of nodes touched by the whole search
            active_only: Exclude tombstones from the result beam (they are still traversed)

        Returns:
            list[tuple[float, int]]: up to ef (distance, slot) pairs, ascending distance
        """
        active = self._active
        visited = {slot for _, slot in entry_points}
        candidates = list(entry_points)
        heapq.heapify(candidates)
        # Max-heap of the current beam, stored as (-distance, slot).
        beam: list[tuple[float, int]] = []
        for dist, slot in entry_points:
            if not active_only or active[slot]:
                heapq.heappush(beam, (-dist, slot))
                if len(beam) > ef:
                    heapq.heappop(beam)

        while candidates:
            dist, slot = heapq.heappop(candidates)
            if len(beam) >= ef and dist > -beam[0][0]:
                break
            neighbors = [n for n in layer.get(slot, ()) if n not in visited]
            if not neighbors:
                continue
            visited.update(neighbors)
            sims = self._vectors[neighbors] @ query
            stats.distance_computations += len(neighbors)
            bound = -beam[0][0] if len(beam) >= ef else math.inf
            for neighbor, sim in zip(neighbors, sims.tolist()):
                nd = -sim
                if nd < bound:
                    heapq.heappush(candidates, (nd, neighbor))
                    if not active_only or active[neighbor]:
                        heapq.heappush(beam, (-nd, neighbor))
                        if len(beam) > ef:
                            heapq.heappop(beam)
                        if len(beam) >= ef:
                            bound = -beam[0][0]

        seen.update(visited)
        return sorted((-neg, slot) for neg, slot in beam)


def build_index(config: AnnConfig, kind: str = "hnsw") -> HnswIndex | FlatIndex:
    """Creates an empty index of the requested kind ("hnsw" or "flat")."""
    if kind == "hnsw":
        return HnswIndex(config)
    if kind == "flat":
        return FlatIndex(config)
    raise ConfigError(f"unknown index kind: {kind}")
