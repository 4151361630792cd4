"""Exhaustive feature-distance ranking over a geo-tagged gallery.

Two strategies: global search over the whole gallery, and neighbor search
restricted to entries strictly closer than ``radius_m`` meters to a center.
Ties in feature distance are broken by ascending ``sample_id``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import _jsonl
from .embed import Embedding, EmbeddingStore
from .errors import ConfigError, DataError, DimensionMismatchError, RuntimeDomainError
from .geo import GeoPoint, meters_distance

RANKED_FORMAT = "uavloc/ranked"
UNBOUNDED = math.inf


class EmptyDomainError(RuntimeDomainError):
    def __init__(self, center: GeoPoint, radius_m: float):
        super().__init__(f"no gallery entry within {radius_m} m of ({center.lat}, {center.lon})")
        self.center = center
        self.radius_m = radius_m


@dataclass(frozen=True)
class IndexEntry:
    sample_id: str
    geo: GeoPoint
    class_id: str


class GeoIndex:
    """Immutable gallery of embeddings with their positions and class labels."""

    def __init__(self, entries: Sequence[IndexEntry], matrix: np.ndarray):
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != len(entries):
            raise DataError(f"matrix shape {matrix.shape} does not match {len(entries)} entries")
        ids = [e.sample_id for e in entries]
        if len(set(ids)) != len(ids):
            raise DataError("duplicate sample_id in index")
        self.entries = tuple(entries)
        self.matrix = matrix
        self.matrix.flags.writeable = False
        self._ids = np.array(ids, dtype=str) if ids else np.array([], dtype="<U1")

    @classmethod
    def build(cls, store: EmbeddingStore, entries: Iterable[IndexEntry]) -> "GeoIndex":
        """Join geo/class records with their vectors; order follows ``entries``."""
        entries = list(entries)
        missing = [e.sample_id for e in entries if e.sample_id not in store]
        if missing:
            raise DataError(f"no embedding for gallery entries {missing[:5]}" + (" ..." if len(missing) > 5 else ""))
        matrix = np.array([store.vector(e.sample_id) for e in entries], dtype=np.float64)
        return cls(entries, matrix.reshape(len(entries), store.dimension))

    @property
    def dimension(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return len(self.entries)

    def subset(self, mask: np.ndarray) -> "GeoIndex":
        keep = np.flatnonzero(mask)
        return GeoIndex([self.entries[i] for i in keep], self.matrix[keep].reshape(len(keep), self.dimension))

    def distances(self, query: np.ndarray) -> np.ndarray:
        if query.shape != (self.dimension,):
            raise DimensionMismatchError(f"query dimension {query.shape[-1] if query.ndim else 0} != index dimension {self.dimension}")
        diff = self.matrix - query
        return np.sqrt(np.sum(diff * diff, axis=-1))


@dataclass(frozen=True)
class RankedEntry:
    sample_id: str
    distance: float
    geo: GeoPoint
    class_id: str


@dataclass
class RankedList:
    query_id: str
    entries: list[RankedEntry]
    strategy: dict[str, Any] = field(default_factory=lambda: {"kind": "global"})

    def __len__(self) -> int:
        return len(self.entries)

    def top(self) -> RankedEntry:
        return self.entries[0]


def _query_vector(query: Embedding | np.ndarray) -> np.ndarray:
    if isinstance(query, Embedding):
        return query.vector
    return np.asarray(query, dtype=np.float64)


def rank_global(index: GeoIndex, query: Embedding | np.ndarray, k: int, query_id: str | None = None) -> RankedList:
    if k < 1:
        raise ConfigError("k must be >= 1")
    if len(index) == 0:
        raise DataError("cannot rank against an empty index")
    vec = _query_vector(query)
    dist = index.distances(vec)
    order = np.lexsort((index._ids, dist))[:k]
    qid = query_id if query_id is not None else (query.sample_id if isinstance(query, Embedding) else "")
    entries = [
        RankedEntry(index.entries[i].sample_id, float(dist[i]), index.entries[i].geo, index.entries[i].class_id)
        for i in order
    ]
    return RankedList(qid, entries, {"kind": "global"})


def filter_neighbor(index: GeoIndex, center: GeoPoint, radius_m: float) -> GeoIndex:
    """Sub-index of entries with ``meters_distance(entry, center) < radius_m`` (strict)."""
    if not radius_m > 0:
        raise ConfigError(f"radius_m must be > 0, got {radius_m}")
    if radius_m == UNBOUNDED:
        return index
    mask = np.array([meters_distance(e.geo, center) < radius_m for e in index.entries], dtype=bool)
    return index.subset(mask)


def rank_neighbor(
    index: GeoIndex,
    query: Embedding | np.ndarray,
    center: GeoPoint,
    radius_m: float,
    k: int,
    query_id: str | None = None,
) -> RankedList:
    domain = filter_neighbor(index, center, radius_m)
    if len(domain) == 0:
        raise EmptyDomainError(center, radius_m)
    ranked = rank_global(domain, query, k, query_id)
    ranked.strategy = {"kind": "neighbor", "center": center.as_list(), "radius_m": radius_m, "domain_size": len(domain)}
    return ranked


def format_distance(d: float) -> str:
    return format(d, ".17g")


def write_ranked(lists: Sequence[RankedList], path: str | Path, **config) -> None:
    rows = []
    for rl in lists:
        for rank, e in enumerate(rl.entries, start=1):
            rows.append(
                "{"
                f'"query_id": {_jsonl.dumps(rl.query_id)}, "rank": {rank}, '
                f'"sample_id": {_jsonl.dumps(e.sample_id)}, "distance": {format_distance(e.distance)}, '
                f'"lat": {e.geo.lat!r}, "lon": {e.geo.lon!r}, "class_id": {_jsonl.dumps(e.class_id)}'
                "}"
            )
    _jsonl.write_lines(path, _jsonl.header(RANKED_FORMAT, **config), rows)


def read_ranked(path: str | Path) -> tuple[dict, list[RankedList]]:
    head, rows = _jsonl.read_lines(path, RANKED_FORMAT)
    lists: dict[str, RankedList] = {}
    strategy = head.get("config", {}).get("strategy", {"kind": "global"})
    for lineno, row in rows:
        try:
            qid = str(row["query_id"])
            rl = lists.setdefault(qid, RankedList(qid, [], strategy))
            if int(row["rank"]) != len(rl.entries) + 1:
                raise DataError(f"{path}:{lineno}: rank {row['rank']} out of sequence for query {qid!r}")
            rl.entries.append(
                RankedEntry(str(row["sample_id"]), float(row["distance"]), GeoPoint(float(row["lat"]), float(row["lon"])),
                            str(row["class_id"]))
            )
        except KeyError as exc:
            raise DataError(f"{path}:{lineno}: missing field {exc}") from None
        except (TypeError, ValueError) as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
    return head, list(lists.values())
