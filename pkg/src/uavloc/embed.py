"""Embeddings: the built-in grid descriptor, L2 distance and the EMB1 store format.

EMB1 layout (little-endian)::

    b"EMB1" | count:u32 | dim:u32 | count*dim float32, row-major
          | count x (len:u16 | utf-8 sample_id)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import ConfigError, DataError, DimensionMismatchError
from .raster import as_raster

MAGIC = b"EMB1"
_HEAD = struct.Struct("<4sII")
_LEN = struct.Struct("<H")
NORM_TOL = 1e-6
DEGENERATE_NORM = 1e-12


class DegenerateVectorError(DataError):
    """The vector has (near) zero norm and cannot be normalized."""


class StoreFormatError(DataError):
    pass


class BadMagicError(StoreFormatError):
    pass


class TruncatedStoreError(StoreFormatError):
    pass


class IdCountMismatchError(StoreFormatError):
    pass


@dataclass(frozen=True)
class Embedding:
    sample_id: str
    vector: np.ndarray
    normalized: bool = False

    def __post_init__(self) -> None:
        vec = np.asarray(self.vector, dtype=np.float64)
        if vec.ndim != 1:
            raise DataError(f"embedding {self.sample_id!r} must be 1-D")
        if not np.all(np.isfinite(vec)):
            raise DataError(f"embedding {self.sample_id!r} has non-finite entries")
        if self.normalized and abs(float(np.linalg.norm(vec)) - 1.0) > NORM_TOL:
            raise DataError(f"embedding {self.sample_id!r} flagged normalized but norm != 1")
        object.__setattr__(self, "vector", vec)

    @property
    def dimension(self) -> int:
        return self.vector.shape[0]


def l2_normalize(vector) -> np.ndarray:
    v = np.asarray(vector, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise DataError("cannot normalize a vector with non-finite entries")
    norm = float(np.linalg.norm(v))
    if norm < DEGENERATE_NORM:
        raise DegenerateVectorError(f"vector norm {norm:.3g} is degenerate")
    return v / norm


def euclidean(a: Embedding | np.ndarray, b: Embedding | np.ndarray) -> float:
    va = a.vector if isinstance(a, Embedding) else np.asarray(a, dtype=np.float64)
    vb = b.vector if isinstance(b, Embedding) else np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape:
        raise DimensionMismatchError(f"dimension mismatch: {va.shape} vs {vb.shape}")
    return float(np.sqrt(np.sum((va - vb) ** 2)))


def cell_edges(n: int, grid: int) -> list[int]:
    return [(i * n) // grid for i in range(grid + 1)]


def toy_descriptor(raster: np.ndarray, grid: int = 4, sample_id: str = "") -> Embedding:
    """Grid-of-means descriptor, a deterministic stand-in for a learned backbone.

    The raster is split into ``grid x grid`` cells (integer edges
    ``floor(i * n / grid)``); each cell contributes its mean per channel,
    cell-major then channel. The result is centered on its own mean and
    L2-normalized. Flat images center to the zero vector, which is returned
    unnormalized with ``normalized=False``.
    """
    raster = as_raster(raster)
    h, w, c = raster.shape
    if grid < 1:
        raise ConfigError("grid must be >= 1")
    if grid > min(h, w):
        raise ConfigError(f"grid {grid} exceeds raster size {w}x{h}")
    ys, xs = cell_edges(h, grid), cell_edges(w, grid)
    data = raster.astype(np.float64)
    feats = np.empty((grid, grid, c), dtype=np.float64)
    for i in range(grid):
        for j in range(grid):
            feats[i, j] = data[ys[i] : ys[i + 1], xs[j] : xs[j + 1]].mean(axis=(0, 1))
    vec = feats.reshape(-1)
    vec = vec - vec.mean()
    try:
        return Embedding(sample_id, l2_normalize(vec), normalized=True)
    except DegenerateVectorError:
        return Embedding(sample_id, np.zeros_like(vec), normalized=False)


class EmbeddingStore:
    """An ordered, uniquely keyed set of equal-length float32 vectors."""

    def __init__(self, ids: Sequence[str], matrix: np.ndarray, dimension: int | None = None):
        matrix = np.asarray(matrix, dtype=np.float32)
        if matrix.ndim != 2:
            if matrix.size == 0 and dimension is not None:
                matrix = matrix.reshape(0, dimension)
            else:
                raise DataError("embedding matrix must be 2-D")
        if dimension is not None and matrix.shape[1] != dimension:
            raise DimensionMismatchError(f"matrix width {matrix.shape[1]} != dimension {dimension}")
        if matrix.shape[0] != len(ids):
            raise DataError(f"{len(ids)} ids for {matrix.shape[0]} vectors")
        if not np.all(np.isfinite(matrix)):
            raise DataError("embedding store contains non-finite entries")
        self.ids = list(ids)
        self._pos = {sid: i for i, sid in enumerate(self.ids)}
        if len(self._pos) != len(self.ids):
            dup = next(s for s in self.ids if self.ids.count(s) > 1)
            raise DataError(f"duplicate sample_id {dup!r} in embedding store")
        self.matrix = np.ascontiguousarray(matrix)

    @classmethod
    def from_embeddings(cls, embeddings: Sequence[Embedding], dimension: int | None = None) -> "EmbeddingStore":
        if embeddings:
            dims = {e.dimension for e in embeddings}
            if len(dims) != 1:
                raise DimensionMismatchError(f"mixed dimensions {sorted(dims)}")
            dimension = dims.pop()
        if dimension is None:
            raise ConfigError("dimension required for an empty store")
        mat = np.array([e.vector for e in embeddings], dtype=np.float32).reshape(len(embeddings), dimension)
        return cls([e.sample_id for e in embeddings], mat, dimension)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, sample_id: str) -> bool:
        return sample_id in self._pos

    def __iter__(self) -> Iterator[Embedding]:
        for sid in self.ids:
            yield self[sid]

    def __getitem__(self, sample_id: str) -> Embedding:
        try:
            vec = self.matrix[self._pos[sample_id]]
        except KeyError:
            raise KeyError(sample_id) from None
        return Embedding(sample_id, vec, normalized=abs(float(np.linalg.norm(vec.astype(np.float64))) - 1) <= NORM_TOL)

    def vector(self, sample_id: str) -> np.ndarray:
        return self.matrix[self._pos[sample_id]].astype(np.float64)

    def normalized(self) -> "EmbeddingStore":
        """Copy with every row L2-normalized; zero rows are kept as-is."""
        mat = self.matrix.astype(np.float64)
        norms = np.linalg.norm(mat, axis=1, keepdims=True)
        safe = np.where(norms < DEGENERATE_NORM, 1.0, norms)
        return EmbeddingStore(self.ids, mat / safe, self.dimension)


def to_bytes(store: EmbeddingStore) -> bytes:
    parts = [_HEAD.pack(MAGIC, len(store), store.dimension), store.matrix.astype("<f4").tobytes()]
    for sid in store.ids:
        raw = sid.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise DataError(f"sample_id too long for the store format ({len(raw)} bytes)")
        parts.append(_LEN.pack(len(raw)))
        parts.append(raw)
    return b"".join(parts)


def from_bytes(data: bytes, source: str = "<bytes>") -> EmbeddingStore:
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError(f"{source}: bad magic {data[:4]!r}, expected {MAGIC!r}")
    if len(data) < _HEAD.size:
        raise TruncatedStoreError(f"{source}: truncated header")
    _, count, dim = _HEAD.unpack_from(data, 0)
    end = _HEAD.size + 4 * count * dim
    if len(data) < end:
        raise TruncatedStoreError(f"{source}: payload needs {end} bytes, file has {len(data)}")
    matrix = np.frombuffer(data, dtype="<f4", count=count * dim, offset=_HEAD.size).reshape(count, dim)
    ids = []
    pos = end
    while pos < len(data):
        if pos + _LEN.size > len(data):
            raise IdCountMismatchError(f"{source}: dangling bytes after {len(ids)} ids")
        (n,) = _LEN.unpack_from(data, pos)
        pos += _LEN.size
        if pos + n > len(data):
            raise IdCountMismatchError(f"{source}: id {len(ids)} runs past end of file")
        try:
            ids.append(data[pos : pos + n].decode("utf-8"))
        except UnicodeDecodeError:
            raise StoreFormatError(f"{source}: id {len(ids)} is not valid UTF-8") from None
        pos += n
    if len(ids) != count:
        raise IdCountMismatchError(f"{source}: header declares {count} vectors but footer has {len(ids)} ids")
    return EmbeddingStore(ids, matrix.astype(np.float32), dim)


def write_store(store: EmbeddingStore, path: str | Path) -> None:
    Path(path).write_bytes(to_bytes(store))


def read_store(path: str | Path, normalize: bool = False) -> EmbeddingStore:
    try:
        data = Path(path).read_bytes()
    except FileNotFoundError:
        raise DataError(f"{path}: no such file") from None
    store = from_bytes(data, str(path))
    return store.normalized() if normalize else store

