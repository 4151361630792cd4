"""Small constructed worlds shared by the replay and acceptance tests."""

from __future__ import annotations

import numpy as np

from conftest import make_index
from uavloc.dataset import SampleRecord
from uavloc.geo import GeoPoint

ORIGIN = GeoPoint(30.0, 120.0)
SPACING_DEG = 0.0005  # about 48 m of longitude at 30N
RADIUS_M = 100.0
DUP_STEP = 5


def line_geo(i: int) -> GeoPoint:
    return GeoPoint(ORIGIN.lat, ORIGIN.lon + i * SPACING_DEG)


def one_hot_world(n: int = 8):
    """Tiles along a line with one-hot embeddings; each query is its tile's vector."""
    index = make_index(np.eye(n), [line_geo(i) for i in range(n)], ids=[f"t{i:02d}" for i in range(n)])
    trace = [SampleRecord(f"q{i:02d}", f"t{i:02d}", "drone", line_geo(i), step=i) for i in range(n)]
    queries = {f"q{i:02d}": np.eye(n)[i] for i in range(n)}
    return index, trace, queries


def duplicate_world(n: int = 10, seed: int = 3):
    """Line of tiles plus one tile 2 km away that matches step ``DUP_STEP``'s query better than its true tile.

    Returns ``(index, trace, queries)``.
    """
    rng = np.random.default_rng(seed)
    vecs = rng.normal(size=(n, 16))
    dup_vec = vecs[DUP_STEP].copy()
    vecs[DUP_STEP] += 0.01 * rng.normal(size=16)
    far = GeoPoint(ORIGIN.lat + 0.018, ORIGIN.lon)
    ids = [f"t{i:02d}" for i in range(n)] + ["dup"]
    index = make_index(np.vstack([vecs, dup_vec]), [line_geo(i) for i in range(n)] + [far], ids=ids)
    trace = [SampleRecord(f"q{i:02d}", f"t{i:02d}", "drone", line_geo(i), step=i) for i in range(n)]
    queries = {f"q{i:02d}": (dup_vec if i == DUP_STEP else vecs[i] + 0.001 * rng.normal(size=16)) for i in range(n)}
    return index, trace, queries
