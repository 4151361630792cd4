from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from uavloc.geo import GeoPoint
from uavloc.retrieval import GeoIndex, IndexEntry

DATA = Path(__file__).parent / "data"


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


def make_index(vectors, geos, ids=None, classes=None) -> GeoIndex:
    n = len(vectors)
    ids = ids or [f"t{i:04d}" for i in range(n)]
    classes = classes or list(ids)
    entries = [IndexEntry(i, g if isinstance(g, GeoPoint) else GeoPoint(*g), c) for i, g, c in zip(ids, geos, classes)]
    return GeoIndex(entries, np.asarray(vectors, dtype=np.float64).reshape(n, -1))


def random_index(rng: np.random.Generator, n: int = 50, d: int = 8, span_deg: float = 0.01) -> GeoIndex:
    vecs = rng.normal(size=(n, d))
    geos = [(30.0 + rng.uniform(0, span_deg), 120.0 + rng.uniform(0, span_deg)) for _ in range(n)]
    return make_index(vecs, geos)
