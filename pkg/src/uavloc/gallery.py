"""Load a gallery (tile manifest or sample manifest) and join it with its embeddings."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .dataset import MANIFEST_FORMAT, load_manifest
from .embed import read_store
from .errors import DataError
from .retrieval import GeoIndex, IndexEntry
from .tilecut import TILE_FORMAT, read_tile_manifest


@dataclass
class GalleryItem:
    entry: IndexEntry
    raster_path: Path | None


def read_gallery(path: str | Path, view: str = "satellite") -> list[GalleryItem]:
    """Read either a tile manifest or a sample manifest as gallery items.

    Tiles are their own class. Sample manifests are filtered to ``view``
    unless it is ``"any"``.
    """
    path = Path(path)
    base = path.parent
    try:
        fmt = json.loads(path.read_text(encoding="utf-8").split("\n", 1)[0]).get("format")
    except FileNotFoundError:
        raise DataError(f"{path}: no such file") from None
    except (json.JSONDecodeError, AttributeError, UnicodeDecodeError):
        raise DataError(f"{path}:1: unreadable header") from None
    if fmt == TILE_FORMAT:
        _, tiles = read_tile_manifest(path)
        return [
            GalleryItem(IndexEntry(t.tile_id, t.center, t.tile_id), base / t.raster_path if t.raster_path else None)
            for t in tiles
        ]
    if fmt == MANIFEST_FORMAT:
        m = load_manifest(path)
        return [
            GalleryItem(IndexEntry(r.sample_id, r.geo, r.class_id), base / r.image_path if r.image_path else None)
            for r in m.records
            if view == "any" or r.view == view
        ]
    raise DataError(f"{path}:1: unknown manifest format {fmt!r}")


def build_index(store_path: str, manifest_path: str, view: str = "satellite", normalize: bool = False) -> GeoIndex:
    store = read_store(store_path, normalize=normalize)
    return GeoIndex.build(store, [g.entry for g in read_gallery(manifest_path, view)])
