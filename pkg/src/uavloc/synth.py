"""Deterministic synthetic world for end-to-end runs.

The satellite mosaic is "historical": one region (``ALTERED``) has since
changed, and a copy of that region's *current* appearance sits far away
(``DUPLICATE``). Drone queries are crops of the current scene along a path
crossing the altered region, so global search is lured to the distant
duplicate while an anchored neighbor search is not.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .dataset import SampleRecord, SplitManifest, save_manifest
from .geo import GeoPoint, GeoTransform, meters_distance, pixel_to_geo, write_world_file
from .raster import write_raster
from .tilecut import cut_tiles, Mosaic

SIZE = 1024
QUERY_WINDOW = 256
WINDOWS = (256, 320, 384)
TRANSFORM = GeoTransform(origin_lon=120.0, origin_lat=30.0, px_size_lon=1e-5, px_size_lat=-1e-5)
# (x0, y0, x1, y1) in pixels; DUPLICATE = ALTERED shifted by a multiple of every stride.
ALTERED = (128, 512, 512, 896)
SHIFT = (448, -512)
WAYPOINTS = ((880.0, 880.0), (560.0, 880.0), (320.0, 704.0), (300.0, 460.0))
STEP_PX = 64.0


def _smooth_field(rng: np.random.Generator, size: int, cells: int) -> np.ndarray:
    coarse = rng.uniform(40, 215, size=(cells + 1, cells + 1, 3))
    t = np.linspace(0, cells, size, endpoint=False)
    i0 = t.astype(int)
    f = (t - i0)[:, None]
    rows = coarse[i0] * (1 - f[:, :, None]) + coarse[i0 + 1] * f[:, :, None]
    cols = rows[:, i0] * (1 - f[None, :, :]) + rows[:, i0 + 1] * f[None, :, :]
    return cols


def current_scene(seed: int = 7) -> np.ndarray:
    rng = np.random.default_rng(seed)
    img = _smooth_field(rng, SIZE, 8)
    for _ in range(220):
        w, h = rng.integers(12, 70, size=2)
        x, y = rng.integers(0, SIZE - 70, size=2)
        img[y : y + h, x : x + w] = rng.uniform(0, 255, size=3)
    for _ in range(6):
        p = int(rng.integers(40, SIZE - 40))
        if rng.uniform() < 0.5:
            img[p : p + 7, :] = 128
        else:
            img[:, p : p + 7] = 128
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def historical_mosaic(scene: np.ndarray, seed: int = 11) -> np.ndarray:
    rng = np.random.default_rng(seed)
    out = scene.copy()
    x0, y0, x1, y1 = ALTERED
    dx, dy = SHIFT
    out[y0 + dy : y1 + dy, x0 + dx : x1 + dx] = scene[y0:y1, x0:x1]
    for _ in range(10):
        w, h = rng.integers(50, 110, size=2)
        x = int(rng.integers(x0, x1 - w))
        y = int(rng.integers(y0, y1 - h))
        out[y : y + h, x : x + w] = rng.integers(0, 256, size=3, dtype=np.uint8)
    return out


def path_points() -> list[tuple[int, int]]:
    pts = []
    for (ax, ay), (bx, by) in zip(WAYPOINTS, WAYPOINTS[1:]):
        n = max(1, round(math.hypot(bx - ax, by - ay) / STEP_PX))
        for i in range(n):
            pts.append((round(ax + (bx - ax) * i / n), round(ay + (by - ay) * i / n)))
    pts.append(tuple(int(v) for v in WAYPOINTS[-1]))
    return pts


def make_world(out_dir: str | Path, seed: int = 7) -> dict:
    """Write ``mosaic.png`` + ``mosaic.pgw``, ``queries/*.png`` and ``trace.jsonl``."""
    out_dir = Path(out_dir)
    scene = current_scene(seed)
    mosaic = historical_mosaic(scene, seed + 4)
    write_raster(mosaic, out_dir / "mosaic.png")
    write_world_file(TRANSFORM, out_dir / "mosaic.pgw")

    tiles = cut_tiles(Mosaic(mosaic, TRANSFORM), WINDOWS).tiles
    half = QUERY_WINDOW // 2
    records = []
    for step, (cx, cy) in enumerate(path_points()):
        qid = f"q{step:03d}"
        rel = f"queries/{qid}.png"
        write_raster(scene[cy - half : cy + half, cx - half : cx + half], out_dir / rel)
        truth = pixel_to_geo(TRANSFORM, cx, cy)
        nearest = min(tiles, key=lambda t: (meters_distance(t.center, truth), t.tile_id))
        records.append(SampleRecord(qid, nearest.tile_id, "drone", truth, 100.0, rel, step))
    save_manifest(SplitManifest("query", records), out_dir / "trace.jsonl")
    return {"steps": len(records), "tiles": len(tiles)}


def altered_region_geo() -> tuple[GeoPoint, GeoPoint]:
    x0, y0, x1, y1 = ALTERED
    return pixel_to_geo(TRANSFORM, x0, y0), pixel_to_geo(TRANSFORM, x1, y1)
