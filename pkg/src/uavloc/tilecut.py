"""Cut a georeferenced mosaic into a multi-scale, overlapping tile database."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable

import numpy as np

from . import _jsonl
from .errors import ConfigError, DataError
from .geo import GeoPoint, GeoTransform, pixel_to_geo, read_world_file
from .raster import as_raster, read_raster, write_raster

log = logging.getLogger(__name__)

TILE_FORMAT = "uavloc/tiles"
DEFAULT_WINDOWS = (512, 640, 768)
DEFAULT_STRIDE_FRACTION = Fraction(1, 4)
WORLD_FILE_SUFFIXES = (".pgw", ".wld", ".tfw")


@dataclass(frozen=True)
class Mosaic:
    pixels: np.ndarray  # (height, width, channels) uint8
    transform: GeoTransform

    def __post_init__(self) -> None:
        object.__setattr__(self, "pixels", as_raster(self.pixels))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]


@dataclass(frozen=True)
class TileRecord:
    tile_id: str
    window_px: int
    offset_x: int
    offset_y: int
    center: GeoPoint
    raster_path: str = ""

    def to_row(self) -> dict:
        return {
            "tile_id": self.tile_id,
            "window_px": self.window_px,
            "offset_x": self.offset_x,
            "offset_y": self.offset_y,
            "center_lat": self.center.lat,
            "center_lon": self.center.lon,
            "raster_path": self.raster_path,
        }


@dataclass
class CutResult:
    tiles: list[TileRecord]
    warnings: list[str] = field(default_factory=list)


def tile_id(window: int, offset_x: int, offset_y: int) -> str:
    return f"s{window}_x{offset_x}_y{offset_y}"


def parse_fraction(value: Fraction | float | int | str) -> Fraction:
    try:
        frac = Fraction(value) if not isinstance(value, float) else Fraction(value).limit_denominator(10_000)
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"invalid stride fraction {value!r}") from None
    if not 0 < frac <= 1:
        raise ConfigError(f"stride fraction must be in (0, 1], got {frac}")
    return frac


def stride_for(window: int, stride_fraction: Fraction) -> int:
    """``round(window * fraction)`` with halves rounded up, computed exactly."""
    stride = math.floor(window * stride_fraction + Fraction(1, 2))
    if stride < 1:
        raise ConfigError(f"stride for window {window} at fraction {stride_fraction} rounds to 0")
    return stride


def tile_offsets(dim: int, window: int, stride: int) -> range:
    """Offsets along one axis at which a ``window`` fits entirely inside ``dim``."""
    if window > dim:
        return range(0)
    return range(0, dim - window + 1, stride)


def crop(m: Mosaic, offset_x: int, offset_y: int, window_px: int) -> np.ndarray:
    if window_px < 1 or offset_x < 0 or offset_y < 0:
        raise DataError(f"invalid crop window ({offset_x}, {offset_y}, {window_px})")
    if offset_x + window_px > m.width or offset_y + window_px > m.height:
        raise DataError(
            f"crop ({offset_x}, {offset_y}, {window_px}) exceeds mosaic {m.width}x{m.height}"
        )
    return m.pixels[offset_y : offset_y + window_px, offset_x : offset_x + window_px].copy()


def cut_tiles(
    m: Mosaic,
    windows: Iterable[int] = DEFAULT_WINDOWS,
    stride_fraction: Fraction | float | str = DEFAULT_STRIDE_FRACTION,
    out_dir: str | Path | None = None,
) -> CutResult:
    """Enumerate (and optionally persist) every fully-contained tile at each scale.

    Output is ordered by ``(window, offset_y, offset_x)``. Partial windows at
    the right and bottom edges are dropped. When ``out_dir`` is given each
    tile is written to ``out_dir/tiles/<tile_id>.png`` and its
    ``raster_path`` is relative to ``out_dir``.
    """
    frac = parse_fraction(stride_fraction)
    wins = sorted(set(int(w) for w in windows))
    if not wins or wins[0] < 1:
        raise ConfigError("windows must be a non-empty list of positive sizes")
    strides = {w: stride_for(w, frac) for w in wins}

    result = CutResult(tiles=[])
    for w in wins:
        if w > m.width or w > m.height:
            msg = f"window {w} exceeds mosaic {m.width}x{m.height}; scale skipped"
            log.warning(msg)
            result.warnings.append(msg)
            continue
        s = strides[w]
        for oy in tile_offsets(m.height, w, s):
            for ox in tile_offsets(m.width, w, s):
                tid = tile_id(w, ox, oy)
                rel = ""
                if out_dir is not None:
                    rel = f"tiles/{tid}.png"
                    write_raster(crop(m, ox, oy, w), Path(out_dir) / rel)
                center = pixel_to_geo(m.transform, ox + w / 2, oy + w / 2)
                result.tiles.append(TileRecord(tid, w, ox, oy, center, rel))
    return result


def load_mosaic(path: str | Path, world_file: str | Path | None = None) -> Mosaic:
    """Load an image plus its world-file sidecar (``.pgw``, ``.wld`` or ``.tfw``)."""
    path = Path(path)
    if world_file is None:
        for suffix in WORLD_FILE_SUFFIXES:
            if path.with_suffix(suffix).exists():
                world_file = path.with_suffix(suffix)
                break
        else:
            raise DataError(f"{path}: no world file found next to the mosaic")
    return Mosaic(read_raster(path), read_world_file(world_file))


def write_tile_manifest(tiles: list[TileRecord], path: str | Path, **config) -> None:
    rows = [_jsonl.dumps(t.to_row()) for t in tiles]
    _jsonl.write_lines(path, _jsonl.header(TILE_FORMAT, **config), rows)


def read_tile_manifest(path: str | Path) -> tuple[dict, list[TileRecord]]:
    head, records = _jsonl.read_lines(path, TILE_FORMAT)
    tiles = []
    seen = set()
    for lineno, rec in records:
        try:
            t = TileRecord(
                tile_id=str(rec["tile_id"]),
                window_px=int(rec["window_px"]),
                offset_x=int(rec["offset_x"]),
                offset_y=int(rec["offset_y"]),
                center=GeoPoint(float(rec["center_lat"]), float(rec["center_lon"])),
                raster_path=str(rec["raster_path"]),
            )
        except KeyError as exc:
            raise DataError(f"{path}:{lineno}: missing field {exc}") from None
        except (TypeError, ValueError) as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
        if t.tile_id in seen:
            raise DataError(f"{path}:{lineno}: duplicate tile_id {t.tile_id!r}")
        seen.add(t.tile_id)
        tiles.append(t)
    return head, tiles
