"""Geographic primitives: points, north-up pixel transforms and distances."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

from .errors import DataError, OutOfRangeError

EARTH_RADIUS_M = 6_371_008.8


@dataclass(frozen=True)
class GeoPoint:
    """A WGS-84 latitude/longitude pair in degrees."""

    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise OutOfRangeError(f"non-finite coordinate ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise OutOfRangeError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise OutOfRangeError(f"longitude {self.lon} outside [-180, 180]")

    def as_list(self) -> list[float]:
        return [self.lat, self.lon]


@dataclass(frozen=True)
class GeoTransform:
    """North-up affine mapping between pixel-edge coordinates and degrees.

    Pixel ``(0, 0)`` is the top-left corner of the top-left pixel, so the
    center of pixel ``(i, j)`` sits at ``(i + 0.5, j + 0.5)``.
    """

    origin_lon: float
    origin_lat: float
    px_size_lon: float
    px_size_lat: float

    def __post_init__(self) -> None:
        values = (self.origin_lon, self.origin_lat, self.px_size_lon, self.px_size_lat)
        if not all(math.isfinite(v) for v in values):
            raise DataError("geotransform contains non-finite values")
        if self.px_size_lon <= 0:
            raise DataError("px_size_lon must be > 0")
        if self.px_size_lat >= 0:
            raise DataError("px_size_lat must be < 0 (north-up)")


def degree_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Planar Euclidean distance in raw degrees, longitude and latitude treated alike."""
    return math.hypot(a.lon - b.lon, a.lat - b.lat)


def meters_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle (haversine) distance in meters on a spherical Earth."""
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dphi = phi2 - phi1
    dlam = math.radians(b.lon - a.lon)
    # sqrt(haversine) written as a hypot so tiny separations do not underflow
    root_h = math.hypot(math.sin(dphi / 2), math.sqrt(math.cos(phi1) * math.cos(phi2)) * math.sin(dlam / 2))
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, root_h))


def pixel_to_geo(t: GeoTransform, px: float, py: float) -> GeoPoint:
    if not (math.isfinite(px) and math.isfinite(py)):
        raise DataError(f"non-finite pixel coordinate ({px}, {py})")
    return GeoPoint(lat=t.origin_lat + py * t.px_size_lat, lon=t.origin_lon + px * t.px_size_lon)


def geo_to_pixel(t: GeoTransform, p: GeoPoint) -> tuple[float, float]:
    return ((p.lon - t.origin_lon) / t.px_size_lon, (p.lat - t.origin_lat) / t.px_size_lat)


def read_world_file(path: str | Path) -> GeoTransform:
    """Parse an ESRI world file (``.pgw``/``.tfw``/``.wld``).

    World files reference the *center* of the top-left pixel; the returned
    transform is shifted half a pixel to the corner. Rotation terms must be
    zero.
    """
    lines = [ln.strip() for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
    if len(lines) != 6:
        raise DataError(f"{path}: world file must have 6 numeric lines, got {len(lines)}")
    try:
        a, d, b, e, c, f = (float(v) for v in lines)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    if b != 0.0 or d != 0.0:
        raise DataError(f"{path}: rotated or sheared mosaics are not supported")
    return GeoTransform(origin_lon=c - a / 2, origin_lat=f - e / 2, px_size_lon=a, px_size_lat=e)


def write_world_file(t: GeoTransform, path: str | Path) -> None:
    values = (
        t.px_size_lon,
        0.0,
        0.0,
        t.px_size_lat,
        t.origin_lon + t.px_size_lon / 2,
        t.origin_lat + t.px_size_lat / 2,
    )
    Path(path).write_text("".join(f"{v!r}\n" for v in values), encoding="utf-8")
