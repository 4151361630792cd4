"""Rotation augmentation: crop a rotated square inscribed in the image's inscribed circle.

The square's corners lie on the largest circle centered in the image; it
is resampled axis-aligned so the output looks like the scene under a
different flight heading, with the image edges erased.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, DataError
from .raster import as_raster

HALF_PI = math.pi / 2
TWO_PI = 2 * math.pi
SAMPLINGS = ("nearest", "bilinear")
_QUARTER_SNAP = 1e-9


@dataclass(frozen=True)
class RotationCrop:
    theta: float
    out_size: Optional[int] = None
    sampling: str = "bilinear"

    def __post_init__(self) -> None:
        if not math.isfinite(self.theta):
            raise ConfigError("theta must be finite")
        object.__setattr__(self, "theta", self.theta % TWO_PI)
        if self.out_size is not None and self.out_size < 1:
            raise ConfigError("out_size must be >= 1")
        if self.sampling not in SAMPLINGS:
            raise ConfigError(f"sampling must be one of {SAMPLINGS}")


def random_theta(rng: np.random.Generator) -> float:
    return float(rng.uniform(0.0, TWO_PI))


def circle(width: int, height: int) -> tuple[float, float, float]:
    return width / 2, height / 2, min(width, height) / 2


def inscribed_square_corners(width: int, height: int, theta: float) -> list[tuple[float, float]]:
    """Corners at angles ``theta + 45deg + k*90deg`` on the inscribed circle, k = 0..3."""
    if width < 2 or height < 2:
        raise DataError("image must be at least 2x2")
    cx, cy, r = circle(width, height)
    out = []
    for k in range(4):
        phi = theta + math.pi / 4 + k * HALF_PI
        out.append((cx + r * math.cos(phi), cy + r * math.sin(phi)))
    return out


def default_out_size(width: int, height: int) -> int:
    return max(1, round(circle(width, height)[2] * math.sqrt(2)))


def _split_quarter_turns(theta: float) -> tuple[int, float]:
    t = theta / HALF_PI
    nearest = round(t)
    if abs(t - nearest) < _QUARTER_SNAP:
        return nearest % 4, 0.0
    q = math.floor(t)
    return q % 4, theta - q * HALF_PI


def sample_coordinates(width: int, height: int, theta: float, out_size: int) -> tuple[np.ndarray, np.ndarray]:
    """Continuous source ``(x, y)`` sampled by each output pixel center.

    Output corner k sits at angle ``45deg + k*90deg`` about the output
    center, so source corner k maps onto it and ``theta = 0`` is the plain
    centered crop.
    """
    q, alpha = _split_quarter_turns(theta % TWO_PI)
    xs, ys = _sample_coordinates(width, height, alpha, out_size)
    return np.rot90(xs, q), np.rot90(ys, q)


def _sample_coordinates(width: int, height: int, alpha: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    cx, cy, r = circle(width, height)
    scale = r * math.sqrt(2) / n
    grid = (np.arange(n, dtype=np.float64) + 0.5 - n / 2) * scale
    u, v = np.meshgrid(grid, grid)  # u along columns (x), v along rows (y)
    ca, sa = (1.0, 0.0) if alpha == 0.0 else (math.cos(alpha), math.sin(alpha))
    return cx + ca * u - sa * v, cy + sa * u + ca * v


def _sample(raster: np.ndarray, xs: np.ndarray, ys: np.ndarray, sampling: str) -> np.ndarray:
    h, w, _ = raster.shape
    if sampling == "nearest":
        ix = np.clip(np.floor(xs).astype(np.intp), 0, w - 1)
        iy = np.clip(np.floor(ys).astype(np.intp), 0, h - 1)
        return raster[iy, ix]
    # bilinear on pixel centers
    x = xs - 0.5
    y = ys - 0.5
    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    x0i = np.clip(x0.astype(np.intp), 0, w - 1)
    y0i = np.clip(y0.astype(np.intp), 0, h - 1)
    x1i = np.clip(x0i + 1, 0, w - 1)
    y1i = np.clip(y0i + 1, 0, h - 1)
    src = raster.astype(np.float64)
    top = src[y0i, x0i] * (1 - fx) + src[y0i, x1i] * fx
    bottom = src[y1i, x0i] * (1 - fx) + src[y1i, x1i] * fx
    out = top * (1 - fy) + bottom * fy
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def rotated_crop(raster: np.ndarray, cfg: RotationCrop) -> np.ndarray:
    """Resample the ``cfg.theta``-rotated inscribed square to an axis-aligned image.

    Exact quarter turns are computed by permuting the unrotated result, so
    under nearest sampling ``theta + 90deg`` is a pixel-exact quarter turn of
    ``theta``.
    """
    raster = as_raster(raster)
    h, w, _ = raster.shape
    if w < 2 or h < 2:
        raise DataError("image must be at least 2x2")
    n = cfg.out_size or default_out_size(w, h)
    q, alpha = _split_quarter_turns(cfg.theta)
    xs, ys = _sample_coordinates(w, h, alpha, n)
    out = _sample(raster, xs, ys, cfg.sampling)
    return np.ascontiguousarray(np.rot90(out, q))
