"""Lossless 8-bit raster I/O (PNG via Pillow).

Rasters are always ``(height, width, channels)`` uint8 arrays with 1 or 3
channels.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError


def as_raster(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise DataError(f"raster must be HxW, HxWx1 or HxWx3, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        raise DataError(f"raster must be uint8, got {arr.dtype}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DataError("raster is empty")
    return arr


def read_raster(path: str | Path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            if img.mode == "L":
                arr = np.asarray(img, dtype=np.uint8)[:, :, None]
            elif img.mode == "RGB":
                arr = np.asarray(img, dtype=np.uint8)
            else:
                raise DataError(f"{path}: unsupported image mode {img.mode!r} (need L or RGB)")
    except FileNotFoundError:
        raise DataError(f"{path}: no such file") from None
    except OSError as exc:
        raise DataError(f"{path}: cannot read image ({exc})") from None
    return np.ascontiguousarray(arr)


def write_raster(arr: np.ndarray, path: str | Path) -> None:
    arr = as_raster(arr)
    img = Image.fromarray(arr[:, :, 0], mode="L") if arr.shape[2] == 1 else Image.fromarray(arr, mode="RGB")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    img.save(path, format="PNG")
