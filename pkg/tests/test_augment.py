import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uavloc.augment import (
    RotationCrop,
    default_out_size,
    inscribed_square_corners,
    random_theta,
    rotated_crop,
    sample_coordinates,
)
from uavloc.errors import ConfigError, DataError


def rand_raster(rng, h, w, c=3):
    return rng.integers(0, 256, size=(h, w, c), dtype=np.uint8)


def quarter_turn_oracle(a):
    """Counter-clockwise quarter turn written as an index permutation: B[i, j] = A[j, n-1-i]."""
    n = a.shape[0]
    b = np.empty_like(a)
    for i in range(n):
        for j in range(a.shape[1]):
            b[i, j] = a[j, n - 1 - i]
    return b


def bilinear_oracle(raster, theta, n):
    """Per-pixel rotation and bilinear interpolation in plain Python."""
    h, w, c = raster.shape
    cx, cy, r = w / 2, h / 2, min(w, h) / 2
    step = r * math.sqrt(2) / n
    out = np.zeros((n, n, c))
    for i in range(n):
        for j in range(n):
            u = (j + 0.5 - n / 2) * step
            v = (i + 0.5 - n / 2) * step
            x = cx + math.cos(theta) * u - math.sin(theta) * v - 0.5
            y = cy + math.sin(theta) * u + math.cos(theta) * v - 0.5
            x0, y0 = math.floor(x), math.floor(y)
            fx, fy = x - x0, y - y0

            def px(yy, xx):
                return raster[min(max(yy, 0), h - 1), min(max(xx, 0), w - 1)].astype(float)

            out[i, j] = ((px(y0, x0) * (1 - fx) + px(y0, x0 + 1) * fx) * (1 - fy)
                         + (px(y0 + 1, x0) * (1 - fx) + px(y0 + 1, x0 + 1) * fx) * fy)
    return out


def test_corners_512_at_zero():
    corners = inscribed_square_corners(512, 512, 0.0)
    off = 256 / math.sqrt(2)
    assert off == pytest.approx(181.019, abs=1e-3)
    expected = [(256 + off, 256 + off), (256 - off, 256 + off), (256 - off, 256 - off), (256 + off, 256 - off)]
    for got, exp in zip(corners, expected):
        assert got == pytest.approx(exp, abs=1e-9)
    side = math.dist(corners[0], corners[1])
    assert side == pytest.approx(362.04, abs=1e-2)
    assert default_out_size(512, 512) == 362


def test_corner_set_invariant_under_quarter_turn():
    a = sorted(inscribed_square_corners(512, 512, 0.3))
    b = sorted(inscribed_square_corners(512, 512, 0.3 + math.pi / 2))
    for p, q in zip(a, b):
        assert p == pytest.approx(q, abs=1e-9)


@given(st.integers(2, 900), st.integers(2, 900), st.floats(0, 2 * math.pi))
def test_corners_on_inscribed_circle(w, h, theta):
    r = min(w, h) / 2
    for x, y in inscribed_square_corners(w, h, theta):
        assert math.hypot(x - w / 2, y - h / 2) == pytest.approx(r, abs=1e-9)


def test_identity_rotation_is_centered_crop(rng):
    img = rand_raster(rng, 512, 512)
    out = rotated_crop(img, RotationCrop(0.0, sampling="nearest"))
    assert out.shape == (362, 362, 3)
    assert np.array_equal(out, img[75:437, 75:437])
    xs, ys = sample_coordinates(512, 512, 0.0, 362)
    shift = max(np.abs(xs - (75 + np.arange(362) + 0.5)[None, :]).max(),
                np.abs(ys - (75 + np.arange(362) + 0.5)[:, None]).max())
    assert shift < 0.02
    # bilinear error is bounded by the offset along each axis times the full value range, plus rounding
    bil = rotated_crop(img, RotationCrop(0.0)).astype(int)
    assert np.abs(bil - img[75:437, 75:437].astype(int)).max() <= 2 * shift * 255 + 0.5


def test_quarter_turn_is_pixel_permutation(rng):
    for _ in range(10):
        img = rand_raster(rng, int(rng.integers(8, 40)), int(rng.integers(8, 40)))
        theta = random_theta(rng)
        a = rotated_crop(img, RotationCrop(theta, sampling="nearest"))
        b = rotated_crop(img, RotationCrop(theta + math.pi / 2, sampling="nearest"))
        assert np.array_equal(b, quarter_turn_oracle(a))


def test_matches_direct_sampling_oracle(rng):
    for _ in range(5):
        img = rand_raster(rng, int(rng.integers(6, 14)), int(rng.integers(6, 14)))
        theta = random_theta(rng)
        n = int(rng.integers(3, 9))
        got = rotated_crop(img, RotationCrop(theta, out_size=n)).astype(float)
        assert np.abs(got - bilinear_oracle(img, theta, n)).max() <= 0.5 + 1e-6


def test_constant_raster_stays_constant(rng):
    img = np.full((37, 53, 3), 91, dtype=np.uint8)
    for sampling in ("nearest", "bilinear"):
        out = rotated_crop(img, RotationCrop(random_theta(rng), sampling=sampling))
        assert (out == 91).all()


@settings(max_examples=50)
@given(st.integers(2, 300), st.integers(2, 300), st.floats(0, 2 * math.pi), st.integers(1, 64))
def test_samples_stay_inside_circle(w, h, theta, n):
    xs, ys = sample_coordinates(w, h, theta, n)
    r = min(w, h) / 2
    assert (np.hypot(xs - w / 2, ys - h / 2) <= r + 1e-9).all()
    assert (xs >= 0).all() and (xs <= w).all() and (ys >= 0).all() and (ys <= h).all()


def test_deterministic_and_grayscale(rng):
    img = rand_raster(rng, 30, 20, 1)
    a = rotated_crop(img, RotationCrop(1.234))
    b = rotated_crop(img, RotationCrop(1.234))
    assert a.shape == (14, 14, 1) and np.array_equal(a, b)
    seeded = [random_theta(np.random.default_rng(5)) for _ in range(2)]
    assert seeded[0] == seeded[1]


def test_config_errors():
    with pytest.raises(ConfigError):
        RotationCrop(math.nan)
    with pytest.raises(ConfigError):
        RotationCrop(0.0, out_size=0)
    with pytest.raises(ConfigError):
        RotationCrop(0.0, sampling="cubic")
    with pytest.raises(DataError):
        rotated_crop(np.zeros((1, 5, 3), np.uint8), RotationCrop(0.0))
    assert RotationCrop(-math.pi / 2).theta == pytest.approx(3 * math.pi / 2)
