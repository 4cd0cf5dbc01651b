"""Equirectangular environment maps and the HDR transfer curve.

Maps are (rows, cols, 3) grids over polar angle theta uniform in [0, pi]
(row 0 nearest +z) and azimuth phi uniform in [0, 2*pi). Values are taken
at cell centers. decode_env rasterizes an SG mixture onto such a grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .sg import SgEnvironment, mixture_radiance, spherical_to_unit


@dataclass(frozen=True)
class HdrImage:
    """Linear-radiance image, (H, W, 3), finite and nonnegative."""

    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64)
        if data.ndim != 3 or data.shape[2] != 3:
            raise ValueError("HdrImage data must be (H, W, 3)")
        if not np.all(np.isfinite(data)):
            raise ValueError("HdrImage data must be finite")
        if np.any(data < 0.0):
            raise ValueError("HdrImage data must be >= 0")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def shape(self):
        return self.data.shape


@dataclass(frozen=True)
class EnvironmentMap:
    """Equirectangular radiance grid, at least 2 rows and 4 columns."""

    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64)
        if data.ndim != 3 or data.shape[2] != 3:
            raise ValueError("environment map must be (rows, cols, 3)")
        if data.shape[0] < 2 or data.shape[1] < 4:
            raise ValueError("environment map needs >= 2 rows and >= 4 cols")
        if not np.all(np.isfinite(data)):
            raise ValueError("environment map must be finite")
        if np.any(data < 0.0):
            raise ValueError("environment map must be >= 0")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]


def grid_angles(rows: int, cols: int):
    """Cell-center angles: theta (rows,), phi (cols,)."""
    theta = (np.arange(rows) + 0.5) * np.pi / rows
    phi = (np.arange(cols) + 0.5) * 2.0 * np.pi / cols
    return theta, phi


def grid_directions(rows: int, cols: int) -> np.ndarray:
    """Cell-center unit directions, shape (rows, cols, 3)."""
    theta, phi = grid_angles(rows, cols)
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    return spherical_to_unit(tt, pp)


def solid_angle_weights(rows: int, cols: int) -> np.ndarray:
    """Exact per-cell solid angles, shape (rows, cols), summing to 4*pi."""
    edges = np.arange(rows + 1) * np.pi / rows
    band = np.cos(edges[:-1]) - np.cos(edges[1:])  # per-row polar extent
    return np.repeat((band * 2.0 * np.pi / cols)[:, None], cols, axis=1)


def decode_env(
    env: SgEnvironment, rows: int = 16, cols: int = 32, pixel=None
) -> EnvironmentMap:
    """Rasterize the mixture at cell centers onto a rows x cols grid.

    pixel selects the visibility row when the environment is per-pixel,
    exactly as in eval_mixture.
    """
    dirs = grid_directions(rows, cols)
    if env.visibility is None:
        if pixel is not None:
            raise ValueError("environment has no per-pixel visibility")
        mu = None
    else:
        if pixel is None:
            raise ValueError("pixel index required with per-pixel visibility")
        mu = np.asarray(env.visibility[pixel], dtype=np.float64)
        if mu.shape != (env.num_lobes,):
            raise ValueError("pixel index must select one visibility row")
    return EnvironmentMap(mixture_radiance(env, dirs, mu))


def hdr_forward(x) -> np.ndarray:
    """Range compression ln(1 + x) for linear radiance x >= 0."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0.0):
        raise ValueError("hdr_forward domain is x >= 0")
    return np.log1p(x)


def hdr_inverse(y) -> np.ndarray:
    """Inverse of hdr_forward: exp(y) - 1 for y >= 0."""
    y = np.asarray(y, dtype=np.float64)
    if np.any(y < 0.0):
        raise ValueError("hdr_inverse domain is y >= 0")
    return np.expm1(y)


def tile_per_pixel(per_pixel: np.ndarray) -> np.ndarray:
    """Pack (H, W, rows, cols, 3) per-pixel maps into one (H*rows, W*cols, 3).

    Pixel (i, j) occupies the block [i*rows:(i+1)*rows, j*cols:(j+1)*cols].
    """
    per_pixel = np.asarray(per_pixel)
    if per_pixel.ndim != 5 or per_pixel.shape[4] != 3:
        raise ValueError("expected (H, W, rows, cols, 3)")
    h, w, rows, cols, _ = per_pixel.shape
    return per_pixel.transpose(0, 2, 1, 3, 4).reshape(h * rows, w * cols, 3)


def untile_per_pixel(tiled: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Inverse of tile_per_pixel."""
    tiled = np.asarray(tiled)
    if tiled.ndim != 3 or tiled.shape[2] != 3:
        raise ValueError("expected (H*rows, W*cols, 3)")
    if tiled.shape[0] % rows or tiled.shape[1] % cols:
        raise ValueError("tiled shape is not a multiple of the tile size")
    h, w = tiled.shape[0] // rows, tiled.shape[1] // cols
    return tiled.reshape(h, rows, w, cols, 3).transpose(0, 2, 1, 3, 4)
