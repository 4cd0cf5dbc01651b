"""Spherical Gaussian lobes, mixtures, and sphere integrals.

A lobe evaluated in direction l is

    G(l) = intensity * exp(sharpness * (dot(l, axis) - 1))

with a unit axis, nonnegative scalar sharpness, and a nonnegative RGB
intensity. An environment is a sum of S lobes, optionally attenuated by
per-pixel visibility factors in [0, 1]. All radiance is linear HDR.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

# tolerance for "unit vector" checks on stored axes and query directions
UNIT_TOL = 1e-6


def normalize(v: np.ndarray) -> np.ndarray:
    """Return v scaled to unit length along the last axis."""
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(n == 0.0):
        raise ValueError("cannot normalize a zero vector")
    return v / n


def spherical_to_unit(theta, phi) -> np.ndarray:
    """Convert polar angle theta in [0, pi] and azimuth phi to a unit vector.

    Convention: (sin t cos p, sin t sin p, cos t), so theta = 0 is +z.
    Accepts scalars or broadcastable arrays; vectors stack on the last axis.
    """
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


def unit_to_spherical(v) -> tuple:
    """Inverse of spherical_to_unit. Returns (theta, phi) with phi in [0, 2*pi)."""
    v = _as_unit(v)
    theta = np.arccos(np.clip(v[..., 2], -1.0, 1.0))
    phi = np.mod(np.arctan2(v[..., 1], v[..., 0]), 2.0 * np.pi)
    return theta, phi


def as_direction(d) -> np.ndarray:
    """Coerce a direction given as a unit 3-vector or a (theta, phi) pair."""
    d = np.asarray(d, dtype=np.float64)
    if d.shape == (2,):
        return spherical_to_unit(d[0], d[1])
    return _as_unit(d)


def _as_unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != 3:
        raise ValueError(f"expected 3-vector(s), got shape {v.shape}")
    n = np.linalg.norm(v, axis=-1)
    if np.any(np.abs(n - 1.0) > UNIT_TOL):
        raise ValueError("direction is not unit length")
    return v


def _finite(a, name):
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be finite")


@dataclass(frozen=True)
class SphericalGaussian:
    """One SG lobe: unit axis, scalar sharpness >= 0, RGB intensity >= 0."""

    axis: np.ndarray
    sharpness: float
    intensity: np.ndarray

    def __post_init__(self):
        axis = np.array(self.axis, dtype=np.float64)
        if axis.shape != (3,):
            raise ValueError("axis must be a 3-vector")
        _finite(axis, "axis")
        if abs(np.linalg.norm(axis) - 1.0) > UNIT_TOL:
            raise ValueError("axis must be unit length")
        sharp = float(self.sharpness)
        if not np.isfinite(sharp) or sharp < 0.0:
            raise ValueError("sharpness must be finite and >= 0")
        inten = np.array(self.intensity, dtype=np.float64)
        if inten.shape != (3,):
            raise ValueError("intensity must be RGB")
        _finite(inten, "intensity")
        if np.any(inten < 0.0):
            raise ValueError("intensity must be >= 0")
        axis.flags.writeable = False
        inten.flags.writeable = False
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "sharpness", sharp)
        object.__setattr__(self, "intensity", inten)


@dataclass(frozen=True)
class SgEnvironment:
    """A mixture of S >= 1 lobes with optional per-pixel visibility.

    visibility, when present, has shape (..., S) and is clamped to [0, 1]
    at construction. The leading axes index pixels; eval_mixture selects a
    pixel's factors with a plain numpy index.
    """

    lobes: tuple
    visibility: Optional[np.ndarray] = None

    def __post_init__(self):
        lobes = tuple(self.lobes)
        if len(lobes) < 1:
            raise ValueError("environment needs at least one lobe")
        for lobe in lobes:
            if not isinstance(lobe, SphericalGaussian):
                raise TypeError("lobes must be SphericalGaussian instances")
        object.__setattr__(self, "lobes", lobes)
        if self.visibility is not None:
            vis = np.asarray(self.visibility, dtype=np.float64)
            if vis.shape[-1] != len(lobes):
                raise ValueError("visibility last axis must match lobe count")
            _finite(vis, "visibility")
            vis = np.clip(vis, 0.0, 1.0)
            vis.flags.writeable = False
            object.__setattr__(self, "visibility", vis)

    @property
    def num_lobes(self) -> int:
        return len(self.lobes)


def sg_radiance(intensity, sharpness, axis, dirs) -> np.ndarray:
    """Raw lobe formula, no validation, broadcasting over leading axes.

    Used internally where the axis is intentionally not unit length
    (aggregated compositing). dirs has shape (..., 3); the result
    broadcasts intensity over exp(sharpness * (dot(dirs, axis) - 1)).
    """
    dot = np.sum(np.asarray(dirs, dtype=np.float64) * axis, axis=-1)
    return np.asarray(intensity, dtype=np.float64) * np.exp(
        np.asarray(sharpness, dtype=np.float64) * (dot - 1.0)
    )[..., None]


def eval_sg(lobe: SphericalGaussian, direction) -> np.ndarray:
    """Evaluate one lobe at a direction (unit 3-vector or (theta, phi))."""
    d = as_direction(direction)
    return sg_radiance(lobe.intensity, lobe.sharpness, lobe.axis, d)


def eval_mixture(env: SgEnvironment, direction, pixel=None) -> np.ndarray:
    """Evaluate the mixture, applying pixel visibility when present.

    pixel indexes the leading axes of env.visibility (int or tuple); it is
    required when the environment carries visibility and must be omitted
    otherwise. Absent visibility means every factor is 1.
    """
    d = as_direction(direction)
    if env.visibility is None:
        if pixel is not None:
            raise ValueError("environment has no per-pixel visibility")
        mu = np.ones(env.num_lobes)
    else:
        if pixel is None:
            raise ValueError("pixel index required with per-pixel visibility")
        mu = np.asarray(env.visibility[pixel], dtype=np.float64)
        if mu.shape != (env.num_lobes,):
            raise ValueError("pixel index must select one visibility row")
    out = np.zeros(d.shape[:-1] + (3,))
    for s, lobe in enumerate(env.lobes):
        out += mu[s] * sg_radiance(lobe.intensity, lobe.sharpness, lobe.axis, d)
    return out


def mixture_radiance(env: SgEnvironment, dirs, mu=None) -> np.ndarray:
    """Vectorized mixture evaluation over dirs (..., 3) -> (..., 3).

    mu, when given, holds per-lobe visibility factors of shape (S,) or
    broadcastable against the leading axes as (..., S).
    """
    dirs = np.asarray(dirs, dtype=np.float64)
    out = np.zeros(dirs.shape[:-1] + (3,))
    for s, lobe in enumerate(env.lobes):
        term = sg_radiance(lobe.intensity, lobe.sharpness, lobe.axis, dirs)
        if mu is not None:
            term = term * np.asarray(mu)[..., s, None]
        out += term
    return out


def integrate_sg_sphere(lobe: SphericalGaussian) -> np.ndarray:
    """Closed-form integral of the lobe over the full sphere, per channel.

    integral = intensity * 2*pi * (1 - exp(-2*sharpness)) / sharpness,
    with the sharpness -> 0 limit 4*pi * intensity.
    """
    lam = lobe.sharpness
    if lam == 0.0:
        energy = 4.0 * np.pi
    else:
        # -expm1(-2*lam) = 1 - exp(-2*lam), stable for small lam
        energy = 2.0 * np.pi * (-np.expm1(-2.0 * lam)) / lam
    return lobe.intensity * energy


def sphere_grid(n_lat: int = 64, n_lon: int = 128):
    """Equal-solid-angle quadrature grid over the full sphere.

    Latitude bands uniform in cos(theta), azimuth uniform, both at cell
    midpoints, so every cell subtends exactly 4*pi / (n_lat * n_lon).
    Returns (directions (N, 3), weights (N,)) with weights summing to 4*pi.
    """
    if n_lat < 1 or n_lon < 1:
        raise ValueError("grid must have at least one cell per axis")
    u = (np.arange(n_lat) + 0.5) / n_lat * 2.0 - 1.0
    phi = (np.arange(n_lon) + 0.5) / n_lon * 2.0 * np.pi
    uu, pp = np.meshgrid(u, phi, indexing="ij")
    st = np.sqrt(np.clip(1.0 - uu * uu, 0.0, None))
    dirs = np.stack([st * np.cos(pp), st * np.sin(pp), uu], axis=-1).reshape(-1, 3)
    weights = np.full(dirs.shape[0], 4.0 * np.pi / dirs.shape[0])
    return dirs, weights
