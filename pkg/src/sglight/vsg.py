"""Volumetric spherical Gaussians: a voxel grid of 8-channel records
(alpha, RGB intensity, 3-vector axis, sharpness) ray-marched with alpha
compositing in two operation orders.

"before": evaluate each sample's lobe at the query direction, then blend
the radiances with the compositing weights.

"after": blend the raw lobe parameters with the same weights first, then
evaluate a single lobe at the aggregate. The aggregated axis is the plain
weighted sum and is deliberately not renormalized.

Compositing weights are w_n = alpha_n * prod_{m<n} (1 - alpha_m); the
weights plus the residual transmittance prod_n (1 - alpha_n) sum to 1.
Both orders evaluate lobes at -l for a ray marched along l.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

VSG_MAGIC = "VSG1"
CHANNEL_ORDER = "alpha intensity axis sharpness"


@dataclass(frozen=True)
class VsgVolume:
    """Voxel grid (X, Y, Z, 8) over an axis-aligned bounding box.

    Channels, in storage order: alpha, intensity RGB, axis xyz, sharpness.
    alpha lies in [0, 1] and sharpness is >= 0.
    """

    data: np.ndarray
    bbox_min: np.ndarray
    bbox_max: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64)
        if data.ndim != 4 or data.shape[3] != 8:
            raise ValueError("volume data must be (X, Y, Z, 8)")
        if not np.all(np.isfinite(data)):
            raise ValueError("volume data must be finite")
        if np.any(data[..., 0] < 0.0) or np.any(data[..., 0] > 1.0):
            raise ValueError("alpha channel must lie in [0, 1]")
        if np.any(data[..., 7] < 0.0):
            raise ValueError("sharpness channel must be >= 0")
        lo = np.array(self.bbox_min, dtype=np.float64)
        hi = np.array(self.bbox_max, dtype=np.float64)
        if lo.shape != (3,) or hi.shape != (3,):
            raise ValueError("bbox corners must be 3-vectors")
        if np.any(hi <= lo):
            raise ValueError("bbox_max must exceed bbox_min on every axis")
        data.flags.writeable = False
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "bbox_min", lo)
        object.__setattr__(self, "bbox_max", hi)

    @property
    def dims(self) -> tuple:
        return self.data.shape[:3]

    @classmethod
    def from_fields(cls, alpha, intensity, axis, sharpness, bbox_min, bbox_max):
        """Assemble the 8-channel grid from separate field arrays."""
        alpha = np.asarray(alpha, dtype=np.float64)
        data = np.concatenate(
            [
                alpha[..., None],
                np.asarray(intensity, dtype=np.float64),
                np.asarray(axis, dtype=np.float64),
                np.asarray(sharpness, dtype=np.float64)[..., None],
            ],
            axis=-1,
        )
        return cls(data, bbox_min, bbox_max)


@dataclass(frozen=True)
class RaySampleSet:
    """Records interpolated along one ray, ordered near to far.

    Empty sets (zero samples) mean the ray missed the box.
    """

    origin: np.ndarray
    direction: np.ndarray
    t: np.ndarray  # distances along the ray, shape (n,)
    alpha: np.ndarray  # (n,)
    intensity: np.ndarray  # (n, 3)
    axis: np.ndarray  # (n, 3), renormalized
    sharpness: np.ndarray  # (n,)

    def __len__(self) -> int:
        return self.t.shape[0]


def ray_box_intersect(bbox_min, bbox_max, origins, dirs):
    """Slab test. Returns (t_near, t_far, hit) for rays origin + t*dir.

    t_near is clamped to 0 so origins inside the box march forward only.
    Vectorized over leading axes of origins/dirs.
    """
    origins = np.asarray(origins, dtype=np.float64)
    dirs = np.asarray(dirs, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t0 = (bbox_min - origins) * inv
        t1 = (bbox_max - origins) * inv
    near = np.minimum(t0, t1)
    far = np.maximum(t0, t1)
    # axis-parallel rays: inside the slab -> infinite interval, outside ->
    # empty interval; patch after the sort so the empty case survives
    parallel = dirs == 0.0
    if np.any(parallel):
        inside = (origins >= bbox_min) & (origins <= bbox_max)
        near = np.where(parallel, np.where(inside, -np.inf, np.inf), near)
        far = np.where(parallel, np.where(inside, np.inf, -np.inf), far)
    lo = near.max(axis=-1)
    hi = far.min(axis=-1)
    t_near = np.maximum(lo, 0.0)
    hit = (hi > t_near) & (hi > 0.0)
    return t_near, hi, hit


def _interp_fields(vol: VsgVolume, points, nearest: bool = False):
    """Interpolate the 8 channels at world points inside the box.

    Trilinear over voxel centers (edge clamped), or nearest-neighbor when
    nearest=True. Returns (alpha, intensity, axis, sharpness) with the axis
    renormalized; a vanishing interpolated axis falls back to +z.
    """
    points = np.asarray(points, dtype=np.float64)
    dims = np.array(vol.dims, dtype=np.float64)
    cell = (vol.bbox_max - vol.bbox_min) / dims
    # continuous voxel-center coordinates
    g = (points - vol.bbox_min) / cell - 0.5
    g = np.clip(g, 0.0, dims - 1.0)
    if nearest:
        idx = np.rint(g).astype(np.int64)
        rec = vol.data[idx[..., 0], idx[..., 1], idx[..., 2]]
    else:
        i0 = np.floor(g).astype(np.int64)
        i0 = np.minimum(i0, (dims - 2).astype(np.int64).clip(min=0))
        f = g - i0
        rec = np.zeros(points.shape[:-1] + (8,))
        for dx in (0, 1):
            wx = (1.0 - f[..., 0]) if dx == 0 else f[..., 0]
            x = np.minimum(i0[..., 0] + dx, int(dims[0]) - 1)
            for dy in (0, 1):
                wy = (1.0 - f[..., 1]) if dy == 0 else f[..., 1]
                y = np.minimum(i0[..., 1] + dy, int(dims[1]) - 1)
                for dz in (0, 1):
                    wz = (1.0 - f[..., 2]) if dz == 0 else f[..., 2]
                    z = np.minimum(i0[..., 2] + dz, int(dims[2]) - 1)
                    rec += (wx * wy * wz)[..., None] * vol.data[x, y, z]
    alpha = rec[..., 0]
    intensity = rec[..., 1:4]
    axis = rec[..., 4:7]
    norm = np.linalg.norm(axis, axis=-1, keepdims=True)
    ok = norm > 1e-12
    axis = np.where(ok, axis / np.where(ok, norm, 1.0), np.array([0.0, 0.0, 1.0]))
    sharpness = rec[..., 7]
    return alpha, intensity, axis, sharpness


def sample_ray(
    vol: VsgVolume, origin, direction, n_r: int = 128, nearest: bool = False
) -> RaySampleSet:
    """March one ray and interpolate n_r records across the box overlap.

    Samples sit at the midpoints of n_r equal segments of [t_near, t_far].
    A ray that misses the box yields an empty set.
    """
    if n_r < 1:
        raise ValueError("n_r must be >= 1")
    origin = np.asarray(origin, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    if origin.shape != (3,) or direction.shape != (3,):
        raise ValueError("origin and direction must be 3-vectors")
    nrm = np.linalg.norm(direction)
    if abs(nrm - 1.0) > 1e-6:
        raise ValueError("direction must be unit length")
    t_near, t_far, hit = ray_box_intersect(vol.bbox_min, vol.bbox_max, origin, direction)
    if not hit:
        empty = np.zeros(0)
        return RaySampleSet(origin, direction, empty, empty,
                            np.zeros((0, 3)), np.zeros((0, 3)), empty)
    t = t_near + (np.arange(n_r) + 0.5) * (t_far - t_near) / n_r
    points = origin + t[:, None] * direction
    alpha, intensity, axis, sharpness = _interp_fields(vol, points, nearest)
    return RaySampleSet(origin, direction, t, alpha, intensity, axis, sharpness)


def compositing_weights(alpha: np.ndarray) -> np.ndarray:
    """w_n = alpha_n * prod_{m<n}(1 - alpha_m) along the last axis."""
    alpha = np.asarray(alpha, dtype=np.float64)
    trans = np.cumprod(1.0 - alpha, axis=-1)
    lead = np.ones(alpha.shape[:-1] + (1,))
    before = np.concatenate([lead, trans[..., :-1]], axis=-1)
    return before * alpha


def _composite_before(alpha, intensity, axis, sharpness, l):
    """Blend of per-sample lobe evaluations at -l. Batched over rays."""
    w = compositing_weights(alpha)
    dot = np.einsum("...nk,...k->...n", axis, -np.asarray(l, dtype=np.float64))
    g = np.exp(sharpness * (dot - 1.0))
    return np.einsum("...n,...n,...nc->...c", w, g, intensity)


def _composite_after(alpha, intensity, axis, sharpness, l):
    """Single lobe evaluation at the weight-blended parameters."""
    w = compositing_weights(alpha)
    agg_int = np.einsum("...n,...nc->...c", w, intensity)
    agg_sharp = np.einsum("...n,...n->...", w, sharpness)
    agg_axis = np.einsum("...n,...nc->...c", w, axis)  # not renormalized
    dot = np.einsum("...c,...c->...", agg_axis, -np.asarray(l, dtype=np.float64))
    return agg_int * np.exp(agg_sharp * (dot - 1.0))[..., None]


def composite_sg_before(samples: RaySampleSet, l) -> np.ndarray:
    """Per-sample lobe evaluation, then alpha blend. Returns RGB."""
    if len(samples) == 0:
        raise ValueError("cannot composite an empty sample set")
    return _composite_before(
        samples.alpha, samples.intensity, samples.axis, samples.sharpness, l
    )


def composite_sg_after(samples: RaySampleSet, l) -> np.ndarray:
    """Alpha blend the parameters, then one lobe evaluation. Returns RGB."""
    if len(samples) == 0:
        raise ValueError("cannot composite an empty sample set")
    return _composite_after(
        samples.alpha, samples.intensity, samples.axis, samples.sharpness, l
    )


def _random_rays(vol: VsgVolume, count: int, rng) -> tuple:
    """Rays with origins inside the box (guaranteed hits), random directions."""
    span = vol.bbox_max - vol.bbox_min
    origins = vol.bbox_min + rng.random((count, 3)) * span
    dirs = rng.normal(size=(count, 3))
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    return origins, dirs


def _sample_batch(vol: VsgVolume, origins, dirs, n_r: int):
    """Vectorized sampler for many guaranteed-hit rays."""
    t_near, t_far, hit = ray_box_intersect(vol.bbox_min, vol.bbox_max, origins, dirs)
    if not np.all(hit):
        raise ValueError("batch sampler expects rays that hit the box")
    frac = (np.arange(n_r) + 0.5) / n_r
    t = t_near[:, None] + frac[None, :] * (t_far - t_near)[:, None]
    points = origins[:, None, :] + t[..., None] * dirs[:, None, :]
    return _interp_fields(vol, points)


def bench_orders(
    vol: VsgVolume,
    rays: int = 100000,
    n_r: int = 128,
    runs: int = 5,
    seed: int = 0,
    chunk: int = 16384,
) -> dict:
    """Time both compositing orders on identical sampled records.

    Sampling is excluded from the timings; each run composites the same
    per-chunk records in both orders. Returns the exact lobe-evaluation
    counts (rays * n_r for "before", rays for "after") and the median
    wall time over runs.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    rng = np.random.default_rng(seed)
    t_before = np.zeros(runs)
    t_after = np.zeros(runs)
    done = 0
    while done < rays:
        n = min(chunk, rays - done)
        origins, dirs = _random_rays(vol, n, rng)
        alpha, intensity, axis, sharpness = _sample_batch(vol, origins, dirs, n_r)
        for r in range(runs):
            t0 = time.perf_counter()
            _composite_before(alpha, intensity, axis, sharpness, dirs)
            t1 = time.perf_counter()
            _composite_after(alpha, intensity, axis, sharpness, dirs)
            t2 = time.perf_counter()
            t_before[r] += t1 - t0
            t_after[r] += t2 - t1
        done += n
    return {
        "rays": rays,
        "n_r": n_r,
        "g_evals_before": rays * n_r,
        "g_evals_after": rays,
        "seconds_before": float(np.median(t_before)),
        "seconds_after": float(np.median(t_after)),
    }


def save_vsg(path, vol: VsgVolume) -> None:
    """Serialize: four ASCII header lines, then little-endian float32.

    Header: "VSG1", "X Y Z", "xmin ymin zmin xmax ymax zmax", channel
    order line. Payload is C order over (X, Y, Z, 8), 4 bytes per value.
    """
    x, y, z = vol.dims
    lo = vol.bbox_min
    hi = vol.bbox_max
    header = (
        f"{VSG_MAGIC}\n{x} {y} {z}\n"
        f"{lo[0]:.9g} {lo[1]:.9g} {lo[2]:.9g} "
        f"{hi[0]:.9g} {hi[1]:.9g} {hi[2]:.9g}\n"
        f"{CHANNEL_ORDER}\n"
    ).encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(vol.data, dtype="<f4").tobytes())


def load_vsg(path) -> VsgVolume:
    """Inverse of save_vsg."""
    with open(path, "rb") as fh:
        buf = fh.read()
    pos = 0
    lines = []
    for _ in range(4):
        end = buf.find(b"\n", pos)
        if end < 0:
            raise ValueError("truncated volume header")
        lines.append(buf[pos:end].decode("ascii", errors="replace"))
        pos = end + 1
    if lines[0] != VSG_MAGIC:
        raise ValueError(f"bad volume magic {lines[0]!r}")
    try:
        dims = tuple(int(v) for v in lines[1].split())
        bbox = [float(v) for v in lines[2].split()]
    except ValueError:
        raise ValueError("malformed volume header") from None
    if len(dims) != 3 or len(bbox) != 6:
        raise ValueError("malformed volume header")
    if lines[3] != CHANNEL_ORDER:
        raise ValueError(f"unexpected channel order {lines[3]!r}")
    count = dims[0] * dims[1] * dims[2] * 8
    payload = buf[pos:]
    if len(payload) != count * 4:
        raise ValueError(
            f"volume payload must be {count * 4} bytes, got {len(payload)}"
        )
    data = np.frombuffer(payload, dtype="<f4", count=count).astype(np.float64)
    return VsgVolume(data.reshape(dims + (8,)), bbox[:3], bbox[3:])
