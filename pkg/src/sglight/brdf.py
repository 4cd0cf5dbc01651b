"""Microfacet shading under SG illumination.

The diffuse term is I_d = (A / pi) * S with S the cosine-weighted
hemisphere integral of incident radiance. The specular term integrates
the mixture against a GGX microfacet BRDF with height-correlated Smith
masking and a Schlick Fresnel at F0 = 0.04. The NDF alpha is the square
of the perceptual roughness R. Both integrals use an equal-solid-angle
hemisphere grid by default; a uniform theta-phi grid mode exists to
demonstrate its low-resolution artifacts. A GGX importance-sampled
Monte Carlo renderer serves as the independent oracle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .envmap import HdrImage
from .sg import SgEnvironment, _as_unit, mixture_radiance

F0_DEFAULT = 0.04
NORMAL_TOL = 1e-4


@dataclass(frozen=True)
class GBuffer:
    """Per-pixel material and geometry.

    albedo (H, W, 3) in [0, 1]; roughness (H, W) in [0, 1]; normal
    (H, W, 3) unit within 1e-4; depth (H, W) > 0 holding the ray distance
    to the camera center; optional confidence (H, W).
    """

    albedo: np.ndarray
    roughness: np.ndarray
    normal: np.ndarray
    depth: np.ndarray
    confidence: Optional[np.ndarray] = None

    def __post_init__(self):
        albedo = np.array(self.albedo, dtype=np.float64)
        rough = np.array(self.roughness, dtype=np.float64)
        normal = np.array(self.normal, dtype=np.float64)
        depth = np.array(self.depth, dtype=np.float64)
        if albedo.ndim != 3 or albedo.shape[2] != 3:
            raise ValueError("albedo must be (H, W, 3)")
        shape = albedo.shape[:2]
        if rough.shape != shape or depth.shape != shape:
            raise ValueError("roughness and depth must be (H, W)")
        if normal.shape != shape + (3,):
            raise ValueError("normal must be (H, W, 3)")
        for name, arr in (("albedo", albedo), ("roughness", rough),
                          ("normal", normal), ("depth", depth)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite")
        if np.any(albedo < 0.0) or np.any(albedo > 1.0):
            raise ValueError("albedo must lie in [0, 1]")
        if np.any(rough < 0.0) or np.any(rough > 1.0):
            raise ValueError("roughness must lie in [0, 1]")
        if np.any(np.abs(np.linalg.norm(normal, axis=-1) - 1.0) > NORMAL_TOL):
            raise ValueError("normals must be unit length")
        if np.any(depth <= 0.0):
            raise ValueError("depth must be > 0")
        conf = self.confidence
        if conf is not None:
            conf = np.asarray(conf, dtype=np.float64)
            if conf.shape != shape:
                raise ValueError("confidence must be (H, W)")
            if not np.all(np.isfinite(conf)):
                raise ValueError("confidence must be finite")
        for arr in (albedo, rough, normal, depth):
            arr.flags.writeable = False
        object.__setattr__(self, "albedo", albedo)
        object.__setattr__(self, "roughness", rough)
        object.__setattr__(self, "normal", normal)
        object.__setattr__(self, "depth", depth)
        object.__setattr__(self, "confidence", conf)

    @property
    def shape(self) -> tuple:
        return self.albedo.shape[:2]


@dataclass(frozen=True)
class SpecEncoding:
    """Per-lobe specular features and the lobe's validity mask.

    fresnel is Schlick F at the half vector of view and lobe axis (three
    equal channels for a scalar F0); half_cos_sq is (n . h)^2; axis_cos is
    n . axis; view_cos is n . v. mask = 1 only when the lobe carries
    energy, points into the upper hemisphere, and the half vector exists.
    """

    fresnel: np.ndarray
    half_cos_sq: float
    axis_cos: float
    view_cos: float
    intensity: np.ndarray
    sharpness: float
    roughness: float
    mask: int


def reflect(v, n) -> np.ndarray:
    """Mirror direction 2*(n.v)*n - v for unit v, n."""
    v = _as_unit(v)
    n = _as_unit(n)
    return 2.0 * np.sum(n * v, axis=-1, keepdims=True) * n - v


def half_vector(v, l) -> np.ndarray:
    """normalize(v + l); rejects the antipodal case."""
    v = _as_unit(v)
    l = _as_unit(l)
    h = v + l
    n = np.linalg.norm(h, axis=-1, keepdims=True)
    if np.any(n < 1e-9):
        raise ValueError("half vector undefined for antipodal inputs")
    return h / n


def onb(n: np.ndarray):
    """Branchless orthonormal tangent frame (t, b) for unit normals.

    Vectorized over leading axes.
    """
    n = np.asarray(n, dtype=np.float64)
    s = np.copysign(1.0, n[..., 2])
    a = -1.0 / (s + n[..., 2])
    b = n[..., 0] * n[..., 1] * a
    t = np.stack([1.0 + s * n[..., 0] ** 2 * a, s * b, -s * n[..., 0]], axis=-1)
    bb = np.stack([b, s + n[..., 1] ** 2 * a, -n[..., 1]], axis=-1)
    return t, bb


def hemisphere_grid(resolution=(32, 64), mode: str = "equal_area"):
    """Quadrature nodes over the local (+z) hemisphere.

    equal_area: latitude uniform in cos(theta), equal weights summing to
    2*pi. uniform: theta uniform in [0, pi/2) with sin(theta) weights,
    the artifact-prone mode. Returns (local dirs (M, 3), weights (M,)).
    """
    n_lat, n_lon = resolution
    if n_lat < 1 or n_lon < 1:
        raise ValueError("resolution must be positive")
    phi = (np.arange(n_lon) + 0.5) / n_lon * 2.0 * np.pi
    if mode == "equal_area":
        u = (np.arange(n_lat) + 0.5) / n_lat
        uu, pp = np.meshgrid(u, phi, indexing="ij")
        w = np.full(n_lat * n_lon, 2.0 * np.pi / (n_lat * n_lon))
    elif mode == "uniform":
        theta = (np.arange(n_lat) + 0.5) * (0.5 * np.pi) / n_lat
        tt, pp = np.meshgrid(theta, phi, indexing="ij")
        uu = np.cos(tt)
        w = (np.sin(tt) * (0.5 * np.pi / n_lat) * (2.0 * np.pi / n_lon)).reshape(-1)
    else:
        raise ValueError(f"unknown grid mode {mode!r}")
    st = np.sqrt(np.clip(1.0 - uu * uu, 0.0, None))
    local = np.stack([st * np.cos(pp), st * np.sin(pp), uu], axis=-1).reshape(-1, 3)
    return local, w


def _world_dirs(local: np.ndarray, normals: np.ndarray) -> np.ndarray:
    """Rotate local (+z) grid dirs into each normal's frame.

    local (M, 3), normals (..., 3) -> (..., M, 3).
    """
    t, b = onb(normals)
    return (
        local[..., 0:1] * t[..., None, :]
        + local[..., 1:2] * b[..., None, :]
        + local[..., 2:3] * normals[..., None, :]
    )


def ggx_ndf(cos_h, alpha):
    """GGX normal distribution D for cos_h = n . h and ndf alpha."""
    a2 = alpha * alpha
    d = cos_h * cos_h * (a2 - 1.0) + 1.0
    return a2 / (np.pi * d * d)


def _smith_lambda(cos_t, alpha):
    c = np.clip(cos_t, 1e-9, 1.0)
    tan2 = (1.0 - c * c) / (c * c)
    return 0.5 * (-1.0 + np.sqrt(1.0 + alpha * alpha * tan2))


def smith_g2(cos_v, cos_l, alpha):
    """Height-correlated Smith masking-shadowing."""
    return 1.0 / (1.0 + _smith_lambda(cos_v, alpha) + _smith_lambda(cos_l, alpha))


def schlick_fresnel(cos_vh, f0: float = F0_DEFAULT):
    """F = f0 + (1 - f0) * (1 - cos)^5."""
    c = np.clip(cos_vh, 0.0, 1.0)
    return f0 + (1.0 - f0) * (1.0 - c) ** 5


def specular_brdf(v, l, n, roughness: float, f0: float = F0_DEFAULT) -> float:
    """Full microfacet BRDF value D * G2 * F / (4 (n.v)(n.l)).

    Scalar because f0 is scalar; zero when either direction is below the
    horizon. Symmetric in v and l.
    """
    if roughness <= 0.0:
        raise ValueError("roughness must be > 0 (delta lobes unsupported)")
    v = _as_unit(v)
    l = _as_unit(l)
    n = _as_unit(n)
    cos_v = float(np.dot(n, v))
    cos_l = float(np.dot(n, l))
    if cos_v <= 0.0 or cos_l <= 0.0:
        return 0.0
    h = half_vector(v, l)
    alpha = roughness * roughness
    d = ggx_ndf(float(np.dot(n, h)), alpha)
    g = smith_g2(cos_v, cos_l, alpha)
    f = schlick_fresnel(float(np.dot(v, h)), f0)
    return float(d * g * f / (4.0 * cos_v * cos_l))


def _mu_for(env: SgEnvironment, pixel):
    if env.visibility is None:
        if pixel is not None:
            raise ValueError("environment has no per-pixel visibility")
        return None
    if pixel is None:
        raise ValueError("pixel index required with per-pixel visibility")
    mu = np.asarray(env.visibility[pixel], dtype=np.float64)
    if mu.shape != (env.num_lobes,):
        raise ValueError("pixel index must select one visibility row")
    return mu


def shading(
    env: SgEnvironment,
    normal,
    pixel=None,
    resolution=(32, 64),
    mode: str = "equal_area",
) -> np.ndarray:
    """Cosine-weighted irradiance integral S = int L(l) max(n.l, 0) dl."""
    n = _as_unit(normal)
    local, w = hemisphere_grid(resolution, mode)
    dirs = _world_dirs(local, n)
    radiance = mixture_radiance(env, dirs, _mu_for(env, pixel))
    return np.einsum("mc,m,m->c", radiance, w, local[:, 2])


def _shading_batch(env, normals, mu_rows, resolution, mode):
    """shading() over flattened pixels; mu_rows is (P, S) or None."""
    local, w = hemisphere_grid(resolution, mode)
    dirs = _world_dirs(local, normals)  # (P, M, 3)
    radiance = mixture_radiance(env, dirs, mu_rows[:, None, :] if mu_rows is not None else None)
    return np.einsum("pmc,m,m->pc", radiance, w, local[:, 2])


def _visibility_rows(env: SgEnvironment, shape):
    if env.visibility is None:
        return None
    if env.visibility.shape[:-1] != shape:
        raise ValueError("visibility leading shape must match the image")
    return env.visibility.reshape(-1, env.num_lobes)


def render_diffuse(
    g: GBuffer, env: SgEnvironment, resolution=(32, 64), mode: str = "equal_area"
) -> HdrImage:
    """Diffuse image I_d = (A / pi) * S per pixel."""
    h, w = g.shape
    normals = g.normal.reshape(-1, 3)
    s = _shading_batch(env, normals, _visibility_rows(env, g.shape), resolution, mode)
    return HdrImage((g.albedo.reshape(-1, 3) / np.pi * s).reshape(h, w, 3))


def render_specular(
    g: GBuffer,
    env: SgEnvironment,
    cam,
    resolution=(32, 64),
    mode: str = "equal_area",
    f0: float = F0_DEFAULT,
    rows: Optional[slice] = None,
) -> HdrImage:
    """Specular image: per pixel int L(l) B(v, l) max(n.l, 0) dl.

    cam provides the view ray per pixel (its unproject method and center).
    Backfacing pixels (n.v <= 0) render black. rows restricts the
    computation to a horizontal band (used by the threaded CLI path).
    """
    if np.any(g.roughness <= 0.0):
        raise ValueError("roughness must be > 0 (delta lobes unsupported)")
    h, w = g.shape
    band = rows if rows is not None else slice(0, h)
    hh = len(range(*band.indices(h)))
    # jj, ii have shape (hh, w): jj[r, c] = c, ii[r, c] = absolute row
    jj, ii = np.meshgrid(np.arange(w), np.arange(h)[band], indexing="xy")
    points = cam.unproject(jj + 0.5, ii + 0.5, g.depth[band])
    v = cam.center - points
    v /= np.linalg.norm(v, axis=-1, keepdims=True)

    normals = g.normal[band].reshape(-1, 3)
    rough = g.roughness[band].reshape(-1)
    v = v.reshape(-1, 3)
    local, wq = hemisphere_grid(resolution, mode)
    dirs = _world_dirs(local, normals)  # (P, M, 3)
    mu_rows = _visibility_rows(env, g.shape)
    if mu_rows is not None:
        mu_rows = mu_rows.reshape(h, w, -1)[band].reshape(-1, env.num_lobes)
    radiance = mixture_radiance(
        env, dirs, mu_rows[:, None, :] if mu_rows is not None else None
    )

    cos_l = local[:, 2]  # n.l in the local frame
    cos_v = np.einsum("pk,pk->p", normals, v)
    alpha = (rough * rough)[:, None]
    hvec = v[:, None, :] + dirs
    hnorm = np.linalg.norm(hvec, axis=-1)
    safe = np.where(hnorm > 1e-12, hnorm, 1.0)
    hvec = hvec / safe[..., None]
    cos_h = np.clip(np.einsum("pk,pmk->pm", normals, hvec), 0.0, 1.0)
    cos_vh = np.clip(np.einsum("pk,pmk->pm", v, hvec), 0.0, 1.0)
    d = ggx_ndf(cos_h, alpha)
    g2 = smith_g2(cos_v[:, None], cos_l[None, :], alpha)
    fr = schlick_fresnel(cos_vh, f0)
    # B * (n.l) with the cosine cancelled against the denominator
    front = cos_v > 0.0
    denom = np.where(front, 4.0 * cos_v, 1.0)[:, None]
    kernel = np.where(front[:, None], d * g2 * fr / denom, 0.0)
    out = np.einsum("pmc,pm,m->pc", radiance, kernel, wq)
    img = np.zeros((h, w, 3))
    img[band] = out.reshape(hh, w, 3)
    return HdrImage(img)


def spec_encode(
    env: SgEnvironment, normal, view, roughness: float, f0: float = F0_DEFAULT
) -> list:
    """Per-lobe specular feature tuples with validity masks.

    mask_s = 1 iff the lobe has nonzero L1 intensity, its axis points
    above the surface (n . axis > 0, strict), and view + axis does not
    vanish (half vector defined). Half-vector features are zeroed for
    masked lobes with an undefined half vector.
    """
    n = _as_unit(normal)
    v = _as_unit(view)
    out = []
    for lobe in env.lobes:
        axis_cos = float(np.dot(n, lobe.axis))
        view_cos = float(np.dot(n, v))
        hs = v + lobe.axis
        hs_norm = float(np.linalg.norm(hs))
        defined = hs_norm > 1e-9
        if defined:
            hs = hs / hs_norm
            fres = np.full(3, schlick_fresnel(float(np.dot(v, hs)), f0))
            half_cos_sq = float(np.dot(n, hs)) ** 2
        else:
            fres = np.zeros(3)
            half_cos_sq = 0.0
        energetic = float(np.sum(np.abs(lobe.intensity))) * axis_cos > 0.0
        mask = int(energetic and defined)
        out.append(
            SpecEncoding(
                fresnel=fres,
                half_cos_sq=half_cos_sq,
                axis_cos=axis_cos,
                view_cos=view_cos,
                intensity=lobe.intensity.copy(),
                sharpness=lobe.sharpness,
                roughness=float(roughness),
                mask=mask,
            )
        )
    return out


def _ggx_sample_half(u1, u2, alpha):
    """Map uniform squares to GGX-distributed half vectors (local frame)."""
    ct = np.sqrt((1.0 - u1) / (1.0 + (alpha * alpha - 1.0) * u1))
    st = np.sqrt(np.clip(1.0 - ct * ct, 0.0, None))
    phi = 2.0 * np.pi * u2
    return np.stack([st * np.cos(phi), st * np.sin(phi), ct], axis=-1)


def mc_render_specular(
    g: GBuffer,
    env: SgEnvironment,
    cam,
    n_samples: int = 100000,
    seed: int = 0,
    f0: float = F0_DEFAULT,
) -> HdrImage:
    """Monte Carlo specular oracle with GGX importance sampling.

    Half vectors are drawn from D(h) (n.h); the estimator per sample is
    L(l) * G2 * F * (v.h) / ((n.v)(n.h)). Streams are seeded per pixel
    from (seed, pixel index) so results do not depend on evaluation order
    or thread count.
    """
    if np.any(g.roughness <= 0.0):
        raise ValueError("roughness must be > 0 (delta lobes unsupported)")
    h, w = g.shape
    jj, ii = np.meshgrid(np.arange(w), np.arange(h), indexing="xy")
    points = cam.unproject(jj + 0.5, ii + 0.5, g.depth)
    views = cam.center - points
    views /= np.linalg.norm(views, axis=-1, keepdims=True)
    mu_all = _visibility_rows(env, g.shape)
    img = np.zeros((h, w, 3))
    for p in range(h * w):
        i, j = divmod(p, w)
        n = g.normal[i, j]
        v = views[i, j]
        cos_v = float(np.dot(n, v))
        if cos_v <= 0.0:
            continue
        alpha = float(g.roughness[i, j]) ** 2
        rng = np.random.default_rng(np.random.SeedSequence((seed, p)))
        u = rng.random((n_samples, 2))
        h_local = _ggx_sample_half(u[:, 0], u[:, 1], alpha)
        t, b = onb(n)
        hw = h_local[:, 0:1] * t + h_local[:, 1:2] * b + h_local[:, 2:3] * n
        vh = hw @ v
        l = 2.0 * vh[:, None] * hw - v
        cos_l = l @ n
        cos_h = h_local[:, 2]
        valid = (cos_l > 0.0) & (vh > 0.0)
        weight = np.zeros(n_samples)
        weight[valid] = (
            smith_g2(cos_v, cos_l[valid], alpha)
            * schlick_fresnel(vh[valid], f0)
            * vh[valid]
            / (cos_v * cos_h[valid])
        )
        mu = mu_all[p] if mu_all is not None else None
        radiance = np.zeros((n_samples, 3))
        radiance[valid] = mixture_radiance(env, l[valid], mu)
        img[i, j] = (radiance * weight[:, None]).mean(axis=0)
    return HdrImage(img)


def mc_render_diffuse(
    g: GBuffer, env: SgEnvironment, n_samples: int = 100000, seed: int = 0
) -> HdrImage:
    """Monte Carlo diffuse oracle with cosine-weighted sampling.

    I_d = (A / pi) * int L cos = A * E[L] under the cosine pdf.
    """
    h, w = g.shape
    mu_all = _visibility_rows(env, g.shape)
    img = np.zeros((h, w, 3))
    for p in range(h * w):
        i, j = divmod(p, w)
        n = g.normal[i, j]
        rng = np.random.default_rng(np.random.SeedSequence((seed, p)))
        u = rng.random((n_samples, 2))
        r = np.sqrt(u[:, 0])
        phi = 2.0 * np.pi * u[:, 1]
        local = np.stack(
            [r * np.cos(phi), r * np.sin(phi), np.sqrt(1.0 - u[:, 0])], axis=-1
        )
        t, b = onb(n)
        l = local[:, 0:1] * t + local[:, 1:2] * b + local[:, 2:3] * n
        mu = mu_all[p] if mu_all is not None else None
        img[i, j] = g.albedo[i, j] * mixture_radiance(env, l, mu).mean(axis=0)
    return HdrImage(img)
