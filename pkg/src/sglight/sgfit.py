"""Nonlinear least-squares fitting of SG mixtures to environment maps.

The objective is the solid-angle-weighted mean squared error in the
log domain (log(x + 1)) over the map's cell centers. Parameters per
lobe: log intensity (RGB), log sharpness, and the axis polar angles, so
positivity is built into the parameterization. Optimization is damped
Gauss-Newton (Levenberg-Marquardt) with a multiplicative damping
schedule; steps are only accepted when they lower the objective, so the
recorded loss trace is monotone. Initialization greedily extracts peaks
from the residual map (sharpness 10, intensity at the peak value).

Per-pixel visibility factors for fixed lobes reduce to a box-constrained
linear least-squares problem per pixel, solved exactly in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment, lsq_linear

from .envmap import EnvironmentMap, grid_directions, solid_angle_weights
from .sg import SgEnvironment, SphericalGaussian, spherical_to_unit, unit_to_spherical

# floor applied to intensities and sharpness before taking logs
LOG_FLOOR = 1e-8


@dataclass(frozen=True)
class FitConfig:
    """Fit settings.

    tolerance is the relative objective decrease below which an accepted
    step counts as converged. damping_* define the LM schedule: the
    damping factor starts at damping_init, multiplies by damping_growth
    after a rejected step and by damping_shrink after an accepted one.
    The fit itself is deterministic; seed is kept for reproducibility
    plumbing and future stochastic options.
    """

    num_lobes: int = 3
    max_iterations: int = 200
    # converged means: an accepted step dropped the objective by less than
    # tolerance (relative), or no damped step could improve it at all
    tolerance: float = 1e-12
    damping_init: float = 1e-3
    damping_growth: float = 4.0
    damping_shrink: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if self.num_lobes < 1:
            raise ValueError("num_lobes must be >= 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not (self.damping_growth > 1.0 and 0.0 < self.damping_shrink < 1.0):
            raise ValueError("damping schedule must grow > 1 and shrink in (0, 1)")


@dataclass(frozen=True)
class FitResult:
    environment: SgEnvironment
    final_loss: float
    iterations: int
    converged: bool
    loss_trace: tuple  # objective after each accepted step, monotone


def sg_gradients(lobe: SphericalGaussian, direction) -> dict:
    """Analytic partials of the lobe value G(l) per RGB channel.

    Returns a dict with:
      "intensity": scalar dG_c/d intensity_c = exp(s * (l.axis - 1)),
                   identical for every channel and independent of the
                   intensity itself (cross-channel partials are zero);
      "sharpness": (3,) dG/d sharpness = intensity * (l.axis - 1) * exp(...);
      "theta", "phi": (3,) partials through the axis angles.
    """
    from .sg import as_direction

    l = as_direction(direction)
    theta, phi = unit_to_spherical(lobe.axis)
    dot = float(l @ lobe.axis)
    e = np.exp(lobe.sharpness * (dot - 1.0))
    d_axis = lobe.sharpness * lobe.intensity * e  # common factor of axis partials
    st, ct = np.sin(theta), np.cos(theta)
    sp, cp = np.sin(phi), np.cos(phi)
    daxis_dtheta = np.array([ct * cp, ct * sp, -st])
    daxis_dphi = np.array([-st * sp, st * cp, 0.0])
    return {
        "intensity": float(e),
        "sharpness": lobe.intensity * (dot - 1.0) * e,
        "theta": d_axis * float(l @ daxis_dtheta),
        "phi": d_axis * float(l @ daxis_dphi),
    }


def _params_from_env(env: SgEnvironment) -> np.ndarray:
    rows = []
    for lobe in env.lobes:
        theta, phi = unit_to_spherical(lobe.axis)
        rows.append(
            np.concatenate(
                [
                    np.log(np.maximum(lobe.intensity, LOG_FLOOR)),
                    [np.log(max(lobe.sharpness, LOG_FLOOR)), theta, phi],
                ]
            )
        )
    return np.stack(rows)


def _env_from_params(p: np.ndarray) -> SgEnvironment:
    lobes = []
    for row in p:
        axis = spherical_to_unit(row[4], row[5])
        axis = axis / np.linalg.norm(axis)
        lobes.append(SphericalGaussian(axis, float(np.exp(row[3])), np.exp(row[0:3])))
    return SgEnvironment(tuple(lobes))


def _predict(p: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Mixture values at dirs (N, 3) for the parameter matrix (S, 6)."""
    out = np.zeros((dirs.shape[0], 3))
    for row in p:
        axis = spherical_to_unit(row[4], row[5])
        out += np.exp(row[0:3])[None, :] * np.exp(np.exp(row[3]) * (dirs @ axis - 1.0))[:, None]
    return out


def _objective_parts(p, dirs, target, sqrt_w):
    """Residual vector (N*3,) and prediction; objective is sum(r^2)."""
    pred = _predict(p, dirs)
    r = (np.log1p(pred) - np.log1p(target)) * sqrt_w[:, None]
    return r.reshape(-1), pred


def _jacobian(p, dirs, pred, sqrt_w):
    """Analytic Jacobian of the residual vector, shape (N*3, S*6)."""
    n = dirs.shape[0]
    s = p.shape[0]
    jac = np.zeros((n, 3, s, 6))
    outer = (sqrt_w[:, None] / (1.0 + pred))  # chain rule through log1p
    for si, row in enumerate(p):
        intensity = np.exp(row[0:3])
        sharp = np.exp(row[3])
        theta, phi = row[4], row[5]
        st, ct = np.sin(theta), np.cos(theta)
        sp, cp = np.sin(phi), np.cos(phi)
        axis = np.array([st * cp, st * sp, ct])
        dot = dirs @ axis
        e = np.exp(sharp * (dot - 1.0))
        value = intensity[None, :] * e[:, None]  # lobe contribution per channel
        # d/d log intensity_c: the channel's own contribution
        for c in range(3):
            jac[:, c, si, c] = value[:, c]
        # d/d log sharpness = sharpness * (dot - 1) * value
        jac[:, :, si, 3] = (sharp * (dot - 1.0))[:, None] * value
        # axis angles through dot
        dth = dirs @ np.array([ct * cp, ct * sp, -st])
        dph = dirs @ np.array([-st * sp, st * cp, 0.0])
        jac[:, :, si, 4] = (sharp * dth)[:, None] * value
        jac[:, :, si, 5] = (sharp * dph)[:, None] * value
    jac *= outer[:, :, None, None]
    return jac.reshape(n * 3, s * 6)


def _greedy_init(target: np.ndarray, dirs_grid: np.ndarray, num_lobes: int) -> np.ndarray:
    """Peak extraction: brightest residual cell seeds each lobe."""
    residual = target.copy()
    rows = []
    for _ in range(num_lobes):
        lum = residual.mean(axis=-1)
        idx = np.unravel_index(np.argmax(lum), lum.shape)
        axis = dirs_grid[idx]
        intensity = np.maximum(residual[idx], LOG_FLOOR)
        sharp = 10.0
        theta, phi = unit_to_spherical(axis)
        rows.append(
            np.concatenate([np.log(intensity), [np.log(sharp), theta, phi]])
        )
        contrib = intensity[None, None, :] * np.exp(
            sharp * (dirs_grid @ axis - 1.0)
        )[..., None]
        residual = residual - contrib
    return np.stack(rows)


def fit_sg(target: EnvironmentMap, config: FitConfig = FitConfig()) -> FitResult:
    """Fit config.num_lobes lobes to the map by damped Gauss-Newton.

    Deterministic. The returned trace holds the objective after every
    accepted step (the initial objective first) and never increases.
    """
    rows, cols = target.rows, target.cols
    dirs_grid = grid_directions(rows, cols)
    weights = solid_angle_weights(rows, cols)
    sqrt_w = np.sqrt(weights / (3.0 * weights.sum())).reshape(-1)
    dirs = dirs_grid.reshape(-1, 3)
    tgt = target.data.reshape(-1, 3)

    p = _greedy_init(target.data, dirs_grid, config.num_lobes)
    r, pred = _objective_parts(p, dirs, tgt, sqrt_w)
    loss = float(r @ r)
    trace = [loss]
    damping = config.damping_init
    iterations = 0
    converged = False

    for _ in range(config.max_iterations):
        jac = _jacobian(p, dirs, pred, sqrt_w)
        g = jac.T @ r
        h = jac.T @ jac
        diag = np.diag(h).copy()
        diag[diag <= 0.0] = 1e-12
        accepted = False
        for _ in range(60):  # damping escalation within one iteration
            try:
                step = np.linalg.solve(h + damping * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                damping *= config.damping_growth
                continue
            p_try = p + step.reshape(p.shape)
            r_try, pred_try = _objective_parts(p_try, dirs, tgt, sqrt_w)
            loss_try = float(r_try @ r_try)
            if np.isfinite(loss_try) and loss_try < loss:
                rel_drop = (loss - loss_try) / max(loss, 1e-300)
                p, r, pred = p_try, r_try, pred_try
                loss = loss_try
                damping = max(damping * config.damping_shrink, 1e-12)
                accepted = True
                break
            damping *= config.damping_growth
            if damping > 1e14:
                break
        if not accepted:
            # damping escalation exhausted: stationary point reached
            converged = True
            break
        iterations += 1
        trace.append(loss)
        if rel_drop < config.tolerance or loss == 0.0:
            converged = True
            break

    return FitResult(
        environment=_env_from_params(p),
        final_loss=loss,
        iterations=iterations,
        converged=converged,
        loss_trace=tuple(trace),
    )


def fit_objective(env: SgEnvironment, target: EnvironmentMap) -> float:
    """The exact objective fit_sg minimizes, for external comparisons."""
    rows, cols = target.rows, target.cols
    weights = solid_angle_weights(rows, cols)
    sqrt_w = np.sqrt(weights / (3.0 * weights.sum())).reshape(-1)
    dirs = grid_directions(rows, cols).reshape(-1, 3)
    r, _ = _objective_parts(
        _params_from_env(env), dirs, target.data.reshape(-1, 3), sqrt_w
    )
    return float(r @ r)


def fit_visibility(env: SgEnvironment, targets: np.ndarray) -> np.ndarray:
    """Per-pixel visibility factors for fixed lobes, each in [0, 1].

    targets has shape (..., rows, cols, 3): per-pixel environment maps.
    Solves min || sum_s mu_s * decode_s - target || per pixel with bounds
    0 <= mu <= 1 (solid-angle weighted, matching fit_sg's objective
    weighting in the linear domain). Returns (..., S).
    """
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim < 3 or targets.shape[-1] != 3:
        raise ValueError("targets must be (..., rows, cols, 3)")
    rows, cols = targets.shape[-3], targets.shape[-2]
    dirs = grid_directions(rows, cols).reshape(-1, 3)
    sqrt_w = np.sqrt(solid_angle_weights(rows, cols)).reshape(-1)
    s = env.num_lobes
    basis = np.zeros((rows * cols * 3, s))
    for si, lobe in enumerate(env.lobes):
        vals = lobe.intensity[None, :] * np.exp(
            lobe.sharpness * (dirs @ lobe.axis - 1.0)
        )[:, None]
        basis[:, si] = (vals * sqrt_w[:, None]).reshape(-1)
    lead = targets.shape[:-3]
    flat = targets.reshape((-1, rows * cols, 3))
    out = np.zeros((flat.shape[0], s))
    for i in range(flat.shape[0]):
        b = (flat[i] * sqrt_w[:, None]).reshape(-1)
        res = lsq_linear(basis, b, bounds=(0.0, 1.0), tol=1e-14)
        out[i] = res.x
    return out.reshape(lead + (s,))


def match_lobes(fitted: SgEnvironment, reference: SgEnvironment):
    """Hungarian pairing of lobes by axis angle; list of (fit, ref) pairs."""
    fa = np.stack([lobe.axis for lobe in fitted.lobes])
    ra = np.stack([lobe.axis for lobe in reference.lobes])
    cost = np.arccos(np.clip(fa @ ra.T, -1.0, 1.0))
    rows, cols = linear_sum_assignment(cost)
    return list(zip(rows.tolist(), cols.tolist()))
