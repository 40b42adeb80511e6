"""Weighted least-squares reconstruction with an edge-preserving prior.

Minimizes

    F(x) = 1/2 sum w (p - A x)^2 + beta * sum_{pairs} b_jk huber(x_j - x_k; delta)

over the 8-neighbourhood of each slice (``b = 1`` for edge neighbours,
``1/sqrt(2)`` for diagonal ones), optionally subject to ``x >= 0``.

The solver is monotone FISTA preconditioned by a separable quadratic
surrogate: ``D = A^T W A 1 + 2 beta sum_k b_jk`` majorizes the Hessian, so a
unit step in the ``D`` metric never increases ``F``. Rejected momentum steps
keep the previous iterate, which makes the objective non-increasing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from ._accel import njit, prange
from .errors import GeometryError, InvalidInputError, ParameterError
from .measurement import WeightedProjection
from .projector import ProjectionGeometry, back_project_many, forward_project_many

_DIAG = 1.0 / math.sqrt(2.0)
# (di, dj, weight): each unordered neighbour pair appears once
_OFFSETS = ((1, 0, 1.0), (0, 1, 1.0), (1, 1, _DIAG), (1, -1, _DIAG))


@dataclass(frozen=True)
class ReconParams:
    beta: float | None = None  # None: pick automatically, see auto_beta
    delta: float = 1e-3
    max_iter: int = 200
    tol: float = 1e-4
    nonneg: bool = True
    beta_factor: float = 1.0

    def __post_init__(self):
        if self.beta is not None and not self.beta >= 0:
            raise ParameterError(f"beta must be >= 0, got {self.beta}")
        if not self.delta > 0:
            raise ParameterError(f"delta must be > 0, got {self.delta}")
        if not self.tol > 0:
            raise ParameterError(f"tol must be > 0, got {self.tol}")
        if int(self.max_iter) < 1:
            raise ParameterError(f"max_iter must be >= 1, got {self.max_iter}")


@dataclass
class ReconResult:
    volume: np.ndarray
    beta: float
    n_iter: int
    converged: bool
    objective: list[float] = field(default_factory=list)


# --------------------------------------------------------------------- kernels


@njit(parallel=True, cache=True)
def _huber_nb(x, delta):
    nz, nx, ny = x.shape
    grad = np.zeros_like(x)
    per_slice = np.zeros(nz)
    diag = 1.0 / math.sqrt(2.0)
    for k in prange(nz):
        acc = 0.0
        for i in range(nx):
            for j in range(ny):
                xij = x[k, i, j]
                for n in range(4):
                    if n == 0:
                        di, dj, b = 1, 0, 1.0
                    elif n == 1:
                        di, dj, b = 0, 1, 1.0
                    elif n == 2:
                        di, dj, b = 1, 1, diag
                    else:
                        di, dj, b = 1, -1, diag
                    i2 = i + di
                    j2 = j + dj
                    if i2 >= nx or j2 < 0 or j2 >= ny:
                        continue
                    t = xij - x[k, i2, j2]
                    at = abs(t)
                    if at <= delta:
                        acc += b * 0.5 * t * t
                        d = b * t
                    else:
                        acc += b * (delta * at - 0.5 * delta * delta)
                        d = b * delta if t > 0 else -b * delta
                    grad[k, i, j] += d
                    grad[k, i2, j2] -= d
        per_slice[k] = acc
    return per_slice.sum(), grad


def _huber_np(x, delta):
    grad = np.zeros_like(x)
    value = 0.0
    nx, ny = x.shape[1:]
    for di, dj, b in _OFFSETS:
        sa = (slice(None), slice(0, nx - di), slice(max(0, -dj), ny - max(0, dj)))
        sb = (slice(None), slice(di, nx), slice(max(0, dj), ny - max(0, -dj)))
        t = x[sa] - x[sb]
        at = np.abs(t)
        quad = at <= delta
        value += b * np.where(quad, 0.5 * t * t, delta * at - 0.5 * delta * delta).sum()
        d = b * np.clip(t, -delta, delta)
        grad[sa] += d
        grad[sb] -= d
    return value, grad


def huber_prior(x, delta):
    """Value and gradient of the 8-neighbourhood Huber penalty."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if _accel.use_numba():
        value, grad = _huber_nb(x, float(delta))
        return float(value), grad
    return _huber_np(x, float(delta))


def neighbour_weight_sum(dims):
    """``sum_k b_jk`` for every voxel (fewer neighbours on the border)."""
    nz, nx, ny = dims
    out = np.zeros((nz, nx, ny))
    for di, dj, b in _OFFSETS:
        sa = (slice(None), slice(0, nx - di), slice(max(0, -dj), ny - max(0, dj)))
        sb = (slice(None), slice(di, nx), slice(max(0, dj), ny - max(0, -dj)))
        out[sa] += b
        out[sb] += b
    return out


# ---------------------------------------------------------------------- solver


def _stack(data, geom):
    if not data:
        raise InvalidInputError("reconstruction needs at least one projection")
    angles = np.array([d.angle for d in data], dtype=np.float64)
    p = np.stack([np.atleast_2d(np.asarray(d.values, dtype=np.float64)) for d in data])
    w = np.stack([np.atleast_2d(np.asarray(d.weights, dtype=np.float64)) for d in data])
    if p.shape != w.shape:
        raise GeometryError("values and weights disagree in shape")
    if p.shape[2] != geom.n_channels:
        raise GeometryError(
            f"projections have {p.shape[2]} channels, geometry expects {geom.n_channels}"
        )
    return angles, p, w


def _dims_from(geom, p, init, dims):
    if init is not None:
        return tuple(np.shape(init))
    if dims is not None:
        return tuple(int(n) for n in dims)
    if geom.image_shape is None:
        raise GeometryError("cannot infer image size: pass init, dims, or a sized geometry")
    return (p.shape[1], *geom.image_shape)


AUTO_BETA_GAIN = 0.01


def auto_beta(w, delta, factor=1.0):
    """Prior strength from the measurement weights and the Huber threshold.

    ``beta = 0.01 * factor * mean(w) / delta``. The curvature of the data
    term per view grows with ``w`` and the prior's curvature is ``1/delta``
    inside its quadratic zone, so this keeps their balance per view fixed;
    as views accumulate the data term naturally takes over.
    """
    mean_w = float(np.mean(w)) if np.size(w) else 0.0
    if mean_w <= 0.0:
        return 0.0
    return AUTO_BETA_GAIN * float(factor) * mean_w / float(delta)


def solve(
    data: list[WeightedProjection],
    geom: ProjectionGeometry,
    init: np.ndarray | None = None,
    params: ReconParams | None = None,
    dims=None,
) -> ReconResult:
    """Reconstruct a volume from weighted projections; see module docstring."""
    params = params or ReconParams()
    angles, p, w = _stack(data, geom)
    dims = _dims_from(geom, p, init, dims)
    if dims[0] != p.shape[1]:
        raise GeometryError(f"volume has {dims[0]} slices, projections have {p.shape[1]}")
    geom.check_image(dims[1], dims[2])

    beta = params.beta
    if beta is None:
        beta = auto_beta(w, params.delta, params.beta_factor)
    beta = float(beta)
    delta = float(params.delta)

    def A(v):
        return forward_project_many(v, angles, geom)

    def At(s):
        return back_project_many(s, angles, geom, dims)

    def objective(ax, v):
        r = p - ax
        f = 0.5 * float(np.sum(w * r * r))
        if beta > 0:
            f += beta * huber_prior(v, delta)[0]
        return f

    # separable majorizer of the Hessian
    D = At(w * A(np.ones(dims)))
    if beta > 0:
        D += 2.0 * beta * neighbour_weight_sum(dims)
    D = np.maximum(D, 1e-12 * max(float(D.max()), 1e-300))

    x = np.zeros(dims) if init is None else np.array(init, dtype=np.float64)
    if x.shape != tuple(dims):
        raise GeometryError(f"init has shape {x.shape}, expected {tuple(dims)}")
    if params.nonneg:
        x = np.maximum(x, 0.0)
    ax = A(x)
    fx = objective(ax, x)
    history = [fx]
    y, ay, t = x, ax, 1.0
    converged = False
    n_iter = 0
    for n_iter in range(1, int(params.max_iter) + 1):
        g = At(w * (ay - p))
        if beta > 0:
            g += beta * huber_prior(y, delta)[1]
        z = y - g / D
        if params.nonneg:
            np.maximum(z, 0.0, out=z)
        step = float(np.linalg.norm(z - y))
        scale = float(np.linalg.norm(z))
        az = A(z)
        fz = objective(az, z)
        if fz <= fx:
            x_new, ax_new, fx_new = z, az, fz
        else:
            x_new, ax_new, fx_new = x, ax, fx
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        c1, c2 = t / t_new, (t - 1.0) / t_new
        y = x_new + c1 * (z - x_new) + c2 * (x_new - x)
        ay = ax_new + c1 * (az - ax_new) + c2 * (ax_new - ax)
        x, ax, fx, t = x_new, ax_new, fx_new, t_new
        history.append(fx)
        if step <= params.tol * scale or scale == 0.0:
            converged = True
            break
    return ReconResult(volume=x, beta=beta, n_iter=n_iter, converged=converged, objective=history)


def reconstruct(
    data: list[WeightedProjection],
    geom: ProjectionGeometry,
    init: np.ndarray | None = None,
    params: ReconParams | None = None,
    dims=None,
) -> np.ndarray:
    return solve(data, geom, init, params, dims).volume
