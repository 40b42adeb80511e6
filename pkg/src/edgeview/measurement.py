"""Transmission measurement model: Poisson counts and their log-transform."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .projector import Projection

DEFAULT_I0 = 10000.0
C_MIN = 1.0


@dataclass(frozen=True)
class CountData:
    angle: float
    counts: np.ndarray
    i0: float


@dataclass(frozen=True)
class WeightedProjection:
    angle: float
    values: np.ndarray
    weights: np.ndarray


def angle_key(angle):
    """Integer key for an angle, stable to 1e-6 degree."""
    return int(round(float(angle) * 1e6))


def slice_generators(seed, angle, n_slices):
    """One independent generator per slice for the view at ``angle``.

    Keyed on the angle value rather than acquisition order, so a view's noise
    is the same no matter when it is measured.
    """
    root = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, angle_key(angle)])
    return [np.random.default_rng(s) for s in root.spawn(n_slices)]


def simulate_counts(projection: Projection, i0: float = DEFAULT_I0, seed: int = 0) -> CountData:
    """Draw Poisson counts with mean ``i0 * exp(-p)`` for every detector pixel."""
    if not i0 > 0:
        raise ParameterError(f"blank-scan intensity I0 must be positive, got {i0}")
    p = np.asarray(projection.values, dtype=np.float64)
    if p.ndim == 1:
        p = p[None]
    if np.any(p < 0):
        raise ParameterError("projection values must be non-negative")
    # exp(-inf) is 0; clamp NaN-free
    mean = i0 * np.exp(-np.nan_to_num(p, nan=np.inf, posinf=np.inf))
    gens = slice_generators(seed, projection.angle, p.shape[0])
    counts = np.stack([g.poisson(m) for g, m in zip(gens, mean)]).astype(np.int64)
    return CountData(angle=float(projection.angle), counts=counts, i0=float(i0))


def counts_to_attenuation(data: CountData, c_min: float = C_MIN) -> WeightedProjection:
    counts = np.asarray(data.counts, dtype=np.float64)
    clamped = counts < c_min
    p = -np.log(np.maximum(counts, c_min) / data.i0)
    w = np.where(clamped, 0.0, counts)
    return WeightedProjection(angle=data.angle, values=p, weights=w)


def ideal_measurement(projection: Projection, i0: float = DEFAULT_I0) -> WeightedProjection:
    """Noise-free data: exact line integrals weighted by their expected counts."""
    if not i0 > 0:
        raise ParameterError(f"blank-scan intensity I0 must be positive, got {i0}")
    p = np.asarray(projection.values, dtype=np.float64)
    if p.ndim == 1:
        p = p[None]
    return WeightedProjection(angle=float(projection.angle), values=p.copy(), weights=i0 * np.exp(-p))
