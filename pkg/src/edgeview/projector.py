"""Slice-wise parallel-beam projector.

Angle convention: at 0 degrees rays travel along the image y-axis (array
axis 1) and the projection lands on the x-axis (array axis 0). Increasing the
angle turns the ray direction counter-clockwise, so the ray direction is
``(-sin t, cos t)`` and the detector coordinate of a point is
``s = (x - cx) cos t + (y - cy) sin t``.

Each pixel is treated as a unit square whose shadow on the detector is a
trapezoid; the forward model deposits the trapezoid's area in every channel
it overlaps. Back projection gathers with the same weights, so the pair is an
exact transpose and each voxel's mass is preserved at every angle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _accel
from ._accel import njit, prange
from .errors import GeometryError, InvalidInputError


@dataclass(frozen=True)
class ProjectionGeometry:
    n_channels: int
    pitch: float = 1.0
    center: tuple[float, float] | None = None
    image_shape: tuple[int, int] | None = None

    @classmethod
    def for_image(cls, nx, ny, pitch=1.0):
        """Auto-size the detector so no object mass falls off it.

        ``ceil(diagonal) + 2`` channels, plus one more when needed so that
        voxel centers sit on channel centers at 0 degrees.
        """
        nc = math.ceil(math.hypot(nx, ny) / pitch) + 2
        if pitch == 1.0 and (nc - nx) % 2:
            nc += 1
        return cls(n_channels=nc, pitch=float(pitch), image_shape=(int(nx), int(ny)))

    def rotation_center(self, nx, ny):
        if self.center is None:
            return (nx - 1) / 2.0, (ny - 1) / 2.0
        return float(self.center[0]), float(self.center[1])

    def check_image(self, nx, ny):
        if self.image_shape is not None and tuple(self.image_shape) != (nx, ny):
            raise GeometryError(
                f"geometry built for {tuple(self.image_shape)} slices, volume has ({nx}, {ny})"
            )
        if self.n_channels < 1 or not self.pitch > 0:
            raise GeometryError("detector needs at least one channel and a positive pitch")

    def to_dict(self):
        return {
            "n_channels": self.n_channels,
            "pitch": self.pitch,
            "center": None if self.center is None else list(self.center),
            "image_shape": None if self.image_shape is None else list(self.image_shape),
        }


@dataclass(frozen=True)
class Projection:
    """One view: ``values`` has shape ``(Nz, Nc)``."""

    angle: float
    values: np.ndarray


def _trig(angles):
    t = np.radians(np.asarray(angles, dtype=np.float64).reshape(-1))
    return np.cos(t), np.sin(t)


def _check_angles(angles):
    a = np.asarray(angles, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(a)) or np.any(a < 0) or np.any(a >= 180):
        raise InvalidInputError(f"view angles must lie in [0, 180), got {a.tolist()}")
    return a


# --------------------------------------------------------------------- kernels
#
# A unit pixel seen at angle t casts a trapezoid on the detector: the
# convolution of two boxes of widths |cos t| and |sin t|. Its weight in a
# channel is the trapezoid's area over that channel's bin.


@njit(cache=True)
def _cdf_nb(s, inv_a, inv_ab, p, q):
    """Cumulative footprint mass from -inf to offset ``s``.

    ``inv_a = 1/wa`` and ``inv_ab = 1/(wa*wb)`` with ``wa >= wb``; ``inv_ab``
    is 0 for a box footprint (``wb == 0``), where ``p == q``.
    """
    r = abs(s)
    if r >= q:
        g = 0.5
    elif r <= p:
        g = r * inv_a
    else:
        g = p * inv_a + (q * (r - p) - 0.5 * (r * r - p * p)) * inv_ab
    return 0.5 + g if s >= 0 else 0.5 - g


@njit(cache=True)
def _footprint_nb(ca, sa, pitch):
    wa = max(abs(ca), abs(sa)) / pitch
    wb = min(abs(ca), abs(sa)) / pitch
    p = 0.5 * (wa - wb)
    q = 0.5 * (wa + wb)
    if wb < 1e-12:
        return 1.0 / wa, 0.0, q, q
    return 1.0 / wa, 1.0 / (wa * wb), p, q


def _cdf_np(s, wa, wb, p, q):
    r = np.abs(s)
    if wb < 1e-12:
        g = np.minimum(r, q) / wa
    else:
        ramp = p / wa + (q * (r - p) - 0.5 * (r * r - p * p)) / (wa * wb)
        g = np.where(r >= q, 0.5, np.where(r <= p, r / wa, ramp))
    return np.where(s >= 0, 0.5 + g, 0.5 - g)


def _footprint(ca, sa, pitch):
    wa, wb = sorted((abs(ca) / pitch, abs(sa) / pitch), reverse=True)
    return wa, wb, 0.5 * (wa - wb), 0.5 * (wa + wb)


@njit(parallel=True, cache=True)
def _forward_nb(vol, cos_t, sin_t, cx, cy, nc, pitch):
    nz, nx, ny = vol.shape
    na = cos_t.shape[0]
    out = np.zeros((na, nz, nc))
    half = (nc - 1) / 2.0
    for k in prange(nz):
        for a in range(na):
            ca = cos_t[a]
            sa = sin_t[a]
            inv_a, inv_ab, p, q = _footprint_nb(ca, sa, pitch)
            for i in range(nx):
                xs = (i - cx) * ca
                for j in range(ny):
                    v = vol[k, i, j]
                    if v == 0.0:
                        continue
                    u = (xs + (j - cy) * sa) / pitch + half
                    c_lo = int(math.floor(u - q + 0.5))
                    c_hi = int(math.floor(u + q + 0.5))
                    lo = _cdf_nb(c_lo - 0.5 - u, inv_a, inv_ab, p, q)
                    for c in range(c_lo, c_hi + 1):
                        hi = _cdf_nb(c + 0.5 - u, inv_a, inv_ab, p, q)
                        if 0 <= c < nc:
                            out[a, k, c] += (hi - lo) * v
                        lo = hi
    return out


@njit(parallel=True, cache=True)
def _back_nb(sino, cos_t, sin_t, cx, cy, nx, ny, pitch):
    na, nz, nc = sino.shape
    out = np.zeros((nz, nx, ny))
    half = (nc - 1) / 2.0
    for k in prange(nz):
        for a in range(na):
            ca = cos_t[a]
            sa = sin_t[a]
            inv_a, inv_ab, p, q = _footprint_nb(ca, sa, pitch)
            for i in range(nx):
                xs = (i - cx) * ca
                for j in range(ny):
                    u = (xs + (j - cy) * sa) / pitch + half
                    c_lo = int(math.floor(u - q + 0.5))
                    c_hi = int(math.floor(u + q + 0.5))
                    lo = _cdf_nb(c_lo - 0.5 - u, inv_a, inv_ab, p, q)
                    acc = 0.0
                    for c in range(c_lo, c_hi + 1):
                        hi = _cdf_nb(c + 0.5 - u, inv_a, inv_ab, p, q)
                        if 0 <= c < nc:
                            acc += (hi - lo) * sino[a, k, c]
                        lo = hi
                    out[k, i, j] += acc
    return out


def _channel_weights(ca, sa, cx, cy, nx, ny, nc, pitch):
    """Yield ``(channel, weight, valid)`` arrays over the pixel grid, one per footprint offset."""
    wa, wb, p, q = _footprint(ca, sa, pitch)
    xs = (np.arange(nx, dtype=np.float64) - cx)[:, None] * ca
    ys = (np.arange(ny, dtype=np.float64) - cy)[None, :]
    u = (xs + ys * sa) / pitch + (nc - 1) / 2.0
    c_lo = np.floor(u - q + 0.5).astype(np.int64)
    span = int(np.max(np.floor(u + q + 0.5).astype(np.int64) - c_lo))
    lo = _cdf_np(c_lo - 0.5 - u, wa, wb, p, q)
    for d in range(span + 1):
        c = c_lo + d
        hi = _cdf_np(c + 0.5 - u, wa, wb, p, q)
        ok = (c >= 0) & (c < nc)
        yield np.clip(c, 0, nc - 1), np.where(ok, hi - lo, 0.0)
        lo = hi


def _forward_np(vol, cos_t, sin_t, cx, cy, nc, pitch):
    nz, nx, ny = vol.shape
    out = np.zeros((cos_t.shape[0], nz, nc))
    flat = vol.reshape(nz, -1)
    base = (np.arange(nz, dtype=np.int64) * nc)[:, None]
    for a, (ca, sa) in enumerate(zip(cos_t, sin_t)):
        acc = np.zeros(nz * nc)
        for c, w in _channel_weights(ca, sa, cx, cy, nx, ny, nc, pitch):
            idx = base + c.reshape(1, -1)
            acc += np.bincount(idx.ravel(), (flat * w.reshape(1, -1)).ravel(), minlength=nz * nc)
        out[a] = acc.reshape(nz, nc)
    return out


def _back_np(sino, cos_t, sin_t, cx, cy, nx, ny, pitch):
    na, nz, nc = sino.shape
    out = np.zeros((nz, nx, ny))
    for a in range(na):
        p = sino[a]
        for c, w in _channel_weights(cos_t[a], sin_t[a], cx, cy, nx, ny, nc, pitch):
            out += w * p[:, c]
    return out


# ------------------------------------------------------------------ public API


def _as_volume(volume):
    vol = np.asarray(volume, dtype=np.float64)
    if vol.ndim == 2:
        vol = vol[None]
    if vol.ndim != 3:
        raise GeometryError(f"expected a (Nz, Nx, Ny) volume, got shape {vol.shape}")
    return np.ascontiguousarray(vol)


def forward_project_many(volume, angles, geom: ProjectionGeometry | None = None) -> np.ndarray:
    """Sinogram of ``volume`` with shape ``(n_angles, Nz, Nc)``."""
    vol = _as_volume(volume)
    _, nx, ny = vol.shape
    geom = geom or ProjectionGeometry.for_image(nx, ny)
    geom.check_image(nx, ny)
    cos_t, sin_t = _trig(_check_angles(angles))
    cx, cy = geom.rotation_center(nx, ny)
    kernel = _forward_nb if _accel.use_numba() else _forward_np
    return kernel(vol, cos_t, sin_t, cx, cy, int(geom.n_channels), float(geom.pitch))


def back_project_many(sino, angles, geom: ProjectionGeometry, dims) -> np.ndarray:
    """Transpose of :func:`forward_project_many`; ``dims`` is ``(Nz, Nx, Ny)``."""
    sino = np.ascontiguousarray(sino, dtype=np.float64)
    angles = _check_angles(angles)
    nz, nx, ny = (int(n) for n in dims)
    if sino.ndim != 3 or sino.shape[0] != angles.size:
        raise GeometryError(f"sinogram shape {sino.shape} does not match {angles.size} angles")
    if sino.shape[1] != nz or sino.shape[2] != geom.n_channels:
        raise GeometryError(
            f"sinogram slices/channels {sino.shape[1:]} do not match dims Nz={nz}, "
            f"Nc={geom.n_channels}"
        )
    geom.check_image(nx, ny)
    cos_t, sin_t = _trig(angles)
    cx, cy = geom.rotation_center(nx, ny)
    kernel = _back_nb if _accel.use_numba() else _back_np
    return kernel(sino, cos_t, sin_t, cx, cy, nx, ny, float(geom.pitch))


def forward_project(volume, angle, geom: ProjectionGeometry | None = None) -> Projection:
    vol = _as_volume(volume)
    geom = geom or ProjectionGeometry.for_image(*vol.shape[1:])
    values = forward_project_many(vol, [angle], geom)[0]
    return Projection(angle=float(angle), values=values)


def back_project(projection: Projection, geom: ProjectionGeometry, dims) -> np.ndarray:
    values = np.asarray(projection.values, dtype=np.float64)
    if values.ndim == 1:
        values = values[None]
    if not np.all(np.isfinite(values)):
        raise InvalidInputError("projection values must be finite")
    return back_project_many(values[None], [projection.angle], geom, dims)
