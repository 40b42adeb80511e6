"""Edge maps, line segments and the edge-alignment score of view angles.

Image coordinates follow the array: a pixel ``[i, j]`` sits at ``(x, y) =
(i, j)``. Orientations are measured counter-clockwise from the x-axis and
folded into ``[0, 180)``. The ray direction of view angle ``t`` (see
:mod:`edgeview.projector`) has orientation ``t + 90``, so a segment of
orientation ``phi`` lies parallel to the rays of view ``phi + 90`` (mod 180).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import _accel
from ._accel import HAVE_NUMBA, njit
from .errors import InvalidInputError, ParameterError

RAD2DEG = 180.0 / math.pi
# cone boundaries are inclusive; integer pixel offsets and integer-degree
# candidates land exactly on them, so rounding must not decide membership
ANGLE_TOL = 1e-9


def ray_orientation(view_angle):
    """Image orientation of the rays of ``view_angle`` (degrees)."""
    return (np.asarray(view_angle, dtype=np.float64) + 90.0) % 180.0


def view_angle_of(orientation):
    """View angle whose rays run parallel to an edge of ``orientation``."""
    return (np.asarray(orientation, dtype=np.float64) + 90.0) % 180.0


def fold_distance(a, b):
    """Distance between two orientations on the 180-degree circle."""
    d = np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)) % 180.0
    return np.minimum(d, 180.0 - d)


@dataclass(frozen=True)
class LineSegment:
    x0: float
    y0: float
    x1: float
    y1: float

    @property
    def midpoint(self):
        return (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))

    @property
    def orientation(self):
        return math.degrees(math.atan2(self.y1 - self.y0, self.x1 - self.x0)) % 180.0

    @property
    def length(self):
        return math.hypot(self.x1 - self.x0, self.y1 - self.y0)


@dataclass(frozen=True)
class EdgeParams:
    """Knobs for edge extraction and the alignment cone.

    ``epsilon`` is the cone half-opening in degrees. ``high_fraction`` sets the
    Canny high threshold relative to the slice's peak gradient magnitude and
    ``low_ratio`` the low threshold relative to the high one. ``cone_axis``
    picks between the cone pointing along the candidate's rays
    (``"candidate"``) and the cone fixed to the segment with an angular gate
    (``"segment"``).
    """

    epsilon: float = 2.0
    sigma: float = 1.0
    high_fraction: float = 0.2
    low_ratio: float = 0.5
    vote_threshold: int = 10
    min_length: float = 10.0
    max_gap: int = 3
    theta_res: float = 1.0
    rho_res: float = 1.0
    seed: int = 0
    cone_axis: str = "candidate"

    def __post_init__(self):
        if not 0 < self.epsilon < 90:
            raise ParameterError(f"cone half-opening must be in (0, 90), got {self.epsilon}")
        if self.cone_axis not in ("candidate", "segment"):
            raise ParameterError(f"cone_axis must be 'candidate' or 'segment', got {self.cone_axis!r}")
        if not self.sigma > 0:
            raise ParameterError("sigma must be positive")
        if not (0 < self.high_fraction <= 1 and 0 < self.low_ratio <= 1):
            raise ParameterError("Canny threshold fractions must lie in (0, 1]")
        if self.vote_threshold < 1 or self.min_length <= 0 or self.max_gap < 0:
            raise ParameterError("PPHT parameters must be positive")


# ----------------------------------------------------------------------- Canny


def _nonmax_suppress(mag, gx, gy):
    direction = np.degrees(np.arctan2(gy, gx)) % 180.0
    padded = np.pad(mag, 1)
    nx, ny = mag.shape

    def shifted(di, dj):
        return padded[1 + di : 1 + di + nx, 1 + dj : 1 + dj + ny]

    keep = np.zeros(mag.shape, dtype=bool)
    sectors = (
        ((direction < 22.5) | (direction >= 157.5), (1, 0)),
        ((direction >= 22.5) & (direction < 67.5), (1, 1)),
        ((direction >= 67.5) & (direction < 112.5), (0, 1)),
        ((direction >= 112.5) & (direction < 157.5), (1, -1)),
    )
    for sel, (di, dj) in sectors:
        ahead = shifted(di, dj)
        behind = shifted(-di, -dj)
        # asymmetric comparison so a plateau straddling two pixels keeps one
        keep |= sel & (mag >= behind) & (mag > ahead)
    return keep & (mag > 0)


def gradient(slice_, sigma=1.0):
    """Gaussian-smoothed Sobel gradient, scaled to units per pixel."""
    img = np.asarray(slice_, dtype=np.float64)
    smooth = ndimage.gaussian_filter(img, sigma, mode="nearest")
    gx = ndimage.sobel(smooth, axis=0, mode="nearest") / 8.0
    gy = ndimage.sobel(smooth, axis=1, mode="nearest") / 8.0
    return gx, gy


def canny(slice_, sigma=1.0, low=None, high=None, *, high_fraction=0.2, low_ratio=0.5):
    """Binary Canny edge map of a 2D slice.

    Absolute ``low``/``high`` thresholds apply to the gradient magnitude;
    when omitted, ``high = high_fraction * max|grad|`` and ``low = low_ratio * high``.
    """
    img = np.asarray(slice_, dtype=np.float64)
    if img.ndim != 2 or min(img.shape) < 3:
        raise InvalidInputError(f"Canny needs a 2D slice at least 3x3, got shape {img.shape}")
    if not sigma > 0:
        raise ParameterError("sigma must be positive")
    gx, gy = gradient(img, sigma)
    mag = np.hypot(gx, gy)
    peak = float(mag.max())
    if high is None:
        high = high_fraction * peak
    if low is None:
        low = low_ratio * high
    if peak == 0.0 or high <= 0.0:
        return np.zeros(img.shape, dtype=np.uint8)
    if not (high >= low > 0):
        raise ParameterError(f"need high >= low > 0, got low={low}, high={high}")
    thin = _nonmax_suppress(mag, gx, gy)
    weak = thin & (mag >= low)
    strong = thin & (mag >= high)
    labels, n = ndimage.label(weak, structure=np.ones((3, 3), dtype=bool))
    if n == 0:
        return np.zeros(img.shape, dtype=np.uint8)
    seeded = np.zeros(n + 1, dtype=bool)
    seeded[np.unique(labels[strong])] = True
    seeded[0] = False
    return seeded[labels].astype(np.uint8)


# ------------------------------------------------------------------------ PPHT


def _ppht_kernel(edges, order, cos_t, sin_t, rho_res, rho_offset, n_rho, threshold,
                 min_length, max_gap, band):
    nx, ny = edges.shape
    n_theta = cos_t.shape[0]
    mask = edges.copy()
    voted = np.zeros((nx, ny), dtype=np.uint8)
    acc = np.zeros((n_theta, n_rho), dtype=np.int64)
    out = np.zeros((order.shape[0], 4), dtype=np.int64)
    n_out = 0
    for n in range(order.shape[0]):
        i = order[n] // ny
        j = order[n] - i * ny
        if mask[i, j] == 0:
            continue
        best = -1
        best_t = 0
        for t in range(n_theta):
            r = int(math.floor((i * cos_t[t] + j * sin_t[t]) / rho_res + 0.5)) + rho_offset
            acc[t, r] += 1
            if acc[t, r] > best:
                best = acc[t, r]
                best_t = t
        voted[i, j] = 1
        if best < threshold:
            continue

        dx = -sin_t[best_t]
        dy = cos_t[best_t]
        x_major = abs(dx) >= abs(dy)
        if x_major:
            si = 1.0 if dx > 0 else -1.0
            sj = dy / abs(dx)
        else:
            sj = 1.0 if dy > 0 else -1.0
            si = dx / abs(dy)

        # walk both ways from the seed, tolerating gaps up to max_gap
        end_i = np.array([i, i])
        end_j = np.array([j, j])
        end_step = np.array([0, 0])
        for side in range(2):
            sgn = 1.0 if side == 0 else -1.0
            gap = 0
            step = 0
            while True:
                step += 1
                ci = int(math.floor(i + sgn * step * si + 0.5))
                cj = int(math.floor(j + sgn * step * sj + 0.5))
                if ci < 0 or ci >= nx or cj < 0 or cj >= ny:
                    break
                hit = False
                for o in range(2 * band + 1):
                    # lateral offsets in the order 0, -1, +1, -2, +2, ...
                    off = (o + 1) // 2 if o % 2 == 0 else -((o + 1) // 2)
                    pi = ci if x_major else ci + off
                    pj = cj + off if x_major else cj
                    if 0 <= pi < nx and 0 <= pj < ny and mask[pi, pj] != 0:
                        end_i[side] = pi
                        end_j[side] = pj
                        end_step[side] = step
                        hit = True
                        break
                if hit:
                    gap = 0
                else:
                    gap += 1
                    if gap > max_gap:
                        break

        length = math.hypot(end_i[0] - end_i[1], end_j[0] - end_j[1])
        good = length >= min_length

        # consume the walked pixels; segments that qualify also withdraw their votes
        for side in range(2):
            sgn = 1.0 if side == 0 else -1.0
            for step in range(0 if side == 0 else 1, end_step[side] + 1):
                ci = int(math.floor(i + sgn * step * si + 0.5))
                cj = int(math.floor(j + sgn * step * sj + 0.5))
                for off in range(-band, band + 1):
                    pi = ci if x_major else ci + off
                    pj = cj + off if x_major else cj
                    if pi < 0 or pi >= nx or pj < 0 or pj >= ny or mask[pi, pj] == 0:
                        continue
                    if good and voted[pi, pj] != 0:
                        for t in range(n_theta):
                            r = int(math.floor((pi * cos_t[t] + pj * sin_t[t]) / rho_res + 0.5))
                            acc[t, r + rho_offset] -= 1
                        voted[pi, pj] = 0
                    mask[pi, pj] = 0
        if good:
            out[n_out, 0] = end_i[1]
            out[n_out, 1] = end_j[1]
            out[n_out, 2] = end_i[0]
            out[n_out, 3] = end_j[0]
            n_out += 1
    return out[:n_out]


_ppht_py = _ppht_kernel
_ppht_nb = njit(cache=True)(_ppht_kernel) if HAVE_NUMBA else _ppht_kernel


def ppht(edges, vote_threshold=10, min_length=10.0, max_gap=3, seed=0,
         theta_res=1.0, rho_res=1.0, band=1) -> list[LineSegment]:
    """Progressive probabilistic Hough transform.

    Edge pixels are visited in a seeded random order. Each visit votes into a
    ``(theta, rho)`` accumulator; once the pixel's best bin reaches
    ``vote_threshold`` the corresponding line is walked in both directions
    (allowing gaps of up to ``max_gap`` pixels and a ``band``-pixel lateral
    tolerance), the walked pixels are removed, and the segment is kept when it
    is at least ``min_length`` long. Kept segments withdraw their pixels' votes.
    """
    e = (np.asarray(edges) != 0).astype(np.uint8)
    if e.ndim != 2:
        raise InvalidInputError(f"edge map must be 2D, got shape {e.shape}")
    if vote_threshold < 1 or min_length <= 0 or max_gap < 0 or theta_res <= 0 or rho_res <= 0:
        raise ParameterError("PPHT parameters must be positive")
    pixels = np.flatnonzero(e)
    if pixels.size == 0:
        return []
    order = np.random.default_rng(seed).permutation(pixels).astype(np.int64)
    thetas = np.radians(np.arange(0.0, 180.0, theta_res))
    nx, ny = e.shape
    rho_max = int(math.ceil(math.hypot(nx, ny) / rho_res)) + 1
    kernel = _ppht_nb if _accel.use_numba() else _ppht_py
    raw = kernel(
        e, order, np.cos(thetas), np.sin(thetas), float(rho_res), rho_max, 2 * rho_max + 1,
        int(vote_threshold), float(min_length), int(max_gap), int(band),
    )
    return [LineSegment(float(a), float(b), float(c), float(d)) for a, b, c, d in raw]


# ---------------------------------------------------------------- cone masks


def in_cone(vx, vy, axis, eps):
    """Is the direction ``(vx, vy)`` within ``eps`` of orientation ``axis``?"""
    if vx == 0.0 and vy == 0.0:
        return True
    psi = (math.atan2(vy, vx) * RAD2DEG) % 180.0
    d = abs(psi - axis)
    return min(d, 180.0 - d) <= eps + ANGLE_TOL


def _pixel_orientations(px, py, mx, my):
    vx = px - mx
    vy = py - my
    psi = (np.arctan2(vy, vx) * RAD2DEG) % 180.0
    return psi, (vx == 0.0) & (vy == 0.0)


def cone_mask(segment: LineSegment, theta, eps, dims) -> np.ndarray:
    """Double-sided cone at the segment midpoint with its axis at orientation ``theta``.

    A pixel is inside when the direction from the vertex to its center is
    within ``eps`` degrees of the axis (mod 180); the vertex itself is inside.
    """
    if not 0 <= theta < 180:
        raise ParameterError(f"theta must be in [0, 180), got {theta}")
    nx, ny = dims
    mx, my = segment.midpoint
    px, py = np.meshgrid(np.arange(nx, dtype=float), np.arange(ny, dtype=float), indexing="ij")
    psi, vertex = _pixel_orientations(px, py, mx, my)
    d = np.abs(psi - float(theta))
    return (vertex | (np.minimum(d, 180.0 - d) <= eps + ANGLE_TOL)).astype(np.uint8)


@njit(cache=True)
def _cone_accumulate_nb(px, py, mids, axes, eps):
    acc = np.zeros(axes.shape[0])
    for m in range(mids.shape[0]):
        for p in range(px.shape[0]):
            vx = px[p] - mids[m, 0]
            vy = py[p] - mids[m, 1]
            if vx == 0.0 and vy == 0.0:
                for c in range(axes.shape[0]):
                    acc[c] += 1.0
                continue
            psi = (math.atan2(vy, vx) * RAD2DEG) % 180.0
            for c in range(axes.shape[0]):
                d = abs(psi - axes[c])
                if min(d, 180.0 - d) <= eps:
                    acc[c] += 1.0
    return acc


def _cone_accumulate_np(px, py, mids, axes, eps):
    acc = np.zeros(axes.shape[0])
    for mx, my in mids:
        psi, vertex = _pixel_orientations(px, py, mx, my)
        d = np.abs(psi[:, None] - axes[None, :])
        inside = (np.minimum(d, 180.0 - d) <= eps) | vertex[:, None]
        acc += inside.sum(axis=0)
    return acc


def cone_counts(edge_map, segments, axes, eps):
    """For each axis orientation, edge pixels summed over every segment's cone."""
    pix = np.argwhere(np.asarray(edge_map) != 0).astype(np.float64)
    axes = np.asarray(axes, dtype=np.float64).reshape(-1)
    if pix.size == 0 or not segments:
        return np.zeros(axes.shape[0])
    mids = np.array([s.midpoint for s in segments], dtype=np.float64)
    px = np.ascontiguousarray(pix[:, 0])
    py = np.ascontiguousarray(pix[:, 1])
    kernel = _cone_accumulate_nb if _accel.use_numba() else _cone_accumulate_np
    return kernel(px, py, mids, axes, float(eps) + ANGLE_TOL)


def alignment_accumulator(edge_map, segments, candidates, eps, cone_axis="candidate"):
    """Unnormalized edge-alignment score of each candidate view angle for one slice."""
    candidates = np.asarray(candidates, dtype=np.float64).reshape(-1)
    axes = ray_orientation(candidates)
    if cone_axis == "candidate":
        return cone_counts(edge_map, segments, axes, eps)
    acc = np.zeros(candidates.shape[0])
    for seg in segments:
        own = cone_counts(edge_map, [seg], [seg.orientation], eps)[0]
        acc += np.where(fold_distance(axes, seg.orientation) <= eps + ANGLE_TOL, own, 0.0)
    return acc


def normalize_max(values):
    values = np.asarray(values, dtype=np.float64)
    top = float(values.max()) if values.size else 0.0
    if top <= 0.0:
        return np.zeros_like(values)
    return values / top


@dataclass
class SliceFeatures:
    edges: np.ndarray
    segments: list[LineSegment]


def slice_seed(seed, k):
    return int(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, int(k)]).generate_state(1)[0])


def extract_features(volume, params: EdgeParams | None = None) -> list[SliceFeatures]:
    """Canny edges and PPHT segments for every slice of ``volume``."""
    params = params or EdgeParams()
    vol = np.asarray(volume, dtype=np.float64)
    if vol.ndim == 2:
        vol = vol[None]
    feats = []
    for k, sl in enumerate(vol):
        e = canny(sl, params.sigma, high_fraction=params.high_fraction, low_ratio=params.low_ratio)
        segs = ppht(
            e, params.vote_threshold, params.min_length, params.max_gap,
            seed=slice_seed(params.seed, k), theta_res=params.theta_res, rho_res=params.rho_res,
        )
        feats.append(SliceFeatures(e, segs))
    return feats


def alignment_from_features(features, candidates, params: EdgeParams | None = None):
    params = params or EdgeParams()
    acc = np.zeros(np.asarray(candidates).reshape(-1).shape[0])
    for f in features:
        acc += alignment_accumulator(f.edges, f.segments, candidates, params.epsilon, params.cone_axis)
    return acc


def edge_alignment_table(volume, candidates, params: EdgeParams | None = None) -> np.ndarray:
    """Edge-alignment score ``f`` of each candidate view angle, max-normalized to 1.

    Returns all zeros when the reconstruction has no edges or no segments.
    """
    candidates = np.asarray(candidates, dtype=np.float64).reshape(-1)
    if candidates.size == 0:
        raise InvalidInputError("need at least one candidate angle")
    if np.any(candidates < 0) or np.any(candidates >= 180):
        raise InvalidInputError("candidate angles must lie in [0, 180)")
    feats = extract_features(volume, params)
    return normalize_max(alignment_from_features(feats, candidates, params))
