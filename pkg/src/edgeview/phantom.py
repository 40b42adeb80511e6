"""Binary geometric phantoms.

Voxel ``(k, i, j)`` has its center at integer coordinates ``(z, x, y) =
(k, i, j)``. A voxel is set when its center lies inside (or on the boundary
of) any listed primitive; set voxels take the attenuation scale, everything
else is zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidSpecError

SHAPE_KINDS = ("sphere", "box", "prism", "cylinder")

# number of size parameters per primitive
_SIZE_ARITY = {"sphere": 1, "box": 3, "prism": 2, "cylinder": 2}


@dataclass(frozen=True)
class Shape:
    """One primitive.

    ``size`` depends on ``kind``:

    * sphere: ``(radius,)``
    * box: ``(dz, dx, dy)`` full edge lengths
    * prism: ``(side, height)``, equilateral triangle in the xy-plane extruded along z
    * cylinder: ``(radius, height)``, axis along z

    ``rotation`` turns the shape counter-clockwise about the z-axis (degrees).
    """

    kind: str
    center: tuple[float, float, float]
    size: tuple[float, ...]
    rotation: float = 0.0

    def to_dict(self):
        return {
            "kind": self.kind,
            "center": list(self.center),
            "size": list(self.size),
            "rotation": self.rotation,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            kind=str(d["kind"]),
            center=tuple(float(c) for c in d["center"]),
            size=tuple(float(s) for s in d["size"]),
            rotation=float(d.get("rotation", 0.0)),
        )


@dataclass(frozen=True)
class PhantomSpec:
    dims: tuple[int, int, int] = (50, 150, 150)
    shapes: tuple[Shape, ...] = field(default_factory=tuple)
    scale: float = 0.01
    seed: int = 0

    def to_dict(self):
        return {
            "dims": list(self.dims),
            "shapes": [s.to_dict() for s in self.shapes],
            "scale": self.scale,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            dims=tuple(int(n) for n in d.get("dims", (50, 150, 150))),
            shapes=tuple(Shape.from_dict(s) for s in d.get("shapes", ())),
            scale=float(d.get("scale", 0.01)),
            seed=int(d.get("seed", 0)),
        )


def _rotation(deg):
    # snap so that multiples of 90 degrees give exact 0/1 entries
    t = math.radians(deg)
    return round(math.cos(t), 12), round(math.sin(t), 12)


def _xy_footprint(shape):
    """Corners (or radius) of the shape's cross-section, relative to its center."""
    if shape.kind in ("sphere", "cylinder"):
        return None
    if shape.kind == "box":
        hx, hy = shape.size[1] / 2, shape.size[2] / 2
        pts = np.array([[-hx, -hy], [hx, -hy], [hx, hy], [-hx, hy]])
    else:
        pts = _triangle(shape.size[0])
    c, s = _rotation(shape.rotation)
    rot = np.array([[c, -s], [s, c]])
    return pts @ rot.T


def _triangle(side):
    # equilateral triangle centered on its centroid, one edge parallel to x
    r = side / math.sqrt(3.0)
    angles = np.radians([90.0, 210.0, 330.0])
    return np.stack([r * np.cos(angles), r * np.sin(angles)], axis=1)


def _half_height(shape):
    if shape.kind == "sphere":
        return shape.size[0]
    if shape.kind == "box":
        return shape.size[0] / 2
    return shape.size[1] / 2


def shape_bounds(shape):
    """Axis-aligned bounding box ``(lo, hi)`` in (z, x, y) voxel coordinates."""
    cz, cx, cy = shape.center
    hz = _half_height(shape)
    pts = _xy_footprint(shape)
    if pts is None:
        r = shape.size[0]
        lo_xy, hi_xy = (-r, -r), (r, r)
    else:
        lo_xy, hi_xy = pts.min(axis=0), pts.max(axis=0)
    lo = (cz - hz, cx + lo_xy[0], cy + lo_xy[1])
    hi = (cz + hz, cx + hi_xy[0], cy + hi_xy[1])
    return lo, hi


def validate_spec(spec: PhantomSpec):
    if len(spec.dims) != 3 or any(int(n) < 1 for n in spec.dims):
        raise InvalidSpecError(f"grid dims must be three positive integers, got {spec.dims}")
    if not spec.scale > 0:
        raise InvalidSpecError(f"attenuation scale must be positive, got {spec.scale}")
    for n, shape in enumerate(spec.shapes):
        label = f"shape #{n} ({shape.kind})"
        if shape.kind not in SHAPE_KINDS:
            raise InvalidSpecError(f"{label}: unknown kind, expected one of {SHAPE_KINDS}")
        if len(shape.center) != 3:
            raise InvalidSpecError(f"{label}: center needs 3 coordinates")
        if len(shape.size) != _SIZE_ARITY[shape.kind]:
            raise InvalidSpecError(
                f"{label}: expected {_SIZE_ARITY[shape.kind]} size values, got {len(shape.size)}"
            )
        if any(not s > 0 for s in shape.size):
            raise InvalidSpecError(f"{label}: sizes must be positive")
        lo, hi = shape_bounds(shape)
        for axis, (a, b, nmax) in enumerate(zip(lo, hi, spec.dims)):
            # the grid covers [-0.5, N - 0.5] along each axis
            if a < -0.5 - 1e-9 or b > nmax - 0.5 + 1e-9:
                raise InvalidSpecError(
                    f"{label}: extends outside the grid along axis {'zxy'[axis]} "
                    f"([{a:.2f}, {b:.2f}] not within [-0.5, {nmax - 0.5}])"
                )


def _shape_mask(shape, z, x, y):
    cz, cx, cy = shape.center
    dz, dx, dy = z - cz, x - cx, y - cy
    if shape.kind == "sphere":
        return dz**2 + dx**2 + dy**2 <= shape.size[0] ** 2
    in_z = np.abs(dz) <= _half_height(shape)
    if shape.kind == "cylinder":
        return in_z & (dx**2 + dy**2 <= shape.size[0] ** 2)
    # rotate into the shape's own frame
    c, s = _rotation(shape.rotation)
    u = c * dx + s * dy
    v = -s * dx + c * dy
    if shape.kind == "box":
        return in_z & (np.abs(u) <= shape.size[1] / 2) & (np.abs(v) <= shape.size[2] / 2)
    # prism: inside all three half-planes of the triangle
    tri = _triangle(shape.size[0])
    inside = in_z
    for a in range(3):
        p0, p1 = tri[a], tri[(a + 1) % 3]
        ex, ey = p1 - p0
        cross = ex * (v - p0[1]) - ey * (u - p0[0])
        inside = inside & (cross >= -1e-12)
    return inside


def generate_phantom(spec: PhantomSpec) -> np.ndarray:
    """Rasterize ``spec`` into a float64 ``(Nz, Nx, Ny)`` volume."""
    validate_spec(spec)
    nz, nx, ny = (int(n) for n in spec.dims)
    z, x, y = np.meshgrid(
        np.arange(nz, dtype=float),
        np.arange(nx, dtype=float),
        np.arange(ny, dtype=float),
        indexing="ij",
        sparse=True,
    )
    occupied = np.zeros((nz, nx, ny), dtype=bool)
    for shape in spec.shapes:
        occupied |= _shape_mask(shape, z, x, y)
    return np.where(occupied, float(spec.scale), 0.0)


def preset_spec(name, dims=(50, 150, 150), scale=0.01, seed=0) -> PhantomSpec:
    """Named phantoms with prominent straight edges, scaled to ``dims``.

    ``"blocks"`` holds boxes at a few orientations plus a prism; ``"mixed"``
    adds curved primitives (sphere, cylinder) next to straight-edged ones.
    """
    nz, nx, ny = dims
    zc = (nz - 1) / 2

    def at(fx, fy):
        return (zc, fx * (nx - 1), fy * (ny - 1))

    m = min(nx, ny)
    if name == "blocks":
        shapes = [
            Shape("box", at(0.32, 0.35), (nz, 0.34 * nx, 0.16 * ny), 0.0),
            Shape("box", at(0.70, 0.30), (nz, 0.12 * nx, 0.30 * ny), 0.0),
            Shape("box", at(0.62, 0.70), (nz, 0.30 * m, 0.12 * m), 30.0),
            Shape("prism", at(0.30, 0.72), (0.26 * m, nz), 5.0),
        ]
    elif name == "mixed":
        shapes = [
            Shape("box", at(0.35, 0.32), (nz, 0.30 * m, 0.20 * m), 15.0),
            Shape("prism", at(0.70, 0.34), (0.28 * m, nz), 0.0),
            Shape("cylinder", at(0.35, 0.72), (0.12 * m, nz)),
            Shape("box", at(0.70, 0.72), (nz, 0.10 * m, 0.32 * m), 60.0),
        ]
        if nz >= 3:
            shapes.append(Shape("sphere", at(0.52, 0.52), (min(0.08 * m, (nz - 1) / 2),)))
    else:
        raise InvalidSpecError(f"unknown preset {name!r}; expected 'blocks' or 'mixed'")
    spec = PhantomSpec(dims=tuple(dims), shapes=tuple(shapes), scale=scale, seed=seed)
    validate_spec(spec)
    return spec


def random_spec(dims=(50, 150, 150), n_shapes=4, scale=0.01, seed=0) -> PhantomSpec:
    """Random mix of primitives, all fully inside the grid."""
    rng = np.random.default_rng(seed)
    nz, nx, ny = dims
    m = min(nx, ny)
    shapes = []
    while len(shapes) < n_shapes:
        kind = SHAPE_KINDS[rng.integers(len(SHAPE_KINDS))]
        cx = rng.uniform(0.25, 0.75) * (nx - 1)
        cy = rng.uniform(0.25, 0.75) * (ny - 1)
        cz = (nz - 1) / 2
        rot = float(rng.uniform(0.0, 180.0))
        if kind == "sphere":
            size = (float(rng.uniform(0.05, 0.5) * min(m / 2, nz)),)
        elif kind == "box":
            size = (float(nz), rng.uniform(0.1, 0.35) * m, rng.uniform(0.1, 0.35) * m)
        elif kind == "prism":
            size = (rng.uniform(0.15, 0.35) * m, float(nz))
        else:
            size = (rng.uniform(0.05, 0.15) * m, float(nz))
        shape = Shape(kind, (cz, cx, cy), tuple(float(s) for s in size), rot)
        try:
            validate_spec(PhantomSpec(dims=tuple(dims), shapes=(shape,), scale=scale))
        except InvalidSpecError:
            continue
        shapes.append(shape)
    return PhantomSpec(dims=tuple(dims), shapes=tuple(shapes), scale=scale, seed=seed)
