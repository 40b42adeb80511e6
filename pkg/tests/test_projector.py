import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from edgeview.errors import GeometryError, InvalidInputError
from edgeview.projector import (
    Projection,
    ProjectionGeometry,
    back_project,
    back_project_many,
    forward_project,
    forward_project_many,
)

angles_st = st.floats(0.0, 180.0, exclude_max=True, allow_nan=False)


def test_detector_auto_sizing():
    g = ProjectionGeometry.for_image(150, 150)
    base = math.ceil(math.hypot(150, 150)) + 2
    assert g.n_channels in (base, base + 1)
    assert (g.n_channels - 150) % 2 == 0


def test_zero_degrees_sums_along_y(backend, rng):
    vol = rng.random((3, 20, 24))
    g = ProjectionGeometry.for_image(20, 24)
    sino = forward_project(vol, 0.0, g).values
    pad = (g.n_channels - 20) // 2
    assert np.allclose(sino[:, pad:pad + 20], vol.sum(axis=2))
    assert np.allclose(np.delete(sino, np.s_[pad:pad + 20], axis=1), 0.0)


def test_ninety_degrees_sums_along_x(backend, rng):
    vol = rng.random((2, 16, 16))
    g = ProjectionGeometry.for_image(16, 16)
    sino = forward_project(vol, 90.0, g).values
    pad = (g.n_channels - 16) // 2
    assert np.allclose(sino[:, pad:pad + 16], vol.sum(axis=1))


@given(angle=angles_st)
def test_mass_is_preserved_at_every_angle(angle):
    vol = np.zeros((1, 31, 31))
    vol[0, 7, 22] = 1.0
    vol[0, 15, 15] = 2.0
    assert forward_project(vol, angle).values.sum() == pytest.approx(3.0, rel=1e-12)


@given(
    x=arrays(np.float64, (2, 12, 12), elements=st.floats(-1, 1)),
    y=arrays(np.float64, (1, 2, 20), elements=st.floats(-1, 1)),
    angle=angles_st,
)
def test_adjoint_identity(x, y, angle):
    g = ProjectionGeometry.for_image(12, 12)
    assert g.n_channels == 20
    lhs = float(np.vdot(forward_project_many(x, [angle], g), y))
    rhs = float(np.vdot(x, back_project_many(y, [angle], g, x.shape)))
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)


def test_linearity(backend, rng):
    x, z = rng.random((2, 2, 20, 20))
    angles = [0.0, 33.3, 91.0, 179.5]
    ax, az = forward_project_many(x, angles), forward_project_many(z, angles)
    assert np.allclose(forward_project_many(2.5 * x - 0.7 * z, angles), 2.5 * ax - 0.7 * az)


@pytest.mark.parametrize("theta", [0.0, 17.0, 45.0, 90.0, 123.5, 170.0])
def test_quarter_turn_shifts_angle(backend, rng, theta):
    vol = rng.random((2, 24, 24))
    turned = np.rot90(vol, 1, axes=(1, 2))
    g = ProjectionGeometry.for_image(24, 24)
    a = forward_project(turned, theta, g).values
    b = forward_project(vol, (theta - 90.0) % 180.0, g).values
    if theta < 90:
        # theta - 90 wraps through 180, which flips the detector axis
        b = b[:, ::-1]
    assert np.allclose(a, b, atol=1e-10)


def test_slices_are_independent(rng):
    vol = rng.random((3, 16, 16))
    full = forward_project_many(vol, [10.0, 80.0])
    for k in range(3):
        assert np.array_equal(full[:, k], forward_project_many(vol[k:k + 1], [10.0, 80.0])[:, 0])


def test_single_angle_wrappers_match_batch(rng):
    vol = rng.random((2, 10, 10))
    g = ProjectionGeometry.for_image(10, 10)
    p = forward_project(vol, 40.0, g)
    assert np.array_equal(p.values, forward_project_many(vol, [40.0], g)[0])
    bp = back_project(p, g, vol.shape)
    assert np.array_equal(bp, back_project_many(p.values[None], [40.0], g, vol.shape))


@pytest.mark.parametrize("bad", [-1.0, 180.0, float("nan"), 400.0])
def test_angles_outside_half_circle_rejected(bad):
    with pytest.raises(InvalidInputError):
        forward_project(np.zeros((1, 4, 4)), bad)


def test_geometry_mismatch_rejected():
    g = ProjectionGeometry.for_image(10, 10)
    with pytest.raises(GeometryError):
        forward_project_many(np.zeros((1, 12, 10)), [0.0], g)
    with pytest.raises(GeometryError):
        back_project_many(np.zeros((1, 1, g.n_channels + 1)), [0.0], g, (1, 10, 10))
    with pytest.raises(GeometryError):
        back_project_many(np.zeros((2, 1, g.n_channels)), [0.0], g, (1, 10, 10))


def test_nonfinite_projection_rejected():
    g = ProjectionGeometry.for_image(4, 4)
    vals = np.full((1, g.n_channels), np.nan)
    with pytest.raises(InvalidInputError):
        back_project(Projection(0.0, vals), g, (1, 4, 4))


def test_2d_input_is_one_slice(rng):
    img = rng.random((8, 8))
    assert forward_project(img, 30.0).values.shape[0] == 1
