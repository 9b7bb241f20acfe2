import numpy as np
import pytest

from halfstokes.grid_field import (ExtensionPolicy, Field, Grid, derivative, extend_array, extend_half_to_whole,
                                   restrict_array, restrict_whole_to_half, to_physical, to_spectral)


def test_grid_rejects_bad_sizes():
    with pytest.raises(ValueError):
        Grid.uniform(2, 24)
    with pytest.raises(ValueError):
        Grid.uniform(4, 16)
    with pytest.raises(ValueError):
        Grid(2, (1.0, -1.0), (16, 16))


def test_shapes(grid2):
    assert grid2.shape("half_space") == (32, 17)
    assert grid2.shape("whole_space") == (32, 32)
    assert grid2.shape("boundary") == (32,)
    assert grid2.dt == pytest.approx(1 / 8)


@pytest.mark.parametrize("parity", ["even", "odd"])
def test_extend_restrict_roundtrip(grid2, parity):
    rng = np.random.default_rng(0)
    a = rng.normal(size=grid2.shape("half_space"))
    if parity == "odd":
        a[..., 0] = 0.0
        a[..., -1] = 0.0
    w = extend_array(a, parity)
    assert w.shape == grid2.shape("whole_space")
    np.testing.assert_array_equal(restrict_array(w), a)


def test_velocity_policy_parities():
    pol = ExtensionPolicy.velocity(3)
    assert pol.parities == ("odd", "odd", "even")
    assert pol.flipped().parities == ("even", "even", "odd")


def test_spectral_derivative_of_trig(grid2):
    x = grid2.coords("whole_space")
    f = Field(grid2, np.sin(3 * x[0]) * np.cos(x[1]) * np.ones(grid2.shape("whole_space")))
    d0 = derivative(f, 0)
    np.testing.assert_allclose(np.real(d0.values), 3 * np.cos(3 * x[0]) * np.cos(x[1]), atol=1e-12)


def test_spectral_roundtrip(grid2):
    rng = np.random.default_rng(1)
    f = Field(grid2, rng.normal(size=grid2.shape("whole_space")))
    back = to_physical(to_spectral(f))
    np.testing.assert_allclose(np.real(back.values), f.values, atol=1e-13)


def test_field_shape_checked(grid2):
    with pytest.raises(ValueError):
        Field(grid2, np.zeros((3, 3)))


def test_field_is_immutable(grid2):
    f = Field(grid2, np.zeros(grid2.shape("whole_space")))
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0


def test_half_whole_roundtrip(grid2):
    rng = np.random.default_rng(2)
    a = rng.normal(size=grid2.shape("half_space"))
    f = Field(grid2, a, domain="half_space")
    w = extend_half_to_whole(f)
    h = restrict_whole_to_half(w)
    np.testing.assert_allclose(h.values, a)
