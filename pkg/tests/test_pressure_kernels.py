import numpy as np
import pytest

from halfstokes.pressure_kernels import (build_kernel_slice, calibrate_constant, dominated, integral_bound_check,
                                         integral_closed_form, tail_envelope)


@pytest.mark.parametrize("a,N,lhs", [(1.0, 2.0, np.pi / 2), (0.1, 3.0, 0.19901)])
def test_integral_spot_values(a, N, lhs):
    got, rhs = integral_bound_check(a, N)
    assert got == pytest.approx(lhs, abs=5e-6)
    assert rhs == pytest.approx(4 * a / np.sqrt(1 + a * a))
    assert got <= rhs


def test_integral_quadrature_matches_closed_form():
    rng = np.random.default_rng(0)
    for a, N in zip(10 ** rng.uniform(-2, 2, 10), rng.uniform(2, 8, 10)):
        lhs, _ = integral_bound_check(a, N)
        assert abs(lhs - integral_closed_form(a, N)) < 1e-8


def test_integral_rejects_bad_input():
    with pytest.raises(ValueError):
        integral_bound_check(1.0, 1.0)


def test_tail_envelope_monotone():
    t = np.linspace(-5, 5, 101)
    l1 = np.exp(-np.abs(t)) * (1 + 0.3 * np.cos(7 * t))
    tp, env = tail_envelope(t, l1)
    assert np.all(tp >= 0)
    assert np.all(np.diff(env) <= 0)


def test_kernel_slice_and_frozen_bound():
    sl = build_kernel_slice(4, 1, 0.0)
    assert np.all(np.isfinite(sl.l1_xprime)) and sl.l1_xprime.max() > 0
    C = calibrate_constant(sl)
    # the calibrated constant dominates its own slice with the factor-two margin
    assert dominated(sl, C) == pytest.approx(0.5)


def test_time_slice_requires_time_region():
    with pytest.raises(ValueError):
        build_kernel_slice(1, 1, 0.0)
