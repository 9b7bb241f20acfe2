import numpy as np
import pytest

from halfstokes.grid_field import Grid
from halfstokes.nls_fixedpoint import (FixedPointConfig, HalfSpaceInterpolant, invert_map, pullback_eulerian,
                                       run_fixed_point, scaled_initial_velocity, stress_free_initial_velocity,
                                       system_residuals, zero_jets)


@pytest.fixture(scope="module")
def small():
    return Grid.uniform(2, 16, L=np.pi, Nn=16, Ln=np.pi, t_max=1.0, nt=65)


@pytest.fixture(scope="module")
def converged(small):
    cfg = FixedPointConfig(small, 2.0, 0.05)
    u0 = scaled_initial_velocity(small, 0.05, 2.0, width=1.0)
    return cfg, u0, run_fixed_point(u0, cfg)


def test_config_validation(small):
    with pytest.raises(ValueError):
        FixedPointConfig(small, p=3.5)
    with pytest.raises(ValueError):
        FixedPointConfig(small, eps0=-1.0)


def test_zero_data_gives_zero_trace(small):
    trace, jets = run_fixed_point(np.zeros((2,) + small.shape("half_space")), FixedPointConfig(small))
    assert trace.status == "converged" and trace.x_norms == [0.0]
    assert all(np.abs(v).max() == 0.0 for v in jets.values())


def _fd_defects(Nn):
    g = Grid.uniform(2, 16, L=np.pi, Nn=Nn, Ln=np.pi, t_max=1.0, nt=3)
    u0 = stress_free_initial_velocity(g, width=1.0)
    kx = 2 * np.pi * np.fft.fftfreq(16, np.pi / 16)
    dx = lambda a: np.real(np.fft.ifft(1j * kx[:, None] * np.fft.fft(a, axis=0), axis=0))
    dn = lambda a: np.gradient(a, g.hn, axis=-1, edge_order=2)
    div = dx(u0[0]) + dn(u0[1])
    shear = (dn(u0[0]) + dx(u0[1]))[:, 0]
    return np.abs(div).max(), np.abs(shear).max(), np.abs(dn(u0[1])[:, 0]).max()


def test_initial_velocity_divergence_free_and_stress_free():
    # second-order differences: every defect must fall by about 4 per halving of h_n
    coarse, fine = _fd_defects(256), _fd_defects(512)
    for c, f in zip(coarse, fine):
        assert f < 0.3 * c or f < 1e-10
    assert max(fine) < 1e-3


def test_scaled_initial_velocity_norm(small):
    from halfstokes.linear_solvers import half_besov
    from halfstokes.lp_besov import BesovParams
    u0 = scaled_initial_velocity(small, 0.1, 2.0, width=1.0)
    assert float(half_besov(u0, small, BesovParams(0.0, 2.0, 1.0, "half"))) == pytest.approx(0.1, rel=1e-12)


def test_converges_with_small_ratios(converged):
    cfg, u0, (trace, jets) = converged
    assert trace.status == "converged"
    assert max(trace.ratios[1:]) <= 0.6
    assert trace.contracted(0.6, after=1)
    res = system_residuals(jets, u0, cfg.grid)
    assert res["max"] == pytest.approx(trace.residuals[-1])
    assert res["momentum"] < 1e-3 and res["divergence"] < 1e-3 and res["stress"] < 1e-3


def test_trace_reproducible(converged):
    cfg, u0, (trace, _) = converged
    again, _ = run_fixed_point(u0, cfg)
    assert again.to_dict() == trace.to_dict()


def test_interpolant_exact_on_smooth_profile(small):
    x = small.coords("half_space")
    vals = (np.cos(2 * x[0]) * np.exp(-x[1] ** 2))[None]
    itp = HalfSpaceInterpolant(small, vals)
    for pt in ([0.3, 0.5], [1.7, 1.1]):
        exact = np.cos(2 * pt[0]) * np.exp(-pt[1] ** 2)
        assert itp(np.array(pt))[0] == pytest.approx(exact, abs=1e-5)


def test_newton_inversion_of_linear_map():
    A = np.array([[1.1, 0.2], [-0.1, 0.9]])
    targets = np.array([[0.5, 0.3], [1.0, -0.2]])
    X, res = invert_map(lambda x: A @ x, lambda x: A, targets)
    np.testing.assert_allclose(X @ A.T, targets, atol=1e-12)
    assert np.max(res) < 1e-12


def test_pullback_matches_lagrangian(converged, small):
    cfg, u0, (trace, jets) = converged
    pb = pullback_eulerian(jets, small, samples=12, seed=0)
    assert pb["inversion_residual"] < 1e-10
    assert pb["ratio"] < 10


def test_zero_jets_shapes(small):
    z = zero_jets(small)
    assert z["u"].shape == (small.nt, 2) + small.shape("half_space")
