import numpy as np
import pytest

from halfstokes.grid_field import Grid, derivative_multiplier
from halfstokes.linear_solvers import (StokesData, boundary_corrector_arrays, heat_neumann_arrays, heat_residuals,
                                       manufactured_stokes, maximal_regularity_ratio, random_stokes_data, relative,
                                       solve_stokes_halfspace, stokes_wholespace_arrays)


@pytest.fixture(scope="module")
def heat_grid():
    return Grid.uniform(2, 32, L=2 * np.pi, Nn=32, Ln=np.pi, t_max=1.0, nt=33)


@pytest.fixture(scope="module")
def stokes_grid():
    return Grid.uniform(2, 32, L=np.pi, Nn=32, Ln=2 * np.pi, t_max=1.0, nt=33)


def test_heat_eigenmode(heat_grid):
    g = heat_grid
    x = g.coords("half_space")
    u0 = np.cos(2 * x[0]) * np.cos(3 * x[1])
    f = np.zeros((g.nt,) + g.shape("half_space"))
    h = np.zeros((g.nt,) + g.shape("boundary"))
    sol = heat_neumann_arrays(u0, f, h, g)
    exact = np.exp(-13 * g.times)[:, None, None] * u0
    assert np.abs(sol["u"] - exact).max() < 1e-6


def test_heat_zero_data(heat_grid):
    g = heat_grid
    z = heat_neumann_arrays(np.zeros(g.shape("half_space")), np.zeros((g.nt,) + g.shape("half_space")),
                            np.zeros((g.nt,) + g.shape("boundary")), g)
    assert all(np.abs(v).max() == 0.0 for v in z.values())


def test_heat_neumann_data_reproduced(heat_grid):
    g = heat_grid
    xb = g.coords("boundary")[0]
    h = np.sin(np.pi * g.times)[:, None] ** 3 * (np.cos(xb) + 0.3)[None]
    u0 = np.zeros(g.shape("half_space"))
    f = np.zeros((g.nt,) + g.shape("half_space"))
    res = heat_residuals(heat_neumann_arrays(u0, f, h, g), f, h, u0, g)
    assert res["neumann"] < 1e-3 and res["pde"] < 1e-3 and res["neumann_jet"] < 1e-12


def test_wholespace_divergence_free(stokes_grid):
    g = stokes_grid
    rng = np.random.default_rng(0)
    f = rng.normal(size=(g.nt, 2) + g.shape("whole_space")) * np.exp(-g.times)[:, None, None, None]
    uh, _ = stokes_wholespace_arrays(np.zeros((2,) + g.shape("whole_space")), f, g)
    pts = g.shape("whole_space")
    d = [derivative_multiplier(k, 1, pts[a]) for a, k in enumerate(g.wavenumbers("whole_space"))]
    div = d[0] * uh[:, 0] + d[1] * uh[:, 1]
    assert np.abs(div).max() < 1e-12 * np.abs(uh).max() * 32


def test_corrector_zero_data(stokes_grid):
    g = stokes_grid
    out = boundary_corrector_arrays(np.zeros((g.nt, 2) + g.shape("boundary")), g)
    assert all(np.abs(v).max() == 0.0 for v in out.values() if isinstance(v, np.ndarray))


def test_manufactured_solution(stokes_grid):
    data, exact = manufactured_stokes(stokes_grid)
    sol = solve_stokes_halfspace(data)
    err = relative(np.linalg.norm(sol.u.values - exact["u"]), np.linalg.norm(exact["u"]))
    assert err < 1e-2


def test_residuals_and_linearity(stokes_grid):
    d1, d2 = random_stokes_data(stokes_grid, seed=0), random_stokes_data(stokes_grid, seed=1)
    s1, s2 = solve_stokes_halfspace(d1), solve_stokes_halfspace(d2)
    for s in (s1, s2):
        assert max(s.diagnostics[k] for k in ("momentum", "divergence", "stress", "initial", "trace")) < 1e-3
    s12 = solve_stokes_halfspace(d1.scaled(2.0) + d2.scaled(-0.5))
    lin = np.abs(s12.u.values - 2.0 * s1.u.values + 0.5 * s2.u.values).max() / np.abs(s12.u.values).max()
    assert lin < 1e-10


def test_zero_data_zero_solution(stokes_grid):
    sol = solve_stokes_halfspace(StokesData.zeros(stokes_grid))
    assert np.abs(sol.u.values).max() == 0.0 and np.abs(sol.p.values).max() == 0.0


def test_maxreg_ratio_scale_invariant(stokes_grid):
    rep = maximal_regularity_ratio([random_stokes_data(stokes_grid, seed=2)], scales=(1.0, 10.0))
    assert rep.finite and rep.details["scale_spread"] < 1e-8


def test_data_validation(stokes_grid):
    g = stokes_grid
    with pytest.raises(ValueError):
        StokesData.from_arrays(g, np.zeros((2,) + g.shape("half_space")), np.zeros((g.nt, 2) + g.shape("half_space")),
                               np.zeros((g.nt,) + g.shape("half_space")), np.zeros((g.nt, 2, 3)))
