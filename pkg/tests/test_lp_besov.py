import numpy as np
import pytest

from halfstokes.grid_field import Field, Grid
from halfstokes.lp_besov import (BesovParams, MixedNormParams, annulus_multiplier, besov_norm, besov_norm_array,
                                 build_bank, mixed_norm_array, partition_defect, smooth_step)


def test_smooth_step_limits():
    x = np.linspace(-2, 2, 401)
    h = smooth_step(x)
    assert h[0] == 0.0 and h[-1] == 1.0
    assert np.all(np.diff(h) >= 0)


@pytest.mark.parametrize("n,N", [(2, 16), (2, 64), (3, 16)])
@pytest.mark.parametrize("kind", ["annulus_phi", "separated_Phi"])
def test_partition_of_unity(n, N, kind):
    g = Grid.uniform(n, N)
    assert partition_defect(g, kind) < 1e-12


def test_bank_coverage_matches_partition():
    g = Grid.uniform(2, 32)
    bank = build_bank("annulus_phi", g)
    cov = bank.coverage()[bank.radius > 0]
    assert np.max(np.abs(cov - 1)) < 1e-12


def test_single_mode_norm():
    # cos(4 x_1) on the 2pi x 4pi torus: ||.||_{L^2} = 2 pi; only blocks with phi_j(4) > 0 contribute
    g = Grid.uniform(2, 32, L=2 * np.pi)
    x = g.coords("whole_space")
    a = np.cos(4 * x[0]) * np.ones(g.shape("whole_space"))
    s = 0.5
    res = besov_norm_array(a, g, "whole_space", BesovParams(s, 2.0))
    bank = build_bank("annulus_phi", g)
    expect = sum(2.0 ** (s * j) * annulus_multiplier(4.0, j) for j in bank.indices) * 2 * np.pi
    assert res["norm"] == pytest.approx(float(expect), rel=1e-12)


def test_dyadic_homogeneity():
    # f(2x) on the same torus: every block moves up one index and the L^2 norms are unchanged
    # (exact by Parseval; for p != 2 the discrete L^p sum is only a quadrature)
    g = Grid.uniform(2, 64, L=2 * np.pi)
    x = g.coords("whole_space")
    f = lambda y0, y1: np.cos(y0 + 2 * y1) + 0.5 * np.sin(3 * y0 - y1)
    s = 0.7
    par = BesovParams(s, 2.0)
    n1 = besov_norm_array(f(x[0], x[1]) * np.ones(g.shape("whole_space")), g, "whole_space", par)["norm"]
    n2 = besov_norm_array(f(2 * x[0], 2 * x[1]) * np.ones(g.shape("whole_space")), g, "whole_space", par)["norm"]
    assert n2 == pytest.approx(2 ** s * n1, rel=1e-10)


def test_besov_zero_and_linear_scaling(grid2):
    rng = np.random.default_rng(0)
    a = rng.normal(size=grid2.shape("whole_space"))
    par = BesovParams(0.0, 2.0)
    f = Field(grid2, a)
    assert besov_norm(Field(grid2, 0 * a), par).norm_value == 0.0
    assert besov_norm(Field(grid2, 3 * a), par).norm_value == pytest.approx(3 * besov_norm(f, par).norm_value)


def test_invalid_params():
    with pytest.raises(ValueError):
        BesovParams(0.0, 0.5)
    with pytest.raises(ValueError):
        BesovParams(0.0, 2.0, domain="torus")
    with pytest.raises(ValueError):
        BesovParams(0.9, 2.0, domain="half", check_range=True)


def test_mixed_norm_real_path_matches_complex(grid2):
    rng = np.random.default_rng(3)
    a = rng.normal(size=(grid2.nt, 2) + grid2.shape("boundary"))
    for p in (2.0, 3.0):
        mp = MixedNormParams(0.25, 1.0, "triebel_F", BesovParams(0.2, p, 1.0, "boundary"))
        fast = mixed_norm_array(a, grid2, "boundary", mp, horizon=4.0)
        ref = mixed_norm_array(a + 0j, grid2, "boundary", mp, horizon=4.0)
        assert fast["norm"] == pytest.approx(ref["norm"], rel=1e-12)
        assert fast["tail"] == pytest.approx(ref["tail"], abs=1e-12)


def test_mixed_norm_kinds_finite(grid2):
    t = grid2.times[:, None]
    x = grid2.coords("boundary")[0]
    a = np.exp(-((t - 0.5) / 0.2) ** 2) * np.cos(2 * x)[None]
    for kind in ("triebel_F", "besov_B_tilde", "lebesgue_L_tilde"):
        mp = MixedNormParams(0.25, 1.0, kind, BesovParams(0.0, 2.0, 1.0, "boundary"))
        v = mixed_norm_array(a, grid2, "boundary", mp)["norm"]
        assert np.isfinite(v) and v > 0
