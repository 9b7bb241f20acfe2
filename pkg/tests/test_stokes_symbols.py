import numpy as np
import pytest

from halfstokes.stokes_symbols import (SymbolSingularity, eval_D, eval_m, m_moduli, max_b_on_boundary, symbol_B,
                                       symbol_D, verify_multiplier_boundedness, verify_region_bounds)


def test_B_is_principal_root():
    rng = np.random.default_rng(0)
    tau, A = rng.normal(size=200) * 10, np.abs(rng.normal(size=200))
    B = symbol_B(tau, A)
    np.testing.assert_allclose(B ** 2, 1j * tau + A ** 2, atol=1e-12)
    assert np.all(B.real >= 0)


def test_D_heat_limit():
    # tau = 0: B = A and D = A^3 + A^3 + 3A^3 - A^3 = 4 A^3
    A = np.array([0.5, 1.0, 3.0])
    np.testing.assert_allclose(symbol_D(0.0, A), 4 * A ** 3)


def test_origin_excluded():
    with pytest.raises(SymbolSingularity):
        eval_D(0.0, np.array([0.0]))
    with pytest.raises(SymbolSingularity):
        eval_m(0.0, np.zeros(2))


def test_m_moduli_match_vector_form():
    rng = np.random.default_rng(1)
    tau = rng.normal(size=50)
    xi = rng.normal(size=(50, 2))
    mp, mn = eval_m(tau, xi)
    ap, an = m_moduli(tau, np.linalg.norm(xi, axis=-1))
    np.testing.assert_allclose(np.linalg.norm(mp, axis=-1), ap, rtol=1e-12)
    np.testing.assert_allclose(np.abs(mn), an, rtol=1e-12)


def test_region_bounds_hold():
    rep = verify_region_bounds(20000, seed=3)
    assert rep["b"].passed and rep["d"].passed
    assert rep["b"].min >= 1 / np.sqrt(2) - 1e-12
    assert rep["d"].min >= 0.5 - 1e-12
    assert max(rep["b"].max, rep["d"].max) <= 20 ** 0.25


def test_b_boundary_maximum_attains_bound():
    # the upper bound is reached at the corner sigma = zeta = 2 of the closed annuli
    assert max_b_on_boundary(501) == pytest.approx(20 ** 0.25, rel=1e-12)


def test_multiplier_sup_finite():
    rep = verify_multiplier_boundedness("time", 5000, seed=0)
    assert np.isfinite(rep["m_prime"].max) and np.isfinite(rep["m_n"].max)
    assert rep["D_scaled"].min > 0


def test_empty_sample_set():
    with pytest.raises(ValueError):
        verify_region_bounds(0)
