import numpy as np
import pytest

from halfstokes.bilinear_para import (BILINEAR_KINDS, bony_decompose, divfree_curlfree_pair, generate_ensemble,
                                      random_band_limited, structure_defects, verify_bilinear)


def test_bony_resummation(grid2):
    f = random_band_limited(grid2, seed=0)
    g = random_band_limited(grid2, seed=1)
    pp = bony_decompose(f, g, grid=grid2, domain="whole_space")
    assert pp.truncation["resummation"] < 1e-10
    np.testing.assert_allclose(pp.total(), f * g, atol=1e-10)


def test_bony_constant_factor(grid2):
    # a constant f has only the zero mode: the whole product sits in the low-high piece
    f = np.full(grid2.shape("whole_space"), 2.0)
    g = random_band_limited(grid2, seed=5)
    pp = bony_decompose(f, g, grid=grid2, domain="whole_space")
    np.testing.assert_allclose(pp.low_high, 2.0 * g, atol=1e-12)
    assert np.abs(pp.high_low).max() < 1e-12 and np.abs(pp.high_high).max() < 1e-12


def test_arrays_need_grid():
    with pytest.raises(ValueError):
        bony_decompose(np.zeros(4), np.zeros(4))


def test_div_curl_pair_structure(grid2):
    f, g = divfree_curlfree_pair(grid2, seed=0)
    d = structure_defects(f, g, grid2)
    assert d["div_f"] < 1e-10 and d["curl_g"] < 1e-10


@pytest.mark.parametrize("kind", BILINEAR_KINDS)
def test_ratios_finite(grid2, kind):
    rep = verify_bilinear(kind, generate_ensemble(kind, grid2, 2, seed=0), grid=grid2)
    assert rep.finite and rep.max_ratio > 0


def test_unknown_kind(grid2):
    with pytest.raises(ValueError):
        generate_ensemble("nope", grid2)
