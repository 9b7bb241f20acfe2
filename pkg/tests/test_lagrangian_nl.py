import numpy as np
import pytest

from halfstokes.experiments import analytic_cofactor_state
from halfstokes.grid_field import Field
from halfstokes.lagrangian_nl import (FlowState, SingularJacobianError, assemble_nonlinear_terms, cofactor_matrix,
                                      det_poly, integrate_flow_map, linear_velocity, random_divfree_torus,
                                      random_lagrangian_state, random_pressure_torus, shear_flow_state,
                                      verify_cofactor_divfree, verify_div_curl_structure, verify_dual_forms)


@pytest.mark.parametrize("n", [2, 3])
def test_det_and_cofactor_polynomials(n):
    rng = np.random.default_rng(n)
    M = rng.normal(size=(5, n, n))
    np.testing.assert_allclose(det_poly(M), np.linalg.det(M), rtol=1e-12)
    cof = cofactor_matrix(M)
    # cof J = det(J) J^{-T}
    ref = np.linalg.det(M)[:, None, None] * np.swapaxes(np.linalg.inv(M), -1, -2)
    np.testing.assert_allclose(cof, ref, rtol=1e-10, atol=1e-12)


def test_cofactor_rows_divergence_free(grid2, grid3):
    for g in (grid2, grid3):
        rep = verify_cofactor_divfree(random_lagrangian_state(g, seed=1))
        assert rep.passed and rep.max_violation < 1e-8


def test_analytic_cofactor_exact(grid2):
    assert verify_cofactor_divfree(analytic_cofactor_state(grid2)).max_violation < 1e-13


def test_smallness_guard(grid2):
    with pytest.raises(ValueError, match="smallness"):
        random_lagrangian_state(grid2, seed=0, scale=5.0)


def test_det_guard(grid2):
    st = random_lagrangian_state(grid2, seed=0)
    bad = FlowState(grid2, st.u, st.Du, st.disp_grad, smallness=np.inf)
    bad.disp_grad[...] = 0.0
    bad.disp_grad[:, 0, 0] = -0.7  # J_00 = 0.3, det = 0.3
    bad.__dict__.pop("det", None)
    with pytest.raises(SingularJacobianError):
        bad.check_det()


def test_dual_forms_agree(grid2):
    st = random_lagrangian_state(grid2, seed=3)
    p = random_pressure_torus(grid2, 3)
    res = verify_dual_forms(st, p)
    assert max(res[k] for k in ("F_u", "F_p", "G_div", "G_div_bar", "H_u", "H_p")) < 1e-10


def test_volume_preserving_state(grid2):
    st = shear_flow_state(grid2, seed=0)
    res = verify_dual_forms(st, random_pressure_torus(grid2, 0))
    assert res["det_defect"] < 1e-12
    assert res["G_div_vs_div_bar"] < 1e-8


def test_terms_vanish_without_deformation(grid2):
    st = random_lagrangian_state(grid2, seed=0, scale=1e-300)
    t = assemble_nonlinear_terms(st, random_pressure_torus(grid2, 0))
    for name in ("F_p", "G_div", "H_u", "H_p"):
        assert np.abs(getattr(t, name)).max() < 1e-250


def test_div_curl_structure(grid2):
    rep = verify_div_curl_structure(random_lagrangian_state(grid2, seed=2), random_pressure_torus(grid2, 2))
    assert rep.passed


def test_rigid_rotation_flow_map():
    x0 = np.array([[1.0, 0.0], [0.2, -0.7]])
    tr = integrate_flow_map(linear_velocity([[0, -1], [1, 0]]), x0, 1.0, 64)
    R = np.array([[np.cos(1), -np.sin(1)], [np.sin(1), np.cos(1)]])
    np.testing.assert_allclose(tr.positions[-1], x0 @ R.T, atol=1e-8)
    np.testing.assert_allclose(tr.det, 1.0, atol=1e-9)


def test_divfree_flow_map_volume(grid2):
    u = random_divfree_torus(grid2, seed=4)
    x0 = np.random.default_rng(0).uniform(0, 3, size=(6, 2))
    tr = integrate_flow_map(Field(grid2, u, "vector", "physical", "whole_space"), x0, 1.0, 64)
    assert np.abs(tr.det[-1] - 1).max() < 1e-6
