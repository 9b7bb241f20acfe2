"""Lagrangian flow map, Jacobian and cofactor machinery, nonlinear terms.

Index conventions
-----------------
``Du[i, j] = d_j u_i`` and ``D2u[i, j, l] = d_j d_l u_i``; the displacement
gradient is ``d = int_0^t Du ds`` and ``J = I + d``.  The gradient matrix
used by the stress and Laplacian terms is ``grad u = Du^T`` (so
``(grad u)[k, j] = d_k u_j``) and ``div`` of a matrix contracts its first
index.  The outward normal is ``nu = -e_n``.

Arrays carry time first, then component axes, then the spatial axes of
their domain.  States on the doubled torus (``whole_space``) get spectral
derivatives; half-space states are built from solver jets.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .grid_field import ExtensionPolicy, Field, Grid, derivative_multiplier, extend_array
from .timeint import cumulative_integral, time_derivative

SMALLNESS = 0.3
DET_MIN = 0.5


class SingularJacobianError(ValueError):
    """Raised when det J drops below the smallness-regime floor."""


# pointwise linear algebra ------------------------------------------------------------


def _to_pw(a: np.ndarray, nidx: int) -> np.ndarray:
    """Move the ``nidx`` component axes (right after time) to the end."""
    return np.moveaxis(a, tuple(range(1, 1 + nidx)), tuple(range(-nidx, 0)))


def _from_pw(a: np.ndarray, nidx: int) -> np.ndarray:
    return np.moveaxis(a, tuple(range(-nidx, 0)), tuple(range(1, 1 + nidx)))


def _perm_sign(perm) -> int:
    sign, seen = 1, list(perm)
    for i in range(len(seen)):
        while seen[i] != i:
            j = seen[i]
            seen[i], seen[j] = seen[j], seen[i]
            sign = -sign
    return sign


def det_poly(M: np.ndarray) -> np.ndarray:
    """Leibniz expansion of the determinant over the last two axes."""
    m = M.shape[-1]
    if m == 0:
        return np.ones(M.shape[:-2])
    out = np.zeros(M.shape[:-2], dtype=M.dtype)
    for perm in itertools.permutations(range(m)):
        term = _perm_sign(perm) * np.ones(M.shape[:-2], dtype=M.dtype)
        for r, c in enumerate(perm):
            term = term * M[..., r, c]
        out = out + term
    return out


def cofactor_matrix(M: np.ndarray) -> np.ndarray:
    """``cof(M)[k, j] = (-1)^{k+j} det(M without row k and column j)``."""
    m = M.shape[-1]
    out = np.empty_like(M)
    for k in range(m):
        for j in range(m):
            rows = [r for r in range(m) if r != k]
            cols = [c for c in range(m) if c != j]
            out[..., k, j] = (-1) ** (k + j) * det_poly(M[..., rows, :][..., :, cols])
    return out


def principal_minor_sum(d: np.ndarray, order: int) -> np.ndarray:
    """Sum of the ``order``-by-``order`` principal minors of ``d``."""
    n = d.shape[-1]
    out = np.zeros(d.shape[:-2], dtype=d.dtype)
    for idx in itertools.combinations(range(n), order):
        sub = d[..., list(idx), :][..., :, list(idx)]
        out = out + det_poly(sub)
    return out


def det_expansion(d: np.ndarray) -> np.ndarray:
    """``det(I + d) = 1 + tr d + ...`` as the sum of all principal minors."""
    return 1.0 + sum(principal_minor_sum(d, k) for k in range(1, d.shape[-1] + 1))


# spectral helpers on the torus -----------------------------------------------------------


def _torus_diff(a: np.ndarray, grid: Grid, *dirs: int) -> np.ndarray:
    n = grid.n
    axes = tuple(range(-n, 0))
    k = grid.wavenumbers("whole_space")
    pts = grid.shape("whole_space")
    mult = 1.0
    for a_ in dirs:
        mult = mult * derivative_multiplier(k[a_], 1, pts[a_])
    out = np.fft.ifftn(np.fft.fftn(a, axes=axes) * mult, axes=axes)
    return np.real(out) if np.isrealobj(a) else out


def torus_jacobian(u: np.ndarray, grid: Grid) -> np.ndarray:
    """``Du[.., i, j] = d_j u_i`` for ``u (nt, n, *S)``; returns ``(nt, n, n, *S)``."""
    return np.stack([_torus_diff(u, grid, j) for j in range(grid.n)], axis=2)


def torus_hessian(u: np.ndarray, grid: Grid) -> np.ndarray:
    n = grid.n
    out = np.empty(u.shape[:2] + (n, n) + u.shape[2:], dtype=u.dtype)
    for j in range(n):
        for l in range(j, n):
            out[:, :, j, l] = out[:, :, l, j] = _torus_diff(u, grid, j, l)
    return out


def torus_divergence(A: np.ndarray, grid: Grid, axis: int = 1) -> np.ndarray:
    """Contract component ``axis`` of ``A`` with the gradient."""
    comps = np.moveaxis(A, axis, 0)
    return sum(_torus_diff(comps[j], grid, j) for j in range(grid.n))


# flow state ---------------------------------------------------------------------------


@dataclass(eq=False)
class FlowState:
    """Lagrangian velocity with its displacement gradient ``d = int_0^t Du``.

    ``jac = I + disp_grad``; the inverse, determinant and sub-cofactors are
    derived on demand.  Construction refuses states outside the smallness
    regime ``max |d_ij| <= 0.3``.
    """

    grid: Grid
    u: np.ndarray
    Du: np.ndarray
    disp_grad: np.ndarray
    domain: str = "whole_space"
    D2u: np.ndarray | None = None
    disp_hess: np.ndarray | None = None
    ut: np.ndarray | None = None
    smallness: float = SMALLNESS

    def __post_init__(self) -> None:
        n = self.grid.n
        S = self.grid.shape(self.domain)
        nt = self.u.shape[0]
        if self.u.shape != (nt, n) + S or self.Du.shape != (nt, n, n) + S:
            raise ValueError("u and Du shapes do not match the grid")
        if self.disp_grad.shape != self.Du.shape:
            raise ValueError("disp_grad must have the shape of Du")
        size = float(np.max(np.abs(self.disp_grad))) if self.disp_grad.size else 0.0
        if size > self.smallness:
            raise ValueError(f"max |disp_grad| = {size:.3f} exceeds the smallness bound {self.smallness}")

    # constructors
    @classmethod
    def from_velocity(cls, grid: Grid, u: np.ndarray, second: bool = True, **kw) -> "FlowState":
        """Torus state: spectral derivatives of ``u`` and trapezoid accumulation."""
        u = np.asarray(u, float)
        Du = torus_jacobian(u, grid)
        D2u = torus_hessian(u, grid) if second else None
        d = cumulative_integral(Du, grid.dt, axis=0)
        dh = cumulative_integral(D2u, grid.dt, axis=0) if second else None
        return cls(grid, u, Du, d, "whole_space", D2u, dh, time_derivative(u, grid.dt), **kw)

    @classmethod
    def from_displacement(cls, grid: Grid, X: np.ndarray, Xt: np.ndarray, **kw) -> "FlowState":
        """Torus state from a displacement ``X = y - x`` and its time derivative.

        The displacement gradient is then exact (``d = DX``), which keeps
        ``det J = 1`` for volume-preserving maps.
        """
        X, u = np.asarray(X, float), np.asarray(Xt, float)
        d = torus_jacobian(X, grid)
        return cls(grid, u, torus_jacobian(u, grid), d, "whole_space", torus_hessian(u, grid),
                   torus_hessian(X, grid), time_derivative(u, grid.dt), **kw)

    @classmethod
    def from_jets(cls, grid: Grid, jets: dict, **kw) -> "FlowState":
        """Half-space state from solver jets ``u, Du, D2u, ut``."""
        Du = np.asarray(jets["Du"])
        D2u = jets.get("D2u")
        d = cumulative_integral(Du, grid.dt, axis=0)
        dh = cumulative_integral(D2u, grid.dt, axis=0) if D2u is not None else None
        return cls(grid, np.asarray(jets["u"]), Du, d, "half_space", D2u, dh, jets.get("ut"), **kw)

    # derived matrices (pointwise layout: matrix axes last)
    @cached_property
    def jac_pw(self) -> np.ndarray:
        return _to_pw(self.disp_grad, 2) + np.eye(self.grid.n)

    @cached_property
    def jac(self) -> np.ndarray:
        return _from_pw(self.jac_pw, 2)

    @cached_property
    def det(self) -> np.ndarray:
        return np.linalg.det(self.jac_pw)

    def check_det(self) -> None:
        low = float(np.min(self.det))
        if low < DET_MIN:
            raise SingularJacobianError(f"det J = {low:.3f} below {DET_MIN} (outside the smallness regime)")

    @cached_property
    def jac_inv_pw(self) -> np.ndarray:
        self.check_det()
        return np.linalg.inv(self.jac_pw)

    @cached_property
    def jac_inv(self) -> np.ndarray:
        return _from_pw(self.jac_inv_pw, 2)

    def cofactors(self, ell: int) -> dict:
        """All sub-cofactor matrices of order ``ell``, keyed by (rows, cols)."""
        return {(r, c): cofactor(self, ell, r, c)
                for r in itertools.combinations(range(self.grid.n), ell)
                for c in itertools.combinations(range(self.grid.n), ell)}

    @property
    def policy(self) -> ExtensionPolicy | None:
        return ExtensionPolicy.velocity(self.grid.n) if self.domain == "half_space" else None

    def velocity_field(self) -> Field:
        return Field(self.grid, self.u, "vector", "physical", self.domain, self.policy, True)

    def boundary_slice(self, a: np.ndarray) -> np.ndarray:
        """Values on ``x_n = 0`` (first normal sample in both layouts)."""
        return a[..., 0]


def jacobian_inverse(state: FlowState, method: str = "matrix") -> np.ndarray:
    """``J^{-1}`` as ``(nt, n, n, *S)``: LU inverse or adjugate over determinant."""
    if method == "matrix":
        return state.jac_inv
    if method == "polynomial":
        state.check_det()
        J = state.jac_pw
        adj = np.swapaxes(cofactor_matrix(J), -1, -2)
        return _from_pw(adj / det_poly(J)[..., None, None], 2)
    raise ValueError(f"unknown inverse method {method!r}")


def cofactor(state: FlowState, ell: int, rows, cols) -> np.ndarray:
    """Cofactor matrix of the ``ell x ell`` submatrix ``J[rows, cols]``.

    Returned as ``(nt, ell, ell, *S)``; for ``ell = 1`` it is the constant 1.
    """
    rows, cols = list(rows), list(cols)
    if not (len(rows) == len(cols) == ell) or not 1 <= ell <= state.grid.n:
        raise ValueError("rows and cols must list ell distinct indices")
    sub = state.jac_pw[..., rows, :][..., :, cols]
    if ell == 1:
        return _from_pw(np.ones_like(sub), 2)
    return _from_pw(cofactor_matrix(sub), 2)


@dataclass
class CheckReport:
    check_name: str
    max_violation: float
    tolerance: float
    samples: int
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.max_violation < self.tolerance)

    def to_dict(self) -> dict:
        return {"check_name": self.check_name, "max_violation": float(self.max_violation),
                "tolerance": self.tolerance, "pass": self.passed, "samples": self.samples,
                "details": self.details}


def _torus_state(state_or_u, grid: Grid | None) -> FlowState:
    """A torus state from a FlowState, a velocity Field, or a raw torus array."""
    if isinstance(state_or_u, FlowState):
        if state_or_u.domain == "whole_space":
            return state_or_u
        grid = state_or_u.grid
        u = state_or_u.u
        pol = ExtensionPolicy.velocity(grid.n)
        ext = np.stack([extend_array(u[:, i], p) for i, p in enumerate(pol.parities)], axis=1)
        return FlowState.from_velocity(grid, ext, second=False)
    if isinstance(state_or_u, Field):
        f = state_or_u
        vals = np.asarray(f.values)
        if f.domain == "half_space":
            vals = np.stack([extend_array(vals[:, i], p) for i, p in enumerate(f.policy.parities)], axis=1)
        return FlowState.from_velocity(f.grid, vals, second=False)
    if grid is None:
        raise ValueError("a grid is required for raw arrays")
    return FlowState.from_velocity(grid, np.asarray(state_or_u), second=False)


def verify_cofactor_divfree(u_lagrangian, ell_range=None, grid: Grid | None = None,
                            tolerance: float = 1e-8) -> CheckReport:
    """Row divergences of every sub-cofactor of ``J`` (spectral on the torus).

    For rows ``sigma`` and columns ``tau`` of order ``ell`` the identity is
    ``sum_j d_{tau_j} cof(J[sigma, tau])_{kj} = 0`` for each ``k``.  The
    violation is measured relative to the largest single term.
    """
    st = _torus_state(u_lagrangian, grid)
    g = st.grid
    ells = list(ell_range) if ell_range is not None else list(range(1, g.n + 1))
    worst, samples, per_ell = 0.0, 0, {}
    for ell in ells:
        divs, scale = [], 0.0
        for (rows, cols), C in st.cofactors(ell).items():
            for k in range(ell):
                terms = [_torus_diff(C[:, k, j], g, cols[j]) for j in range(ell)]
                scale = max(scale, max(float(np.max(np.abs(t))) for t in terms))
                divs.append(float(np.max(np.abs(sum(terms)))))
                samples += 1
        # constant cofactors (ell = 1) have identically vanishing terms
        per_ell[ell] = max(divs) / scale if scale > 0 else 0.0
        worst = max(worst, per_ell[ell])
    return CheckReport("cofactor_divfree", worst, tolerance, samples, {"per_ell": per_ell})


# nonlinear terms -------------------------------------------------------------


@dataclass(eq=False)
class NonlinearTerms:
    """The five perturbation terms of the Lagrangian system (arrays, time first).

    ``F_u, F_p (nt, n, *S)``, ``G_div (nt, *S)``, ``G_div_bar (nt, n, *S)``,
    ``H_u, H_p (nt, n, *S')`` on ``x_n = 0``; optional ``grad_G_div`` and
    ``H_u_bulk, H_p_bulk`` (the boundary expressions at every point).
    """

    F_u: np.ndarray | None
    F_p: np.ndarray
    G_div: np.ndarray
    G_div_bar: np.ndarray
    H_u: np.ndarray
    H_p: np.ndarray
    grad_G_div: np.ndarray | None = None
    H_u_bulk: np.ndarray | None = None
    H_p_bulk: np.ndarray | None = None
    grid: Grid | None = None
    domain: str = "whole_space"

    def fields(self) -> dict:
        g, dom = self.grid, self.domain
        pol = ExtensionPolicy.velocity(g.n) if dom == "half_space" else None
        out = {"F_p": Field(g, self.F_p, "vector", "physical", dom, pol, True),
               "G_div": Field(g, self.G_div, "scalar", "physical", dom, None, True),
               "G_div_bar": Field(g, self.G_div_bar, "vector", "physical", dom, pol, True),
               "H_u": Field(g, self.H_u, "vector", "physical", "boundary", None, True),
               "H_p": Field(g, self.H_p, "vector", "physical", "boundary", None, True)}
        if self.F_u is not None:
            out["F_u"] = Field(g, self.F_u, "vector", "physical", dom, pol, True)
        return out


def _grad_p(state: FlowState, p: np.ndarray, grad_p: np.ndarray | None) -> np.ndarray:
    if grad_p is not None:
        return np.asarray(grad_p)
    if state.domain != "whole_space":
        raise ValueError("half-space states need grad_p from the solver jets")
    return np.stack([_torus_diff(p, state.grid, j) for j in range(state.grid.n)], axis=1)


def _stress_terms(Ji: np.ndarray, Du: np.ndarray, p: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise boundary expressions (pointwise layout, vector last)."""
    B = Ji - np.eye(n)
    nu = np.zeros(n)
    nu[-1] = -1.0
    JiT, BT, DuT = np.swapaxes(Ji, -1, -2), np.swapaxes(B, -1, -2), np.swapaxes(Du, -1, -2)
    first = JiT @ DuT + Du @ Ji
    second_ = BT @ DuT + Du @ B
    Hu = -np.einsum("...ab,...bc,c->...a", first, BT, nu) - np.einsum("...ab,b->...a", second_, nu)
    Hp = p[..., None] * np.einsum("...ab,b->...a", BT, nu)
    return Hu, Hp


def assemble_nonlinear_terms(state: FlowState, p: np.ndarray, grad_p: np.ndarray | None = None,
                             method: str = "matrix", with_gradient: bool = False) -> NonlinearTerms:
    """Evaluate ``F_u, F_p, G_div, G_div_bar, H_u, H_p`` from the jets of ``state``.

    ``method='matrix'`` uses the LU inverse of ``J``; ``'polynomial'`` the
    explicit adjugate and determinant polynomials in ``d``.  ``F_u`` needs
    ``D2u`` and ``disp_hess`` and is skipped without them.
    """
    n = state.grid.n
    p = np.asarray(p)
    gp = _to_pw(_grad_p(state, p, grad_p), 1)
    Ji = _to_pw(jacobian_inverse(state, method), 2)
    I = np.eye(n)
    B = Ji - I
    Du = _to_pw(state.Du, 2)
    # G_div = -tr(B^T grad u) = -sum_{kj} B_kj d_k u_j
    G = -np.einsum("...kj,...jk->...", B, Du)
    Fp = -np.einsum("...jk,...j->...k", B, gp)
    # polynomial divergence form: -(adj J - I) u, with adj J = det J * J^{-1}
    det = det_poly(state.jac_pw) if method == "polynomial" else state.det
    adj = Ji * det[..., None, None]
    u = _to_pw(state.u, 1)
    Gbar = -np.einsum("...kj,...j->...k", adj - I, u)
    Fu, gradG = None, None
    if state.D2u is not None and state.disp_hess is not None:
        D2 = _to_pw(state.D2u, 3)           # [i, j, l] = d_j d_l u_i
        dJ = _to_pw(state.disp_hess, 3)     # [a, b, l] = d_l J_ab
        dJi = -np.einsum("...ab,...bcl,...cd->...adl", Ji, dJ, Ji)  # d_l (J^{-1})_ad
        M = Ji @ np.swapaxes(Ji, -1, -2)
        dM = np.einsum("...abl,...cb->...acl", dJi, Ji) + np.einsum("...ab,...cbl->...acl", Ji, dJi)
        # F_u_j = sum_{lk} (M - I)_lk d_l d_k u_j + sum_{lk} d_l M_lk d_k u_j
        Fu = np.einsum("...lk,...jkl->...j", M - I, D2) + np.einsum("...lkl,...jk->...j", dM, Du)
        # d_m G = -sum_{kj} (d_m B_kj d_k u_j + B_kj d_m d_k u_j)
        gradG = -(np.einsum("...kjm,...jk->...m", dJi, Du) + np.einsum("...kj,...jkm->...m", B, D2))
    Hu_b, Hp_b = _stress_terms(Ji, Du, p, n)
    to_v = lambda a: _from_pw(a, 1)
    terms = NonlinearTerms(
        to_v(Fu) if Fu is not None else None, to_v(Fp), G, to_v(Gbar),
        state.boundary_slice(to_v(Hu_b)), state.boundary_slice(to_v(Hp_b)),
        to_v(gradG) if gradG is not None else None, to_v(Hu_b), to_v(Hp_b),
        state.grid, state.domain)
    return terms


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(b))))
    return float(np.max(np.abs(a - b))) / scale if scale > 0 else 0.0


def verify_dual_forms(state: FlowState, p: np.ndarray, grad_p: np.ndarray | None = None) -> dict:
    """Agreement of the matrix-product and polynomial evaluations.

    On torus states also compares ``G_div`` with ``div G_div_bar`` and
    ``F_u`` with the spectral divergence of ``J^{-1} J^{-T} grad u - grad u``;
    both need a volume-preserving state.
    """
    a = assemble_nonlinear_terms(state, p, grad_p, "matrix")
    b = assemble_nonlinear_terms(state, p, grad_p, "polynomial")
    out = {}
    for name in ("F_u", "F_p", "G_div", "G_div_bar", "H_u", "H_p"):
        x, y = getattr(a, name), getattr(b, name)
        if x is not None:
            out[name] = _rel(x, y)
    out["det_defect"] = float(np.max(np.abs(state.det - 1.0)))
    out["det_expansion"] = _rel(det_expansion(_to_pw(state.disp_grad, 2)), state.det)
    if state.domain == "whole_space":
        g = state.grid
        out["G_div_vs_div_bar"] = _rel(a.G_div, torus_divergence(a.G_div_bar, g))
        if a.F_u is not None:
            Ji = state.jac_inv_pw
            gradu = np.swapaxes(_to_pw(state.Du, 2), -1, -2)
            A = (Ji @ np.swapaxes(Ji, -1, -2)) @ gradu - gradu
            out["F_u_vs_div_form"] = _rel(a.F_u, torus_divergence(_from_pw(A, 2), g))
    return out


def verify_div_curl_structure(state: FlowState, p: np.ndarray, grad_p: np.ndarray | None = None,
                              tolerance: float = 1e-8) -> CheckReport:
    """Split ``F_p`` and ``G_div`` into rot-free times div-free factors.

    Rows of ``I + d`` and ``grad p`` must be curl-free, rows of ``cof J``
    divergence-free, and the reassembly
    ``F_p,k = d_k p - det^{-1} sum_j cof_kj d_j p`` (likewise for the trace
    in ``G_div``) must reproduce the assembled terms.
    """
    st = state if state.domain == "whole_space" else _torus_state(state, None)
    g = st.grid
    n = g.n
    res = {}
    curl_rows = 0.0
    for k in range(n):
        for a_ in range(n):
            for b_ in range(a_ + 1, n):
                c = _torus_diff(st.disp_grad[:, k, b_], g, a_) - _torus_diff(st.disp_grad[:, k, a_], g, b_)
                scale = float(np.max(np.abs(_torus_diff(st.disp_grad[:, k, b_], g, a_)))) or 1.0
                curl_rows = max(curl_rows, float(np.max(np.abs(c))) / scale)
    res["curl_d_rows"] = curl_rows
    if state.domain == "whole_space":
        gp = _grad_p(state, p, grad_p)
        cp = 0.0
        for a_ in range(n):
            for b_ in range(a_ + 1, n):
                c = _torus_diff(gp[:, b_], g, a_) - _torus_diff(gp[:, a_], g, b_)
                cp = max(cp, float(np.max(np.abs(c))) / (float(np.max(np.abs(gp))) or 1.0))
        res["curl_grad_p"] = cp
    res["div_cof_rows"] = verify_cofactor_divfree(st, [n]).max_violation
    # reassembly on the input state
    terms = assemble_nonlinear_terms(state, p, grad_p)
    cof = cofactor_matrix(state.jac_pw)
    inv_det = 1.0 / state.det
    gpp = _to_pw(_grad_p(state, p, grad_p), 1)
    Fp = gpp - inv_det[..., None] * np.einsum("...kj,...j->...k", cof, gpp)
    res["F_p_reassembly"] = _rel(_from_pw(Fp, 1), terms.F_p)
    Du = _to_pw(state.Du, 2)
    # G_div = div u - det^{-1} sum_j cof_jk d_k u_j  (row j of cof against grad u_j)
    Gr = np.einsum("...jj->...", Du) - inv_det * np.einsum("...jk,...jk->...", cof, Du)
    res["G_div_reassembly"] = _rel(Gr, terms.G_div)
    worst = max(res.values())
    res["det_defect"] = float(np.max(np.abs(state.det - 1.0)))
    return CheckReport("div_curl_structure", worst, tolerance, n * n, res)


# multilinear estimates --------------------------------------------------------------


def _norms_for(state: FlowState, p_trace: np.ndarray, params) -> dict:
    from .linear_solvers import boundary_trace_norms, l1_boundary_besov, l1_half_besov
    from .lp_besov import besov_norm_array
    from .timeint import trapezoid_weights
    g = state.grid
    s, pp = params.s, params.p

    def l1(a):
        if state.domain == "half_space":
            return l1_half_besov(a, g, params)
        from .lp_besov import BesovParams
        per = besov_norm_array(a, g, "whole_space", BesovParams(s, pp, 1.0, "whole"), batch=True)["norm"]
        return float(np.sum(trapezoid_weights(a.shape[0], g.dt) * per))

    return {"l1": l1, "trace": lambda a: boundary_trace_norms(a, g, s, pp),
            "l1b": lambda a, ss: l1_boundary_besov(a, g, ss, pp)}


def _critical_params(n: int, params):
    from .lp_besov import BesovParams
    if params is not None:
        return params
    p = float(n)
    return BesovParams(-1 + n / p, p, 1.0, "half")


def _grad_inv_lap(a: np.ndarray, state: FlowState) -> np.ndarray:
    from .linear_solvers import grad_inverse_laplacian_even
    g = state.grid
    if state.domain == "half_space":
        return grad_inverse_laplacian_even(a, g)
    k = g.wavenumbers("whole_space")
    k2 = sum(ki ** 2 for ki in k)
    inv = np.divide(1.0, k2, out=np.zeros_like(k2), where=k2 > 0)
    axes = tuple(range(-g.n, 0))
    ah = np.fft.fftn(a, axes=axes) * inv
    pts = g.shape("whole_space")
    return np.stack([np.real(np.fft.ifftn(ah * derivative_multiplier(k[j], 1, pts[j]), axes=axes))
                     for j in range(g.n)], axis=1)


MULTILINEAR_KINDS = ("Fp", "Gdiv", "GdivDt", "Fu", "Hu", "Hp")


def multilinear_terms(which: str, state: FlowState, p: np.ndarray, grad_p: np.ndarray | None = None,
                      params=None) -> tuple[float, float, dict]:
    """LHS and RHS of one multilinear estimate for a single state."""
    if which not in MULTILINEAR_KINDS:
        raise ValueError(f"unknown estimate {which!r}")
    n = state.grid.n
    params = _critical_params(n, params)
    nm = _norms_for(state, p, params)
    terms = assemble_nonlinear_terms(state, p, grad_p)
    D = nm["l1"](state.D2u) if state.D2u is not None else 0.0
    Ut = nm["l1"](state.ut) if state.ut is not None else 0.0
    info = {"D2u": D, "ut": Ut}
    if which == "Fp":
        P = nm["l1"](_grad_p(state, p, grad_p))
        lhs = nm["l1"](terms.F_p)
        rhs = sum(D ** k for k in range(1, n)) * P
        info["grad_p"] = P
    elif which == "Gdiv":
        lhs = nm["l1"](terms.grad_G_div)
        rhs = sum(D ** (k + 1) for k in range(1, n))
    elif which == "GdivDt":
        lhs = nm["l1"](time_derivative(_grad_inv_lap(terms.G_div, state), state.grid.dt))
        rhs = sum(D ** k for k in range(1, n)) * Ut
    elif which == "Fu":
        lhs = nm["l1"](terms.F_u)
        rhs = sum(D ** (k + 1) for k in range(1, 2 * n - 1))
    elif which == "Hu":
        F, L = nm["trace"](terms.H_u)
        rF = sum((Ut + D) ** k for k in range(2, 2 * n))
        rL = sum(D ** k for k in range(2, 2 * n))
        info.update(F=F, L=L, rhs_F=rF, rhs_L=rL)
        return F + L, rF + rL, _split(info, F, rF, L, rL)
    else:  # Hp
        p0 = state.boundary_slice(p)
        F, L = nm["trace"](terms.H_p)
        pF, pL = nm["trace"](p0)
        pS = nm["l1b"](p0, params.s)
        rF = (pF + pS) * sum((Ut + D) ** k for k in range(1, n))
        rL = pL * sum(D ** k for k in range(1, n))
        info.update(F=F, L=L, rhs_F=rF, rhs_L=rL)
        return F + L, rF + rL, _split(info, F, rF, L, rL)
    return lhs, rhs, info


def _split(info: dict, F: float, rF: float, L: float, rL: float) -> dict:
    from .linear_solvers import _ratio
    info["ratio_F"] = _ratio(F, rF)
    info["ratio_L"] = _ratio(L, rL)
    return info


def multilinear_estimate_check(which: str, ensemble, params=None):
    """Empirical constant of one multilinear estimate over ``(state, p, grad_p)`` triples.

    For the boundary terms the reported ratio is the larger of the two
    separate ratios (F-norm and L^1 Besov norm).
    """
    from .linear_solvers import RatioReport, _ratio
    ratios, L_all, R_all, rows = [], [], [], []
    for member in ensemble:
        state, p = member[0], member[1]
        gp = member[2] if len(member) > 2 else None
        lhs, rhs, info = multilinear_terms(which, state, p, gp, params)
        r = max(info["ratio_F"], info["ratio_L"]) if which in ("Hu", "Hp") else _ratio(lhs, rhs)
        ratios.append(r)
        L_all.append(lhs)
        R_all.append(rhs)
        rows.append(info)
    par = _critical_params(ensemble[0][0].grid.n if ensemble else 2, params)
    return RatioReport(f"multilinear_{which}", ratios, L_all, R_all, par.to_dict(), {"members": rows})


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


# flow map ------------------------------------------------------------------------------


class SpectralInterpolant:
    """Trigonometric interpolation of a torus vector field and its Jacobian.

    ``values``: ``(n, *S)`` or timed ``(nt, n, *S)`` on the doubled torus of
    ``grid``.  Timed fields are interpolated in time with cubic Lagrange
    weights on the sample grid.
    """

    def __init__(self, values: np.ndarray, grid: Grid, timed: bool = False):
        self.grid = grid
        self.timed = timed
        n = grid.n
        axes = tuple(range(-n, 0))
        total = int(np.prod(grid.shape("whole_space")))
        self.coef = np.fft.fftn(np.asarray(values, float), axes=axes) / total
        self.k = [np.fft.fftfreq(N, L / N) * 2 * np.pi
                  for L, N in zip(grid.tangential_lengths + (2 * grid.Ln,), grid.shape("whole_space"))]
        # drop Nyquist modes (not resolved symmetrically)
        for a, N in enumerate(grid.shape("whole_space")):
            sl = [slice(None)] * self.coef.ndim
            sl[self.coef.ndim - n + a] = N // 2
            self.coef[tuple(sl)] = 0.0

    def _coef_at(self, t: float) -> np.ndarray:
        if not self.timed:
            return self.coef
        g = self.grid
        nt = self.coef.shape[0]
        s = t / g.dt
        i0 = int(min(max(math.floor(s) - 1, 0), nt - 4))
        nodes = np.arange(i0, i0 + 4, dtype=float)
        w = [np.prod([(s - nodes[m]) / (nodes[q] - nodes[m]) for m in range(4) if m != q]) for q in range(4)]
        return sum(wq * self.coef[i0 + q] for q, wq in enumerate(w))

    def __call__(self, t: float, Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Velocity ``(m, n)`` and Jacobian ``(m, n, n)`` at points ``Y (m, n)``."""
        c = self._coef_at(t)
        n = self.grid.n
        E = [np.exp(1j * np.outer(Y[:, a], self.k[a])) for a in range(n)]
        ik = [1j * k for k in self.k]

        def evaluate(coef, deriv):
            parts = [E[a] * ik[a] if a == deriv else E[a] for a in range(n)]
            if n == 2:
                return np.real(np.einsum("cij,mi,mj->mc", coef, parts[0], parts[1]))
            return np.real(np.einsum("cijk,mi,mj,mk->mc", coef, parts[0], parts[1], parts[2]))

        U = evaluate(c, None)
        DU = np.stack([evaluate(c, j) for j in range(n)], axis=-1)
        return U, DU


@dataclass
class Trajectories:
    times: np.ndarray
    positions: np.ndarray      # (steps+1, m, n)
    jacobians: np.ndarray      # (steps+1, m, n, n)

    @property
    def det(self) -> np.ndarray:
        return np.linalg.det(self.jacobians)

    def to_dict(self) -> dict:
        return {"times": self.times.tolist(), "final_positions": self.positions[-1].tolist(),
                "max_det_defect": float(np.max(np.abs(self.det - 1.0)))}


def integrate_flow_map(velocity, x0, t_max: float, steps: int = 64, grid: Grid | None = None) -> Trajectories:
    """RK4 for ``y' = u(t, y)`` together with ``F' = Du(t, y) F``, ``F(0) = I``.

    ``velocity`` is a callable ``(t, Y) -> (U, DU)``, a whole-space vector
    :class:`Field` (timed or not) or a raw torus array with ``grid``.
    """
    if isinstance(velocity, Field):
        if velocity.domain != "whole_space" or velocity.rank != "vector":
            raise ValueError("flow maps need a whole-space velocity field")
        velocity = SpectralInterpolant(np.asarray(velocity.values), velocity.grid, velocity.timed)
    elif not callable(velocity):
        velocity = SpectralInterpolant(np.asarray(velocity), grid, np.asarray(velocity).ndim == grid.n + 2)
    Y = np.array(x0, float, ndmin=2)
    m, n = Y.shape
    F = np.broadcast_to(np.eye(n), (m, n, n)).copy()
    h = t_max / steps
    pos, jacs = [Y.copy()], [F.copy()]
    for k in range(steps):
        t = k * h

        def rhs(tt, y, f):
            U, DU = velocity(tt, y)
            return U, DU @ f

        k1 = rhs(t, Y, F)
        k2 = rhs(t + h / 2, Y + h / 2 * k1[0], F + h / 2 * k1[1])
        k3 = rhs(t + h / 2, Y + h / 2 * k2[0], F + h / 2 * k2[1])
        k4 = rhs(t + h, Y + h * k3[0], F + h * k3[1])
        Y = Y + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        F = F + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        pos.append(Y.copy())
        jacs.append(F.copy())
    return Trajectories(np.linspace(0.0, t_max, steps + 1), np.array(pos), np.array(jacs))


def linear_velocity(A) -> callable:
    """``u(y) = A y`` as a flow-map velocity (``A = [[0,-1],[1,0]]`` is rigid rotation)."""
    A = np.asarray(A, float)

    def vel(t, Y):
        return Y @ A.T, np.broadcast_to(A, (Y.shape[0],) + A.shape)

    return vel


# seeded states -----------------------------------------------------------------------------


def random_divfree_torus(grid: Grid, seed: int = 0, kmax: int = 2, modes: int = 4,
                         amplitude: float = 1.0) -> np.ndarray:
    """Band-limited divergence-free vector field on the doubled torus, ``(n, *S)``.

    ``u = curl`` of a random stream function (``n = 2``) or vector
    potential (``n = 3``), built from ``modes`` random Fourier modes with
    integer wavenumbers up to ``kmax``; normalised to unit max.
    """
    rng = np.random.default_rng(seed)
    n = grid.n
    coords = grid.coords("whole_space")
    periods = grid.tangential_lengths + (2 * grid.Ln,)
    base = [2 * np.pi / L for L in periods]
    pot = np.zeros((1 if n == 2 else 3,) + grid.shape("whole_space"))
    kk = []
    for c in range(pot.shape[0]):
        for _ in range(modes):
            ks = rng.integers(-kmax, kmax + 1, size=n)
            if not ks.any():
                ks[0] = 1
            ph = sum(b * k * x for b, k, x in zip(base, ks, coords)) + rng.uniform(0, 2 * np.pi)
            pot[c] = pot[c] + rng.normal() * np.cos(ph)
    P = pot[None]
    if n == 2:
        u = np.concatenate([-_torus_diff(P[:, 0], grid, 1)[:, None], _torus_diff(P[:, 0], grid, 0)[:, None]], 1)
    else:
        d = lambda c, a: _torus_diff(P[:, c], grid, a)
        u = np.stack([d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)], 1)
    u = u[0]
    return amplitude * u / np.max(np.abs(u))


def random_lagrangian_state(grid: Grid, seed: int = 0, scale: float = 0.05, kmax: int = 2,
                            modes: int = 4) -> FlowState:
    """Band-limited Lagrangian velocity with smooth time dependence (trapezoid ``d``)."""
    rng = np.random.default_rng(seed + 7919)
    u = random_divfree_torus(grid, seed, kmax, modes)
    w = random_divfree_torus(grid, seed + 1, kmax, modes)
    t = grid.times / grid.t_max
    a = (1 + 0.5 * np.sin(2 * np.pi * t + rng.uniform(0, 2 * np.pi))).reshape((-1,) + (1,) * (grid.n + 1))
    b = np.cos(np.pi * t).reshape(a.shape)
    return FlowState.from_velocity(grid, scale * (a * u[None] + 0.5 * b * w[None]))


def shear_flow_state(grid: Grid, seed: int = 0, scale: float = 0.05, kmax: int = 2) -> FlowState:
    """Volume-preserving torus state built from a composition of shears.

    ``y = S_n o ... o S_1 (x)`` where ``S_a`` shifts coordinate ``a`` by
    ``alpha_a(t) f_a`` of the other (already updated) coordinates; every
    shear has unit Jacobian, so ``det J = 1`` to spectral accuracy.
    """
    rng = np.random.default_rng(seed)
    n = grid.n
    coords = [np.broadcast_to(c, grid.shape("whole_space")) for c in grid.coords("whole_space")]
    periods = grid.tangential_lengths + (2 * grid.Ln,)
    base = [2 * np.pi / L for L in periods]
    t = grid.times
    T = grid.t_max
    rates = rng.normal(size=n)
    freqs = rng.uniform(0.5, 1.5, size=n)
    alpha = [scale * (np.sin(np.pi * fr * t / T + r) - np.sin(r)) / 1.0 for fr, r in zip(freqs, rates)]
    dalpha = [scale * (np.pi * fr / T) * np.cos(np.pi * fr * t / T + r) for fr, r in zip(freqs, rates)]
    funcs = []
    for a in range(n):
        others = [b for b in range(n) if b != a]
        ks = {b: rng.integers(1, kmax + 1) for b in others}
        ph = rng.uniform(0, 2 * np.pi, size=len(others))
        funcs.append((others, ks, ph))

    def shear(a, y):
        others, ks, ph = funcs[a]
        arg = sum(base[b] * ks[b] * y[b] for b in others)
        dargs = {b: base[b] * ks[b] for b in others}
        return np.sin(arg + ph.sum()), {b: np.cos(arg + ph.sum()) * dargs[b] for b in others}

    nt = grid.nt
    X = np.empty((nt, n) + grid.shape("whole_space"))
    Xt = np.empty_like(X)
    for it in range(nt):
        y = [c.copy() for c in coords]
        yt = [np.zeros_like(c) for c in coords]
        for a in range(n):
            f, df = shear(a, y)
            # time derivative by the chain rule through the earlier shears
            ft = sum(df[b] * yt[b] for b in df)
            y[a] = y[a] + alpha[a][it] * f
            yt[a] = yt[a] + dalpha[a][it] * f + alpha[a][it] * ft
        for a in range(n):
            X[it, a] = y[a] - coords[a]
            Xt[it, a] = yt[a]
    return FlowState.from_displacement(grid, X, Xt)


def random_pressure_torus(grid: Grid, seed: int = 0, kmax: int = 2, modes: int = 4) -> np.ndarray:
    """Seeded band-limited scalar on the doubled torus with smooth time dependence."""
    rng = np.random.default_rng(seed + 104729)
    coords = grid.coords("whole_space")
    periods = grid.tangential_lengths + (2 * grid.Ln,)
    base = [2 * np.pi / L for L in periods]
    out = np.zeros(grid.shape("whole_space"))
    for _ in range(modes):
        ks = rng.integers(-kmax, kmax + 1, size=grid.n)
        ph = sum(b * k * x for b, k, x in zip(base, ks, coords)) + rng.uniform(0, 2 * np.pi)
        out = out + rng.normal() * np.cos(ph)
    tt = np.cos(np.pi * grid.times / grid.t_max + rng.uniform(0, 1)).reshape((-1,) + (1,) * grid.n)
    return tt * out[None]
