"""Picard iteration for the Lagrangian Navier-Stokes system with a free surface.

Each step freezes the nonlinear terms at the previous iterate and solves the
half-space Stokes problem::

    d_t u - Delta u + grad p = F_u(u~) + F_p(u~, p~),   div u = G_div(u~),
    (grad u + grad u^T - p I) nu = H_u(u~) + H_p(u~, p~),  u(0) = u0.

Convergence is monitored in the five-term solution norm ``|(u, p)|_X`` at
the critical regularity ``s = -1 + n/p``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid_field import Grid
from .lagrangian_nl import FlowState, SingularJacobianError, assemble_nonlinear_terms
from .linear_solvers import (_l2, boundary_trace_norms, half_besov, l1_half_besov, relative,
                             solve_stokes_arrays)
from .lp_besov import BesovParams
from .timeint import cumulative_lagrange


class FixedPointAbort(RuntimeError):
    """The iteration left the smallness regime."""


@dataclass(frozen=True)
class FixedPointConfig:
    grid: Grid
    p: float = 2.0
    eps0: float = 0.05
    M: float = 1.0
    max_iters: int = 12
    tol_contraction: float = 0.6
    tol_residual: float = 1e-3
    tol_step: float = 1e-9

    def __post_init__(self) -> None:
        n = self.grid.n
        if not n <= self.p < 2 * n - 1:
            raise ValueError(f"p must lie in [n, 2n-1) = [{n}, {2 * n - 1}), got {self.p}")
        if self.eps0 <= 0 or self.M <= 0:
            raise ValueError("eps0 and M must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")

    @property
    def besov(self) -> BesovParams:
        n = self.grid.n
        return BesovParams(-1 + n / self.p, self.p, 1.0, "half")

    def to_dict(self) -> dict:
        return {"grid": self.grid.to_dict(), "p": self.p, "eps0": self.eps0, "M": self.M,
                "max_iters": self.max_iters, "tol_contraction": self.tol_contraction,
                "tol_residual": self.tol_residual, "tol_step": self.tol_step}


@dataclass
class IterationTrace:
    x_norms: list = field(default_factory=list)
    x_terms: list = field(default_factory=list)
    diff_norms: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    boundary_diff_norms: list = field(default_factory=list)
    u0_norm: float = 0.0
    status: str = "running"

    def contracted(self, bound: float = 0.6, after: int = 2) -> bool:
        """All ratios from iteration ``after + 1`` on are at most ``bound``."""
        tail = [r for r in self.ratios[after:] if np.isfinite(r)]
        return bool(tail) and max(tail) <= bound

    def to_dict(self) -> dict:
        return {"x_norms": self.x_norms, "x_terms": self.x_terms, "diff_norms": self.diff_norms,
                "ratios": self.ratios, "residuals": self.residuals,
                "boundary_diff_norms": self.boundary_diff_norms, "u0_norm": self.u0_norm,
                "status": self.status}

    def rows(self) -> list[dict]:
        out = []
        for k, x in enumerate(self.x_norms):
            out.append({"iteration": k + 1, "x_norm": x,
                        "diff_norm": self.diff_norms[k] if k < len(self.diff_norms) else float("nan"),
                        "ratio": self.ratios[k] if k < len(self.ratios) else float("nan"),
                        "residual": self.residuals[k] if k < len(self.residuals) else float("nan")})
        return out


# norms -------------------------------------------------------------------------------


def x_norm_terms(jets: dict, grid: Grid, p: float) -> dict:
    """The five terms of ``|(u, p)|_X`` at ``s = -1 + n/p``."""
    n = grid.n
    bp = BesovParams(-1 + n / p, p, 1.0, "half")
    F, L = boundary_trace_norms(jets["p"][..., 0], grid, bp.s, p)
    return {"ut": l1_half_besov(jets["ut"], grid, bp), "D2u": l1_half_besov(jets["D2u"], grid, bp),
            "grad_p": l1_half_besov(jets["Dp"], grid, bp), "p_trace_F": F, "p_trace_L1B": L}


def x_norm(jets: dict, grid: Grid, p: float) -> float:
    return float(sum(x_norm_terms(jets, grid, p).values()))


def _jet_diff(a: dict, b: dict) -> dict:
    return {k: a[k] - b[k] for k in ("u", "ut", "D2u", "Dp", "p") if k in a and k in b}


# data ----------------------------------------------------------------------------------


def stress_free_initial_velocity(grid: Grid, k: int = 1, width: float = 0.7, amplitude: float = 1.0,
                                 phase: float = 0.0) -> np.ndarray:
    """Divergence-free ``u0`` whose boundary stress vanishes.

    ``u0 = (d_n psi, 0, ..., -d_1 psi)`` with ``psi = cos(k x_1) phi(x_n / w)``
    and ``phi(y) = (1 + c y^2) exp(-y^2)`` where ``c = 1 - (k w)^2 / 2`` makes
    ``d_n^2 psi - d_1^2 psi`` vanish on the wall; ``phi'(0) = 0`` kills the
    normal stress.  ``k`` counts periods of the first tangential axis.
    """
    n = grid.n
    kk = 2 * np.pi * k / grid.tangential_lengths[0]
    w = width
    c = 1 - (kk * w) ** 2 / 2
    x = grid.coords("half_space")
    y = x[-1] / w
    phi = (1 + c * y ** 2) * np.exp(-y ** 2)
    dphi = (2 * c * y - 2 * y * (1 + c * y ** 2)) * np.exp(-y ** 2) / w
    arg = kk * x[0] + phase
    u0 = np.zeros((n,) + grid.shape("half_space"))
    u0[0] = np.cos(arg) * dphi
    u0[n - 1] = kk * np.sin(arg) * phi
    return amplitude * u0


def scaled_initial_velocity(grid: Grid, eps: float, p: float, **kw) -> np.ndarray:
    """:func:`stress_free_initial_velocity` normalised to ``|u0|_{B^{-1+n/p}_{p,1}} = eps``."""
    base = stress_free_initial_velocity(grid, **kw)
    nrm = float(half_besov(base, grid, BesovParams(-1 + grid.n / p, p, 1.0, "half")))
    return eps * base / nrm


# iteration -------------------------------------------------------------------------------


def nonlinear_data(jets: dict, grid: Grid, method: str = "matrix") -> tuple[np.ndarray, ...]:
    """``(f, g, h)`` of the linearised step frozen at ``jets``."""
    try:
        st = FlowState.from_jets(grid, jets)
        terms = assemble_nonlinear_terms(st, jets["p"], jets["Dp"], method=method)
    except SingularJacobianError as exc:
        raise FixedPointAbort(str(exc)) from exc
    except ValueError as exc:
        if "smallness" in str(exc):
            raise FixedPointAbort(str(exc)) from exc
        raise
    return terms.F_u + terms.F_p, terms.G_div, terms.H_u + terms.H_p


def zero_jets(grid: Grid) -> dict:
    n, nt = grid.n, grid.nt
    S = grid.shape("half_space")
    return {"u": np.zeros((nt, n) + S), "Du": np.zeros((nt, n, n) + S), "D2u": np.zeros((nt, n, n, n) + S),
            "ut": np.zeros((nt, n) + S), "p": np.zeros((nt,) + S), "Dp": np.zeros((nt, n) + S),
            "lapu": np.zeros((nt, n) + S)}


def picard_step(state: dict, u0: np.ndarray, cfg: FixedPointConfig, method: str = "matrix") -> dict:
    """One linear solve with the nonlinearities frozen at ``state`` (solver jets)."""
    f, g, h = nonlinear_data(state, cfg.grid, method)
    jets = solve_stokes_arrays(u0, f, g, h, cfg.grid, second=True)
    jets["data"] = (f, g, h)
    return jets


def system_residuals(jets: dict, u0: np.ndarray, grid: Grid) -> dict:
    """Residuals of the nonlinear system with the terms evaluated at ``jets`` itself."""
    f, g, h = nonlinear_data(jets, grid)
    n = grid.n
    inner = (Ellipsis, slice(1, None))
    Du, p = jets["Du"], jets["p"]
    mom = jets["ut"] - jets["lapu"] + jets["Dp"] - f
    div = np.trace(Du, axis1=1, axis2=2) - g
    stress = np.empty_like(h)
    for i in range(n - 1):
        stress[:, i] = -(Du[:, n - 1, i] + Du[:, i, n - 1])[..., 0]
    stress[:, n - 1] = (-2 * Du[:, n - 1, n - 1] + p)[..., 0]
    res = {
        "momentum": relative(_l2(mom[inner]), _l2(jets["ut"][inner]), _l2(jets["lapu"][inner]),
                             _l2(jets["Dp"][inner])),
        "divergence": relative(_l2(div), _l2(Du)),
        "stress": relative(_l2(stress - h), _l2(stress), _l2(Du[..., 0])),
        "initial": relative(_l2(jets["u"][0] - u0), _l2(u0)),
    }
    res["max"] = max(res.values())
    return res


def run_fixed_point(u0: np.ndarray, cfg: FixedPointConfig, method: str = "matrix") -> tuple[IterationTrace, dict]:
    """Iterate :func:`picard_step` from zero until the step size stalls.

    Returns the trace and the final jets.  The trace status is
    ``converged``, ``max_iters``, ``left_ball`` (X-norm above ``M``) or
    ``aborted`` (smallness guard).
    """
    grid = cfg.grid
    trace = IterationTrace(u0_norm=float(half_besov(u0, grid, cfg.besov)))
    prev = zero_jets(grid)
    prev_h = np.zeros((grid.nt, grid.n) + grid.shape("boundary"))
    if not np.any(u0):
        trace.x_norms.append(0.0)
        trace.diff_norms.append(0.0)
        trace.residuals.append(0.0)
        trace.status = "converged"
        return trace, prev
    for it in range(cfg.max_iters):
        try:
            cur = picard_step(prev, u0, cfg, method)
        except FixedPointAbort:
            trace.status = "aborted"
            return trace, prev
        terms = x_norm_terms(cur, grid, cfg.p)
        xn = float(sum(terms.values()))
        dn = x_norm(_jet_diff(cur, prev), grid, cfg.p) if it > 0 else xn
        h = cur["data"][2]
        F, L = boundary_trace_norms(h - prev_h, grid, cfg.besov.s, cfg.p)
        trace.x_norms.append(xn)
        trace.x_terms.append(terms)
        trace.diff_norms.append(dn)
        trace.boundary_diff_norms.append(F + L)
        if it > 0:
            prev_d = trace.diff_norms[-2]
            trace.ratios.append(dn / prev_d if prev_d > 0 else 0.0)
        try:
            trace.residuals.append(system_residuals(cur, u0, grid)["max"])
        except FixedPointAbort:
            trace.status = "aborted"
            return trace, cur
        prev, prev_h = cur, h
        if xn > cfg.M:
            trace.status = "left_ball"
            return trace, cur
        if it > 0 and dn <= cfg.tol_step * max(xn, 1e-300):
            trace.status = "converged"
            return trace, cur
    trace.status = "max_iters"
    return trace, prev


def bisect_eps0(cfg: FixedPointConfig, lo: float = 1e-3, hi: float = 1.0, steps: int = 6,
                iters: int = 5, **data_kw) -> dict:
    """Largest data size (log-bisection) at which the iteration still contracts.

    A size passes when the run stays in the smallness regime and every
    ratio after the second iteration is at most ``tol_contraction``.
    """
    sub = FixedPointConfig(cfg.grid, cfg.p, cfg.eps0, cfg.M, iters, cfg.tol_contraction,
                           cfg.tol_residual, 0.0)

    def ok(eps: float) -> bool:
        tr, _ = run_fixed_point(scaled_initial_velocity(cfg.grid, eps, cfg.p, **data_kw), sub)
        if tr.status in ("aborted", "left_ball"):
            return False
        tail = tr.ratios[1:]
        return bool(tail) and max(tail) <= cfg.tol_contraction

    history = []
    if ok(hi):
        return {"eps0": hi, "bracket": [hi, hi], "history": [(hi, True)], "saturated": True}
    if not ok(lo):
        return {"eps0": 0.0, "bracket": [0.0, lo], "history": [(lo, False)], "saturated": False}
    a, b = math.log(lo), math.log(hi)
    for _ in range(steps):
        m = 0.5 * (a + b)
        good = ok(math.exp(m))
        history.append((math.exp(m), good))
        if good:
            a = m
        else:
            b = m
    return {"eps0": math.exp(a), "bracket": [math.exp(a), math.exp(b)], "history": history,
            "saturated": False}


# pull-back to Eulerian coordinates --------------------------------------------------------------


def _lagrange_row(x: float, h: float, npts: int, order: int = 8) -> tuple[int, np.ndarray]:
    """Start index and weights of the ``order``-point Lagrange interpolant at ``x``."""
    s = x / h
    i0 = int(min(max(math.floor(s) - order // 2 + 1, 0), npts - order))
    nodes = np.arange(i0, i0 + order, dtype=float)
    w = np.array([np.prod([(s - nodes[m]) / (nodes[q] - nodes[m]) for m in range(order) if m != q])
                  for q in range(order)])
    return i0, w


class HalfSpaceInterpolant:
    """Trigonometric in ``x'`` and 8-point Lagrange in ``x_n`` on the half grid."""

    def __init__(self, grid: Grid, values: np.ndarray):
        self.grid = grid
        d = grid.n - 1
        self.lead = values.shape[: values.ndim - grid.n]
        axes = tuple(range(values.ndim - grid.n, values.ndim - 1))
        total = int(np.prod(grid.tangential_points))
        self.coef = np.fft.fftn(values, axes=axes) / total
        self.k = [2 * np.pi * np.fft.fftfreq(N, L / N) for L, N in zip(grid.tangential_lengths,
                                                                         grid.tangential_points)]
        self.d = d

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, float)
        g = self.grid
        i0, w = _lagrange_row(float(x[-1]), g.hn, g.Nn + 1)
        col = np.tensordot(self.coef[..., i0:i0 + len(w)], w, axes=(-1, 0))
        for a in reversed(range(self.d)):
            col = np.tensordot(col, np.exp(1j * self.k[a] * x[a]), axes=(-1, 0))
        return np.real(col)


def invert_map(y_fn, jac_fn, targets: np.ndarray, guess: np.ndarray | None = None,
               tol: float = 1e-12, max_iter: int = 30) -> tuple[np.ndarray, np.ndarray]:
    """Newton solve of ``y(x) = target`` for each row of ``targets``; returns (x, residual)."""
    targets = np.atleast_2d(np.asarray(targets, float))
    X = targets.copy() if guess is None else np.atleast_2d(np.asarray(guess, float)).copy()
    res = np.zeros(len(targets))
    for m in range(len(targets)):
        x = X[m]
        for _ in range(max_iter):
            r = y_fn(x) - targets[m]
            if np.max(np.abs(r)) < tol:
                break
            x = x - np.linalg.solve(jac_fn(x), r)
        X[m] = x
        res[m] = float(np.max(np.abs(y_fn(x) - targets[m])))
    return X, res


def displacement(jets: dict, grid: Grid) -> np.ndarray:
    """``y - x = int_0^t u ds`` by high-order quadrature in time."""
    return cumulative_lagrange(jets["u"], grid.dt, axis=0, points=6)


def pullback_eulerian(jets: dict, grid: Grid, samples: int = 100, seed: int = 0,
                      time_indices=None, xn_range=(0.4, 1.4)) -> dict:
    """Sample the Eulerian fields on the moving domain and their NS residual.

    Sample points are ``y = Y(t, x*)`` for seeded interior ``x*`` and
    perturbed targets; the preimages are recovered by Newton iteration on
    the interpolated flow map.  The Eulerian momentum
    ``D_t u - Delta_y u + grad_y p`` uses the chain rule on the Lagrangian
    jets (no divergence-form identity), and ``div_y u`` likewise; both are
    compared with the Lagrangian momentum residual at the same points.
    """
    rng = np.random.default_rng(seed)
    n = grid.n
    X = displacement(jets, grid)
    dX = cumulative_lagrange(jets["Du"], grid.dt, axis=0, points=6)
    d2X = cumulative_lagrange(jets["D2u"], grid.dt, axis=0, points=6)
    f, g, h = nonlinear_data(jets, grid)
    lag_res = jets["ut"] - jets["lapu"] + jets["Dp"] - f
    tid = list(time_indices) if time_indices is not None else [grid.nt // 4, grid.nt // 2, grid.nt - 1]
    per_t = max(1, samples // len(tid))
    rows = []
    eul, lag, divs, scales, inv_res = [], [], [], [], []
    for it in tid:
        I = {name: HalfSpaceInterpolant(grid, arr[it]) for name, arr in
             (("X", X), ("dX", dX), ("d2X", d2X), ("ut", jets["ut"]), ("Du", jets["Du"]),
              ("D2u", jets["D2u"]), ("Dp", jets["Dp"]), ("lag", lag_res), ("p", jets["p"]))}
        x_star = np.column_stack([rng.uniform(0, L, per_t) for L in grid.tangential_lengths]
                                 + [rng.uniform(*xn_range, per_t)])
        y_fn = lambda x: x + I["X"](x)
        jac_fn = lambda x: np.eye(n) + I["dX"](x)
        targets = np.array([y_fn(x) for x in x_star])
        xs, res = invert_map(y_fn, jac_fn, targets)
        inv_res.append(float(np.max(res)))
        for x in xs:
            J = np.eye(n) + I["dX"](x)
            Ji = np.linalg.inv(J)
            dJ = I["d2X"](x)                # [a, b, l] = d_l J_ab
            dJi = -np.einsum("ab,bcl,cd->adl", Ji, dJ, Ji)
            Du, D2u, Dp = I["Du"](x), I["D2u"](x), I["Dp"](x)
            # Delta_y u_j = sum_m sum_{k,l} Ji_km Ji_lm d_k d_l u_j + Ji_km d_k(Ji_lm) d_l u_j
            lap_y = np.einsum("km,lm,jkl->j", Ji, Ji, D2u) + np.einsum("km,lmk,jl->j", Ji, dJi, Du)
            grad_y_p = Ji.T @ Dp
            r = I["ut"](x) - lap_y + grad_y_p
            eul.append(float(np.linalg.norm(r)))
            lag.append(float(np.linalg.norm(I["lag"](x))))
            divs.append(abs(float(np.einsum("kj,jk->", Ji, Du))))
            scales.append(max(float(np.linalg.norm(I["ut"](x))), float(np.linalg.norm(lap_y)),
                              float(np.linalg.norm(grad_y_p)), 1e-300))
        rows.append({"time_index": it, "points": len(xs)})
    scale = max(scales)
    e = float(np.sqrt(np.mean(np.square(eul)))) / scale
    l = float(np.sqrt(np.mean(np.square(lag)))) / scale
    return {"eulerian_residual": e, "lagrangian_residual": l, "eulerian_divergence": float(np.max(divs)) / scale,
            "inversion_residual": max(inv_res), "samples": len(eul), "times": rows,
            "ratio": e / l if l > 0 else (0.0 if e == 0 else math.inf)}
