"""Linear engines on the half space.

Everything below works on the tangentially periodic slab of a :class:`Grid`
and returns "jets": the solution together with the derivatives needed by the
residual checks and the nonlinear terms.  Spatial derivatives are spectral
(tangential), analytic in the wall-normal direction for the boundary
corrector, and spectral on the doubled torus for whole-space pieces.  Time
derivatives use fourth-order finite differences.

Stress convention: with the outward normal ``-e_n`` the boundary condition
``(grad u + grad u^T - p I) nu = h`` reads::

    -(d_i u_n + d_n u_i) = h_i   (i < n),      -2 d_n u_n + p = h_n.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dct, idct

from .grid_field import ExtensionPolicy, Field, Grid, derivative_multiplier, extend_array
from .lp_besov import smooth_step
from .timeint import cumulative_lagrange, etd_solve, etd_solve_derivative_forcing, time_derivative

# small helpers ---------------------------------------------------------------


def _taxes(ndim: int, d: int) -> tuple[int, ...]:
    """Tangential axes of a half/whole array (the last axis is x_n)."""
    return tuple(range(ndim - 1 - d, ndim - 1))


def _tfft(a: np.ndarray, d: int) -> np.ndarray:
    return np.fft.fftn(a, axes=_taxes(a.ndim, d))


def _tifft(a: np.ndarray, d: int) -> np.ndarray:
    return np.fft.ifftn(a, axes=_taxes(a.ndim, d))


def _bfft(a: np.ndarray, d: int) -> np.ndarray:
    return np.fft.fftn(a, axes=tuple(range(a.ndim - d, a.ndim)))


def _bifft(a: np.ndarray, d: int) -> np.ndarray:
    return np.fft.ifftn(a, axes=tuple(range(a.ndim - d, a.ndim)))


def _real_if(a: np.ndarray, real: bool) -> np.ndarray:
    return np.real(a) if real else a


def _tangential_multipliers(grid: Grid) -> list[np.ndarray]:
    """First-derivative multipliers ``i xi_l`` on the boundary grid (Nyquist removed)."""
    out = []
    for ax, k in enumerate(grid.wavenumbers("boundary")):
        out.append(derivative_multiplier(k, 1, grid.points[ax]))
    return out


def _normal_derivatives(w: np.ndarray, grid: Grid, parity: str, orders=(1, 2)) -> list[np.ndarray]:
    """x_n derivatives of a half array through its reflection onto the torus."""
    ext = extend_array(w, parity)
    k = 2 * np.pi * np.fft.fftfreq(2 * grid.Nn, grid.hn)
    W = np.fft.fft(ext, axis=-1)
    res = []
    for o in orders:
        m = derivative_multiplier(k, o, 2 * grid.Nn)
        res.append(np.fft.ifft(W * m, axis=-1)[..., : grid.Nn + 1])
    return res


def relative(num: float, *scales: float) -> float:
    den = max([s for s in scales if np.isfinite(s)] + [0.0])
    if den == 0.0:
        return 0.0 if num == 0.0 else math.inf
    return float(num / den)


def _l2(a: np.ndarray, w: float = 1.0) -> float:
    return float(np.sqrt(w * np.sum(np.abs(a) ** 2)))


# heat equation with Neumann data --------------------------------------------


def neumann_lift(A: np.ndarray, x: np.ndarray, L: float):
    """Profile ``psi`` with ``psi'(0) = 1``, ``psi'(L) = 0`` and its derivatives.

    For ``A > 0`` it solves ``psi'' = A^2 psi``; the ``A = 0`` profile is the
    parabola ``-(L - x)^2 / (2L)`` whose Laplacian ``-1/L`` goes into the
    forcing.  Returns ``(psi, dpsi, d2psi, lap)`` with ``lap = psi'' - A^2 psi``.
    """
    A = np.asarray(A, float)[..., None]
    pos = A > 0
    Ap = np.where(pos, A, 1.0)
    e1 = np.exp(-Ap * x)
    e2 = np.exp(-Ap * (2 * L - x))
    den = -np.expm1(-2 * Ap * L)
    psi = np.where(pos, -(e1 + e2) / (Ap * den), -(L - x) ** 2 / (2 * L))
    dpsi = np.where(pos, (e1 - e2) / den, (L - x) / L)
    d2psi = np.where(pos, Ap * Ap * psi, -1.0 / L)
    lap = np.where(pos, 0.0, -1.0 / L)
    return psi, dpsi, d2psi, np.broadcast_to(lap, psi.shape)


def heat_neumann_arrays(u0: np.ndarray, f: np.ndarray, h: np.ndarray, grid: Grid) -> dict:
    """Solve ``u_t - Delta u = f``, ``d_n u(x_n = 0) = h``, ``u(0) = u0`` on the slab.

    The slab is closed by a mirror (``d_n u = 0``) at ``x_n = L_n``.  Per
    tangential mode the boundary datum is lifted by :func:`neumann_lift`; the
    remainder has homogeneous Neumann data and is advanced in a cosine basis
    by exponential time differencing.  Leading component axes are allowed.

    Returns physical half arrays ``u``, ``dn`` and ``dnn`` (time first).
    """
    d = grid.n - 1
    f = np.asarray(f)
    h = np.asarray(h)
    u0 = np.asarray(u0)
    real = not (np.iscomplexobj(f) or np.iscomplexobj(h) or np.iscomplexobj(u0))
    L, x = grid.Ln, grid.xn_half
    psi, dpsi, d2psi, lap = neumann_lift(grid.abs_tangential(), x, L)
    uh0 = _tfft(u0, d)
    fh = _tfft(f, d)
    hh = _bfft(h, d)[..., None]
    w0 = uh0 - hh[0] * psi
    mode = np.arange(grid.Nn + 1)
    lam = grid.abs_tangential()[..., None] ** 2 + (np.pi * mode / L) ** 2
    W0 = dct(w0, type=1, axis=-1)
    F = dct(fh + hh * lap, type=1, axis=-1)
    G = dct(hh * psi, type=1, axis=-1)
    Wm = etd_solve(lam, W0, F, grid.dt) - etd_solve_derivative_forcing(lam, 0.0, G, grid.dt)
    w = idct(Wm, type=1, axis=-1)
    wn, wnn = _normal_derivatives(w, grid, "even")
    out = {"u": w + hh * psi, "dn": wn + hh * dpsi, "dnn": wnn + hh * d2psi}
    return {k: _real_if(_tifft(v, d), real) for k, v in out.items()}


def heat_residuals(sol: dict, f: np.ndarray, h: np.ndarray, u0: np.ndarray, grid: Grid) -> dict:
    """Interior PDE residual and Neumann-trace error of a heat solution.

    The trace is measured independently of the solver's own representation
    by a sixth-order one-sided difference of the sampled solution.
    """
    d = grid.n - 1
    u = sol["u"]
    ut = time_derivative(u, grid.dt)
    U = _tfft(u, d)
    lap_t = sum(m[..., None] ** 2 for m in _tangential_multipliers_full(grid))
    lap = np.real_if_close(_tifft(U * lap_t, d)) + sol["dnn"]
    res = ut - lap - f
    inner = (slice(None),) * (res.ndim - 1) + (slice(1, -1),)
    trace = _one_sided_dn(u, grid)
    return {
        "pde": relative(_l2(res[inner]), _l2(ut[inner]), _l2(f[inner]), _l2(lap[inner])),
        "neumann": relative(_l2(trace - h), _l2(h)),
        "neumann_jet": relative(_l2(sol["dn"][..., 0] - h), _l2(h)),
        "initial": relative(_l2(u[0] - u0), _l2(u0), _l2(u)),
    }


def _tangential_multipliers_full(grid: Grid) -> list[np.ndarray]:
    """``i xi_l`` without Nyquist removal (used for even-order operators)."""
    return [1j * k for k in grid.wavenumbers("boundary")]


def solve_heat_neumann(u0: Field, f: Field, h: Field, grid: Grid | None = None,
                       compat_tol: float = 1e-6) -> Field:
    """Heat equation on the half space with Neumann boundary data ``d_n u = h``."""
    grid = grid or u0.grid
    for name, fld, dom in (("u0", u0, "half_space"), ("f", f, "half_space"), ("h", h, "boundary")):
        if fld.domain != dom:
            raise ValueError(f"{name} must live on the {dom} domain")
    if not (f.timed and h.timed):
        raise ValueError("f and h must be time dependent")
    u0v = np.asarray(u0.values)
    hv = np.asarray(h.values)
    gap = np.max(np.abs(_one_sided_dn(u0v, grid) - hv[0]))
    if gap > compat_tol * max(1.0, np.max(np.abs(hv[0]))):
        warnings.warn("initial data and Neumann data are not compatible at t = 0", RuntimeWarning)
    sol = heat_neumann_arrays(u0v, f.values, hv, grid)
    return Field(grid, sol["u"], u0.rank, "physical", "half_space", u0.policy, True)


def _one_sided_dn(u: np.ndarray, grid: Grid) -> np.ndarray:
    coef = np.array([-49 / 20, 6, -15 / 2, 20 / 3, -15 / 4, 6 / 5, -1 / 6])
    return np.tensordot(u[..., :7], coef, axes=([-1], [0])) / grid.hn


# whole-space Stokes on the doubled torus --------------------------------------


def _torus_wavenumbers(grid: Grid) -> list[np.ndarray]:
    return grid.wavenumbers("whole_space")


def _effective_wavenumbers(grid: Grid) -> list[np.ndarray]:
    """Wavenumbers of the first-derivative multipliers (zero on Nyquist modes).

    Projection and pressure use these, so ``div`` and ``grad`` computed with
    :func:`derivative_multiplier` see an exactly solenoidal field.
    """
    pts = grid.shape("whole_space")
    return [np.real(derivative_multiplier(k, 1, pts[a]) / 1j)
            for a, k in enumerate(_torus_wavenumbers(grid))]


def _leray(vh: np.ndarray, k: list[np.ndarray], k2: np.ndarray, axis: int) -> np.ndarray:
    """Apply ``I - xi xi^T / |xi|^2`` along the component ``axis`` (identity at xi = 0)."""
    inv = np.divide(1.0, k2, out=np.zeros_like(k2), where=k2 > 0)
    comps = np.moveaxis(vh, axis, 0)
    kd = sum(ki * c for ki, c in zip(k, comps))
    out = np.stack([c - ki * kd * inv for ki, c in zip(k, comps)])
    return np.moveaxis(out, 0, axis)


def stokes_wholespace_arrays(u0: np.ndarray, f: np.ndarray, grid: Grid, rate: bool = False):
    """Cauchy problem on the torus: returns spectral ``(u_hat, p_hat)`` (time first).

    ``u`` evolves by the heat semigroup on the Leray projected data;
    ``p_hat = -i xi . f_hat / |xi|^2``.  Transforms are unnormalized numpy FFTs
    over the spatial axes.  With ``rate`` the time derivative
    ``-|xi|^2 u_hat + P f_hat`` at the sample times is returned as a third item.
    """
    n = grid.n
    axes = tuple(range(-n, 0))
    k2 = sum(ki ** 2 for ki in _torus_wavenumbers(grid))
    k = _effective_wavenumbers(grid)
    ke2 = sum(ki ** 2 for ki in k)
    fh = np.fft.fftn(f, axes=axes)
    u0h = _leray(np.fft.fftn(u0, axes=axes), k, ke2, 0)
    Pf = _leray(fh, k, ke2, 1)
    uh = etd_solve(k2, u0h, Pf, grid.dt)
    inv = np.divide(1.0, ke2, out=np.zeros_like(ke2), where=ke2 > 0)
    ph = -1j * sum(ki * fh[:, i] for i, ki in enumerate(k)) * inv
    if rate:
        return uh, ph, Pf - k2 * uh
    return uh, ph


def solve_stokes_wholespace(u0: Field, f: Field, grid: Grid | None = None) -> tuple[Field, Field]:
    """Whole-space Stokes flow by the heat semigroup and Leray projection."""
    grid = grid or u0.grid
    if u0.domain != "whole_space" or f.domain != "whole_space":
        raise ValueError("whole-space data expected")
    uh, ph = stokes_wholespace_arrays(np.asarray(u0.values), np.asarray(f.values), grid)
    axes = tuple(range(-grid.n, 0))
    real = not (np.iscomplexobj(u0.values) or np.iscomplexobj(f.values))
    u = _real_if(np.fft.ifftn(uh, axes=axes), real)
    p = _real_if(np.fft.ifftn(ph, axes=axes), real)
    return (Field(grid, u, "vector", "physical", "whole_space", None, True),
            Field(grid, p, "scalar", "physical", "whole_space", None, True))


class _TorusJets:
    """Spectral derivatives of torus fields restricted to the half slab."""

    def __init__(self, grid: Grid):
        self.grid = grid
        self.n = grid.n
        self.axes = tuple(range(-grid.n, 0))
        pts = grid.shape("whole_space")
        self.m1 = [derivative_multiplier(k, 1, pts[a]) for a, k in enumerate(_torus_wavenumbers(grid))]
        self.m2 = [derivative_multiplier(k, 2, pts[a]) for a, k in enumerate(_torus_wavenumbers(grid))]

    def mult(self, *dirs: int):
        if not dirs:
            return 1.0
        if len(dirs) == 2 and dirs[0] == dirs[1]:
            return self.m2[dirs[0]]
        out = 1.0
        for a in dirs:
            out = out * self.m1[a]
        return out

    def phys(self, ah: np.ndarray, *dirs: int) -> np.ndarray:
        a = np.fft.ifftn(ah * self.mult(*dirs), axes=self.axes)
        return a[..., : self.grid.Nn + 1]


# boundary corrector -----------------------------------------------------------


def _profile_d(tr, A, B):
    """x_n derivative of ``a Delta + b e^{-Bx} + c e^{-Ax}``."""
    a, b, c = tr
    return (-a * A, a - b * B, -c * A)


def _profile_scale(tr, s):
    return tuple(s * t for t in tr)


def _profile_add(*trs):
    return tuple(sum(parts) for parts in zip(*trs))


def corrector_symbols(tau: np.ndarray, xi: list[np.ndarray], Hh: np.ndarray) -> dict:
    """Profile coefficients of ``(v, q)`` for boundary stress data ``Hh``.

    ``tau`` and every ``xi[l]`` broadcast together; ``Hh`` has the component
    axis first.  Each entry is a triple ``(a, b, c)`` multiplying
    ``(Delta, e^{-B x}, e^{-A x})`` with ``Delta = (e^{-Ax} - e^{-Bx}) / (B - A)``.
    """
    A = np.sqrt(sum(x ** 2 for x in xi))
    B = np.sqrt(1j * tau + A ** 2)
    S = A ** 2 + B ** 2
    D = B ** 3 + A * B ** 2 + 3 * A ** 2 * B - A ** 3
    delta = 1j * tau / (B + A)  # B - A without cancellation
    eta = sum(1j * x * Hh[l] for l, x in enumerate(xi))
    Q = (A + B) * (S * Hh[-1] - 2 * B * eta) / D
    zero = np.zeros_like(Q)
    out = {"q": (zero, zero, Q), "A": A, "B": B, "delta": delta}
    vel = []
    for l, x in enumerate(xi):
        a = -1j * x * Q / (B + A)
        b = -1j * x * Q * delta / ((B + A) * S) + Hh[l] / B + 1j * x * eta / (B * S)
        vel.append((a, b, zero))
    vel.append((A * Q / (B + A), (A * Q + eta) / S, zero))
    out["v"] = vel
    return out


def _profile_basis(A, B, delta, x):
    """``(Delta, E_B, E_A)`` on the x_n grid (new trailing axis)."""
    xx = x.reshape((1,) * np.ndim(B) + (-1,))
    A_, B_, d_ = A[..., None], B[..., None], delta[..., None]
    EA = np.exp(-A_ * xx)
    EB = np.exp(-B_ * xx)
    small = np.abs(d_ * xx) < 1e-300
    dsafe = np.where(d_ == 0, 1.0, d_)
    Dl = np.where(small, xx * EA, EA * (-np.expm1(-dsafe * xx)) / dsafe)
    return Dl, EB, EA


def _extend_time(H: np.ndarray, M: int, nt: int, degree: int = 5, width: int = 24) -> np.ndarray:
    """Continue the samples past ``T`` smoothly, then taper them to zero.

    The continuation is the polynomial through the last ``degree + 1``
    samples, so the padded series keeps the smoothness of the data across
    ``T``; a C-infinity taper of ``width`` samples brings it to zero.  Data
    beyond ``T`` never influence the causal solution on ``[0, T]`` except
    through this smoothness.
    """
    out = np.zeros((M,) + H.shape[1:], dtype=H.dtype)
    out[:nt] = H
    p = min(degree + 1, nt)
    width = min(width, M - nt)
    nodes = np.arange(-(p - 1), 1, dtype=float)
    s = np.arange(1, width + 1, dtype=float)
    # Lagrange extrapolation weights from the last p samples
    Lw = np.ones((width, p))
    for i in range(p):
        for j in range(p):
            if i != j:
                Lw[:, i] *= (s - nodes[j]) / (nodes[i] - nodes[j])
    cont = np.tensordot(Lw, H[nt - p:], axes=(1, 0))
    taper = (1.0 - smooth_step(s / (width + 1))).reshape((-1,) + (1,) * (H.ndim - 1))
    out[nt:nt + width] = cont * taper
    return out


def corrector_padding(grid: Grid, tol: float = 1e-10) -> int:
    """Transform length covering the data, the taper and the slowest decay."""
    A = grid.abs_tangential()
    amin = A[A > 0].min()
    # slowest pole of the corrector symbol sits at i tau ~ -0.91 A^2
    t_decay = math.log(1.0 / tol) / (0.9 * amin ** 2)
    need = grid.nt + 24 + math.ceil(t_decay / grid.dt)
    return 1 << (need - 1).bit_length()


def boundary_corrector_arrays(H: np.ndarray, grid: Grid, tol: float = 1e-10,
                              second: bool = False, chunk_elems: int = 1 << 22) -> dict:
    """Mode-wise solution of the stress problem with zero initial data.

    ``H`` is the boundary datum, shape ``(nt, n, *N')``.  The tangential mean
    and Nyquist modes are not handled here (the mean sector has its own
    exact solver).  Returns physical half arrays (time first):
    ``v (n)``, ``Dv (n, n)`` with ``Dv[i, j] = d_j v_i``, ``lapv (n)``,
    ``q``, ``Dq (n)``, ``vt (n)`` (the spectral time derivative) and
    optionally ``D2v (n, n, n)``.
    """
    n, d = grid.n, grid.n - 1
    nt, X = grid.nt, grid.Nn + 1
    x = grid.xn_half
    Hh = _bfft(np.asarray(H), d)
    tshape = grid.tangential_points
    nmodes = int(np.prod(tshape))
    Hh = Hh.reshape(nt, n, nmodes)
    xi_full = [np.broadcast_to(k, tshape).ravel() for k in grid.wavenumbers("boundary")]
    keep = np.ones(nmodes, bool)
    for ax, kk in enumerate(xi_full):
        N = tshape[ax]
        keep &= ~np.isclose(kk, np.pi * N / grid.tangential_lengths[ax] * -1.0)
    A_all = np.sqrt(sum(kk ** 2 for kk in xi_full))
    keep &= A_all > 0
    sel = np.nonzero(keep)[0]
    M = corrector_padding(grid, tol)
    tau = 2 * np.pi * np.fft.fftfreq(M, grid.dt)
    Ht = np.fft.fft(_extend_time(Hh[:, :, sel], M, nt), axis=0)  # (M, n, nsel)

    shapes = {"v": (n,), "Dv": (n, n), "lapv": (n,), "q": (), "Dq": (n,), "vt": (n,)}
    if second:
        shapes["D2v"] = (n, n, n)
    out = {k: np.zeros((nt,) + s + (nmodes, X), complex) for k, s in shapes.items()}
    step = max(1, chunk_elems // (M * X))
    for c0 in range(0, sel.size, step):
        idx = sel[c0:c0 + step]
        cols = slice(c0, c0 + idx.size)
        xi = [kk[idx][None, :] for kk in xi_full]
        sym = corrector_symbols(tau[:, None], xi, np.moveaxis(Ht[:, :, cols], 1, 0))
        A, B, delta = sym["A"], sym["B"], sym["delta"]
        A = np.broadcast_to(A, B.shape)
        basis = _profile_basis(A, B, delta, x)

        def realize(tr):
            val = sum(t[..., None] * e for t, e in zip(tr, basis))
            return np.fft.ifft(val, axis=0)[:nt]

        ik = [1j * kk for kk in xi]

        def apply(tr, j):
            return _profile_d(tr, A, B) if j == n - 1 else _profile_scale(tr, ik[j])

        for i, tr in enumerate(sym["v"]):
            out["v"][:, i, idx] = realize(tr)
            out["vt"][:, i, idx] = realize(_profile_scale(tr, 1j * tau[:, None]))
            first = [apply(tr, j) for j in range(n)]
            for j in range(n):
                out["Dv"][:, i, j, idx] = realize(first[j])
            d2 = _profile_d(first[n - 1], A, B)
            lap = _profile_add(d2, _profile_scale(tr, -A ** 2))
            out["lapv"][:, i, idx] = realize(lap)
            if second:
                for j in range(n):
                    for k in range(j, n):
                        val = realize(apply(first[j], k))
                        out["D2v"][:, i, j, k, idx] = val
                        out["D2v"][:, i, k, j, idx] = val
        q = sym["q"]
        out["q"][:, idx] = realize(q)
        for j in range(n):
            out["Dq"][:, j, idx] = realize(apply(q, j))
    res = {}
    for k, v in out.items():
        v = v.reshape(v.shape[:-2] + tshape + (X,))
        res[k] = _tifft(v, d)
    return res


# tangential mean sector ---------------------------------------------------------


def _antiderivative_even(a: np.ndarray, grid: Grid, parity: str = "even") -> np.ndarray:
    """``int_0^x a`` along x_n for samples whose reflection of ``parity`` is smooth."""
    N2 = 2 * grid.Nn
    k = 2 * np.pi * np.fft.fftfreq(N2, grid.hn)
    Ah = np.fft.fft(extend_array(a, parity), axis=-1)
    mean = Ah[..., :1] / N2
    inv = np.zeros_like(k, dtype=complex)
    ok = (k != 0) & ~np.isclose(np.abs(k), np.abs(k).max())
    inv[ok] = 1.0 / (1j * k[ok])
    G = np.fft.ifft(Ah * inv, axis=-1)[..., : grid.Nn + 1]
    G = G - G[..., :1]
    out = mean * grid.xn_half + G
    return np.real(out) if np.isrealobj(a) else out


def mean_sector_arrays(u0m: np.ndarray, fm: np.ndarray, gm: np.ndarray, hm: np.ndarray,
                       grid: Grid) -> dict:
    """Exact one-dimensional solve for the tangentially constant part of the data.

    Inputs depend on ``x_n`` only: ``u0m (n, X)``, ``fm (nt, n, X)``,
    ``gm (nt, X)`` and ``hm (nt, n)``.  The normal velocity
    ``u_n = -int_x^L g`` follows from the divergence, the tangential ones
    from the heat equation with Neumann datum ``-h_l`` and the pressure from
    the normal momentum balance anchored by the normal stress.
    """
    n, nt, X = grid.n, grid.nt, grid.Nn + 1
    tp = grid.tangential_points
    G = _antiderivative_even(gm, grid)
    un = G - G[..., -1:]
    unt = time_derivative(un, grid.dt)
    # int_0^x u_n = -(x int_x^L g + int_0^x s g(s) ds); both pieces have
    # smooth reflections, unlike u_n itself
    xs = grid.xn_half
    int_un = -(xs * (G[..., -1:] - G) + _antiderivative_even(xs * gm, grid, "odd"))
    gx = np.real(_normal_derivatives(gm, grid, "even", (1,))[0])
    u = np.zeros((nt, n, X), dtype=np.result_type(fm, float))
    Du = np.zeros((nt, n, n, X), dtype=u.dtype)
    lap = np.zeros((nt, n, X), dtype=u.dtype)
    D2 = np.zeros((nt, n, n, n, X), dtype=u.dtype)
    if n > 1:
        ones = (1,) * (n - 1)
        heat = heat_neumann_arrays(
            np.broadcast_to(u0m[: n - 1].reshape((n - 1,) + ones + (X,)), (n - 1,) + tp + (X,)),
            np.broadcast_to(fm[:, : n - 1].reshape((nt, n - 1) + ones + (X,)), (nt, n - 1) + tp + (X,)),
            np.broadcast_to(-hm[:, : n - 1].reshape((nt, n - 1) + ones), (nt, n - 1) + tp),
            grid)
        pick = (slice(None), slice(None)) + (0,) * (n - 1)
        u[:, : n - 1] = np.real(heat["u"][pick])
        Du[:, : n - 1, n - 1] = np.real(heat["dn"][pick])
        lap[:, : n - 1] = np.real(heat["dnn"][pick])
        D2[:, : n - 1, n - 1, n - 1] = lap[:, : n - 1]
    u[:, n - 1] = un
    Du[:, n - 1, n - 1] = gm
    lap[:, n - 1] = gx
    D2[:, n - 1, n - 1, n - 1] = gx
    rhs = fm[:, n - 1] - unt
    p = hm[:, n - 1:n] + gm[..., :1] + gm + _antiderivative_even(fm[:, n - 1], grid) \
        - time_derivative(int_un, grid.dt)
    Dp = np.zeros((nt, n, X), dtype=u.dtype)
    Dp[:, n - 1] = rhs + gx
    return {"u": u, "Du": Du, "lapu": lap, "D2u": D2, "p": p, "Dp": Dp}


# half-space pipeline --------------------------------------------------------------


def _tmean(a: np.ndarray, d: int) -> np.ndarray:
    return a.mean(axis=_taxes(a.ndim, d), keepdims=True)


def _bmean(a: np.ndarray, d: int) -> np.ndarray:
    return a.mean(axis=tuple(range(a.ndim - d, a.ndim)), keepdims=True)


def smooth_extension(a: np.ndarray) -> np.ndarray:
    """C^2 reflection of half-slab samples onto the doubled torus.

    ``a(-y) = chi(y) (6 a(y) - 8 a(2y) + 3 a(3y))`` matches the value and the
    first two normal derivatives at ``y = 0``; the cutoff ``chi`` equals one
    on ``[0, L/6]`` and vanishes beyond ``L/3`` so only sampled points are
    used.  The data are expected to have decayed near ``x_n = L``.
    """
    Nn = a.shape[-1] - 1
    out = np.zeros(a.shape[:-1] + (2 * Nn,), dtype=np.result_type(a, float))
    out[..., : Nn + 1] = a
    j = np.arange(1, Nn)
    r = 6.0 * j / Nn - 1.0
    chi = 1.0 - smooth_step(np.clip(r, 0.0, 1.0))
    ok = 3 * j <= Nn
    refl = np.zeros(a.shape[:-1] + (j.size,), dtype=out.dtype)
    jj = j[ok]
    refl[..., ok] = 6 * a[..., jj] - 8 * a[..., 2 * jj] + 3 * a[..., 3 * jj]
    refl = refl * chi
    out[..., 2 * Nn - j] = refl
    return out


def _extend_vector(a: np.ndarray, policy: ExtensionPolicy, axis: int) -> np.ndarray:
    comps = np.moveaxis(a, axis, 0)
    return np.moveaxis(np.stack([extend_array(c, p) for c, p in zip(comps, policy.parities)]), 0, axis)


def solve_stokes_arrays(u0: np.ndarray, f: np.ndarray, g: np.ndarray, h: np.ndarray, grid: Grid,
                        second: bool = False, tol: float = 1e-10) -> dict:
    """Half-space Stokes problem with stress data, assembled from its reduction.

    Shapes: ``u0 (n, *N', X)``, ``f (nt, n, *N', X)``, ``g (nt, *N', X)``,
    ``h (nt, n, *N')``.  Non-constant tangential modes go through the
    potential step, the whole-space solve and the boundary corrector; the
    tangential mean goes through :func:`mean_sector_arrays`.  Returns jets
    ``u, Du, lapu, (D2u), ut, p, Dp`` on the half slab.
    """
    n, d, nt = grid.n, grid.n - 1, grid.nt
    u0, f, g, h = (np.asarray(a, float) for a in (u0, f, g, h))
    u0m, fm, gm, hm = _tmean(u0, d), _tmean(f, d), _tmean(g, d), _bmean(h, d)
    u0, f, g, h = u0 - u0m, f - fm, g - gm, h - hm
    pol = ExtensionPolicy.velocity(n)
    axes = tuple(range(-n, 0))
    tj = _TorusJets(grid)
    k = _effective_wavenumbers(grid)
    k2 = sum(ki ** 2 for ki in k)
    inv = np.divide(1.0, k2, out=np.zeros_like(k2), where=k2 > 0)
    # potential step: -Delta phi = even extension of g (with the divergence
    # built from first-derivative multipliers, so div grad phi = -g exactly)
    gh = np.fft.fftn(extend_array(g, "even"), axes=axes)
    phih = gh * inv
    phith = time_derivative(phih, grid.dt)
    grad_phi0 = np.stack([np.real(tj.phys(phih[0], a)) for a in range(n)])
    u0t = _extend_vector(u0 + grad_phi0, pol, 0)
    fh = np.fft.fftn(smooth_extension(f), axes=axes)
    ik = [1j * ki for ki in k]
    ftil = fh + np.stack([ik[a] * (phith + gh) for a in range(n)], axis=1)
    uh, ph, uth = stokes_wholespace_arrays(u0t, np.real(np.fft.ifftn(ftil, axes=axes)), grid, rate=True)

    # w = u~ - grad phi on the torus
    wh = uh - np.stack([tj.mult(a) * phih for a in range(n)], axis=1)
    Dw0 = lambda i, j: np.real(tj.phys(wh[:, i], j)[..., 0])
    p0 = np.real(tj.phys(ph)[..., 0])
    H = np.empty_like(h)
    for i in range(n - 1):
        H[:, i] = h[:, i] + Dw0(n - 1, i) + Dw0(i, n - 1)
    H[:, n - 1] = h[:, n - 1] + 2 * Dw0(n - 1, n - 1) - p0
    cor = boundary_corrector_arrays(H, grid, tol=tol, second=second)

    jets = {"u": np.real(np.stack([tj.phys(wh[:, i]) for i in range(n)], 1)) + np.real(cor["v"])}
    jets["Du"] = np.real(np.stack([np.stack([tj.phys(wh[:, i], j) for j in range(n)], 1)
                                   for i in range(n)], 1)) + np.real(cor["Dv"])
    jets["lapu"] = np.real(np.stack([sum(tj.phys(wh[:, i], j, j) for j in range(n))
                                     for i in range(n)], 1)) + np.real(cor["lapv"])
    if second:
        D2 = np.empty((nt, n, n, n) + grid.shape("half_space"))
        for i in range(n):
            for j in range(n):
                for l in range(j, n):
                    D2[:, i, j, l] = D2[:, i, l, j] = np.real(tj.phys(wh[:, i], j, l))
        jets["D2u"] = D2 + np.real(cor["D2v"])
    jets["p"] = np.real(tj.phys(ph)) + np.real(cor["q"])
    jets["Dp"] = np.real(np.stack([tj.phys(ph, j) for j in range(n)], 1)) + np.real(cor["Dq"])

    mean = mean_sector_arrays(u0m.reshape(n, -1), fm.reshape(nt, n, -1), gm.reshape(nt, -1),
                              hm.reshape(nt, n), grid)
    ins = lambda a, lead: a.reshape(a.shape[: lead] + (1,) * d + a.shape[-1:])
    for key, lead in (("u", 2), ("Du", 3), ("lapu", 2), ("p", 1), ("Dp", 2), ("D2u", 4)):
        if key in jets:
            jets[key] = jets[key] + ins(mean[key], lead)
    # the torus part differentiates exactly through its evolution equation;
    # the corrector and the mean sector by finite differences
    wth = uth - np.stack([tj.mult(a) * phith for a in range(n)], axis=1)
    jets["ut"] = (np.real(np.stack([tj.phys(wth[:, i]) for i in range(n)], 1)) + np.real(cor["vt"])
                  + ins(time_derivative(mean["u"], grid.dt), 2))
    jets["H"] = H
    return jets


def stokes_residuals(jets: dict, u0: np.ndarray, f: np.ndarray, g: np.ndarray, h: np.ndarray,
                     grid: Grid) -> dict:
    """Relative residuals of a half-space Stokes solution.

    ``momentum`` (interior rows), ``divergence`` against ``g``, boundary
    ``stress`` against ``h``, ``initial`` against ``u0`` and ``trace``: the
    pressure rebuilt from its boundary trace and the normal gradient
    (eighth-order quadrature in ``x_n``) against the bulk pressure.
    """
    n = grid.n
    u, Du, p, Dp = jets["u"], jets["Du"], jets["p"], jets["Dp"]
    inner = (Ellipsis, slice(1, None))
    mom = jets["ut"] - jets["lapu"] + Dp - f
    div = np.trace(Du, axis1=1, axis2=2) - g
    stress = np.empty_like(h)
    for i in range(n - 1):
        stress[:, i] = -(Du[:, n - 1, i] + Du[:, i, n - 1])[..., 0]
    stress[:, n - 1] = (-2 * Du[:, n - 1, n - 1] + p)[..., 0]
    rebuilt = p[..., :1] + cumulative_lagrange(Dp[:, n - 1], grid.hn)
    return {
        "momentum": relative(_l2(mom[inner]), _l2(jets["ut"][inner]), _l2(jets["lapu"][inner]),
                             _l2(Dp[inner]), _l2(f[inner])),
        "divergence": relative(_l2(div), _l2(g), _l2(Du)),
        "stress": relative(_l2(stress - h), _l2(h), _l2(stress)),
        "initial": relative(_l2(u[0] - u0), _l2(u0), max(_l2(a) for a in u)),
        "trace": relative(_l2(rebuilt - p), _l2(p)),
    }


# data and solution containers -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class StokesData:
    """Initial velocity, body force, divergence and stress data on the half space."""

    u0: Field
    f: Field
    g: Field
    h: Field

    def __post_init__(self) -> None:
        checks = (("u0", self.u0, "half_space", False), ("f", self.f, "half_space", True),
                  ("g", self.g, "half_space", True), ("h", self.h, "boundary", True))
        for name, fld, dom, timed in checks:
            if fld.domain != dom or fld.timed != timed:
                raise ValueError(f"{name} must be a {'timed ' if timed else ''}{dom} field")

    @property
    def grid(self) -> Grid:
        return self.u0.grid

    @classmethod
    def from_arrays(cls, grid: Grid, u0, f, g, h) -> "StokesData":
        pol = ExtensionPolicy.velocity(grid.n)
        return cls(Field(grid, u0, "vector", "physical", "half_space", pol, False),
                   Field(grid, f, "vector", "physical", "half_space", pol, True),
                   Field(grid, g, "scalar", "physical", "half_space", None, True),
                   Field(grid, h, "vector", "physical", "boundary", None, True))

    @classmethod
    def zeros(cls, grid: Grid) -> "StokesData":
        n, nt = grid.n, grid.nt
        half, bnd = grid.shape("half_space"), grid.shape("boundary")
        return cls.from_arrays(grid, np.zeros((n,) + half), np.zeros((nt, n) + half),
                               np.zeros((nt,) + half), np.zeros((nt, n) + bnd))

    def arrays(self):
        return (np.asarray(self.u0.values), np.asarray(self.f.values),
                np.asarray(self.g.values), np.asarray(self.h.values))

    def scaled(self, lam: float) -> "StokesData":
        return StokesData.from_arrays(self.grid, *(lam * a for a in self.arrays()))

    def __add__(self, other: "StokesData") -> "StokesData":
        return StokesData.from_arrays(self.grid, *(a + b for a, b in zip(self.arrays(), other.arrays())))

    def compatibility_defect(self) -> float:
        """Relative size of ``div u0 - g(0)`` (Simpson-free: spectral x', one-sided x_n)."""
        u0, _, g, _ = self.arrays()
        d = self.grid.n - 1
        div = sum(np.real(_tifft(_tfft(u0[l], d) * m[..., None], d))
                  for l, m in enumerate(_tangential_multipliers(self.grid)))
        div = div + np.gradient(u0[-1], self.grid.hn, axis=-1, edge_order=2)
        return relative(_l2(div - g[0]), _l2(g[0]), _l2(np.gradient(u0[-1], self.grid.hn, axis=-1)))


@dataclass(eq=False)
class StokesSolution:
    u: Field
    p: Field
    p_grad: Field
    p_trace: Field
    diagnostics: dict
    jets: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {"grid": self.u.grid.to_dict(), "diagnostics": self.diagnostics}


def solve_stokes_halfspace(data: StokesData, grid: Grid | None = None, second: bool = False,
                           tol: float = 1e-10, compat_tol: float = 1e-6) -> StokesSolution:
    """Half-space Stokes system with stress boundary data.

    The solution is ``u = u~ + v - grad phi`` and ``p = p~ + q`` where
    ``phi`` removes the divergence, ``(u~, p~)`` solves the whole-space
    problem for the extended data and ``(v, q)`` corrects the boundary
    stress.  All five residuals are reported in ``diagnostics``.
    """
    grid = grid or data.grid
    arrs = data.arrays()
    defect = data.compatibility_defect()
    if defect > compat_tol and np.any(arrs[0]):
        warnings.warn(f"div u0 differs from g(0) (relative defect {defect:.2e})", RuntimeWarning)
    jets = solve_stokes_arrays(*arrs, grid, second=second, tol=tol)
    diag = stokes_residuals(jets, *arrs, grid)
    diag["compatibility_defect"] = defect
    pol = ExtensionPolicy.velocity(grid.n)
    u = Field(grid, jets["u"], "vector", "physical", "half_space", pol, True)
    p = Field(grid, jets["p"], "scalar", "physical", "half_space", None, True)
    pg = Field(grid, jets["Dp"], "vector", "physical", "half_space", pol.flipped(), True)
    pt = Field(grid, jets["p"][..., 0], "scalar", "physical", "boundary", None, True)
    return StokesSolution(u, p, pg, pt, diag, jets)


def solve_boundary_corrector(H: Field, grid: Grid | None = None, tol: float = 1e-10,
                             origin_tol: float = 1e-12) -> tuple[Field, Field, dict]:
    """Stress problem ``(v, q)`` with zero initial data and boundary datum ``H``.

    Content on the excluded tangential mean (where the symbols are singular
    at ``tau = 0``) is rejected.
    """
    grid = grid or H.grid
    if H.domain != "boundary" or not H.timed or H.rank != "vector":
        raise ValueError("H must be a timed vector field on the boundary")
    Hv = np.asarray(H.values)
    mean = _bmean(Hv, grid.n - 1)
    if np.max(np.abs(mean)) > origin_tol * max(1.0, np.max(np.abs(Hv))):
        raise ValueError("boundary datum has content on the excluded mode xi' = 0")
    cor = boundary_corrector_arrays(Hv, grid, tol=tol)
    jets = {k: np.real(v) for k, v in cor.items()}
    jets["vt"] = time_derivative(jets["v"], grid.dt)
    n = grid.n
    stress = np.empty_like(Hv)
    Dv, q = jets["Dv"], jets["q"]
    for i in range(n - 1):
        stress[:, i] = -(Dv[:, n - 1, i] + Dv[:, i, n - 1])[..., 0]
    stress[:, n - 1] = (-2 * Dv[:, n - 1, n - 1] + q)[..., 0]
    inner = (Ellipsis, slice(1, None))
    mom = jets["vt"] - jets["lapv"] + jets["Dq"]
    diag = {
        "momentum": relative(_l2(mom[inner]), _l2(jets["vt"][inner]), _l2(jets["lapv"][inner])),
        "divergence": relative(_l2(np.trace(Dv, axis1=1, axis2=2)), _l2(Dv)),
        "stress": relative(_l2(stress - Hv), _l2(Hv)),
    }
    pol = ExtensionPolicy.velocity(n)
    v = Field(grid, jets["v"], "vector", "physical", "half_space", pol, True)
    qf = Field(grid, q, "scalar", "physical", "half_space", None, True)
    return v, qf, diag


# seeded data ------------------------------------------------------------------------


def time_envelope(t: np.ndarray, t_max: float) -> np.ndarray:
    """Smooth ramp that vanishes to fourth order at ``t = 0``."""
    return np.sin(0.5 * np.pi * np.asarray(t) / t_max) ** 4


def _random_boundary_modes(rng, grid: Grid, count: int, kmax: int, mean: bool) -> np.ndarray:
    """Real trigonometric polynomial on the boundary grid with random coefficients."""
    coords = grid.coords("boundary")
    out = np.zeros(grid.shape("boundary"))
    base = [2 * np.pi / L for L in grid.tangential_lengths]
    for _ in range(count):
        ks = rng.integers(-kmax, kmax + 1, size=grid.n - 1)
        if not ks.any():
            ks[0] = 1
        phase = sum(b * k * c for b, k, c in zip(base, ks, coords))
        out = out + rng.normal() * np.cos(phase) + rng.normal() * np.sin(phase)
    if mean:
        out = out + rng.normal()
    return out / np.sqrt(count)


def random_stokes_data(grid: Grid, seed: int = 0, scale: float = 1.0, modes: int = 3,
                       kmax: int = 2, width: float = 1.0, with_g: bool = True) -> StokesData:
    """Seeded band-limited data compatible at ``t = 0`` (zero initial velocity).

    Every datum carries :func:`time_envelope`; normal profiles are Gaussians
    of ``width`` (even in ``x_n`` for ``g`` and ``f``) so they decay well
    inside the slab.
    """
    rng = np.random.default_rng(seed)
    n, nt = grid.n, grid.nt
    x = grid.xn_half / width
    env = time_envelope(grid.times, grid.t_max)
    wobble = 1.0 + 0.5 * np.cos(2 * np.pi * grid.times / grid.t_max + rng.uniform(0, 2 * np.pi))
    tt = (env * wobble).reshape((nt,) + (1,) * n)
    profiles = [np.exp(-x ** 2), (1 + 2 * x ** 2) * np.exp(-x ** 2), x ** 2 * np.exp(-x ** 2)]

    def bulk():
        out = np.zeros(grid.shape("half_space"))
        for prof in profiles:
            out = out + _random_boundary_modes(rng, grid, modes, kmax, True)[..., None] * prof \
                * rng.normal()
        return out

    f = np.stack([tt * bulk() for _ in range(n)], axis=1)
    g = tt * bulk() * (1.0 if with_g else 0.0)
    h = np.stack([tt[..., 0] * _random_boundary_modes(rng, grid, modes, kmax, True)
                  for _ in range(n)], axis=1)
    u0 = np.zeros((n,) + grid.shape("half_space"))
    return StokesData.from_arrays(grid, u0, scale * f, scale * g, scale * h)


def manufactured_stokes(grid: Grid, k: int = 1) -> tuple[StokesData, dict]:
    """Exact solution with forcing and stress data built from it (``n = 2`` or more).

    ``u = om(t) (d_n psi, 0, ..., -d_1 psi)`` with ``psi = cos(xi x_1) x_n^2 e^{-x_n^2}``
    and ``p = om(t) sin(xi x_1) e^{-x_n}``, ``om = sin(pi t / 2)^4`` and
    ``xi`` the ``k``-th wavenumber of the first tangential axis.  The data
    ``f, h`` follow from the equations; ``g = 0`` and ``u0 = 0``.
    """
    n, nt = grid.n, grid.nt
    xi = 2 * np.pi * k / grid.tangential_lengths[0]
    x = grid.coords("half_space")
    X, Y = x[0], x[-1]
    e = np.exp(-Y * Y)
    P, P1 = Y * Y * e, (2 * Y - 2 * Y ** 3) * e
    P2, P3 = (2 - 10 * Y * Y + 4 * Y ** 4) * e, (-24 * Y + 36 * Y ** 3 - 8 * Y ** 5) * e
    t = grid.times
    om = (np.sin(np.pi * t / 2) ** 4).reshape((nt,) + (1,) * (n + 1))
    omt = (2 * np.pi * np.sin(np.pi * t / 2) ** 3 * np.cos(np.pi * t / 2)).reshape(om.shape)
    c, s = np.cos(xi * X), np.sin(xi * X)
    shape = (n,) + grid.shape("half_space")
    U, lapU, Dp = np.zeros(shape), np.zeros(shape), np.zeros(shape)
    U[0], U[n - 1] = c * P1, xi * s * P
    lapU[0], lapU[n - 1] = c * (P3 - xi * xi * P1), xi * s * (P2 - xi * xi * P)
    pr = s * np.exp(-Y)
    Dp[0], Dp[n - 1] = xi * c * np.exp(-Y), -pr
    f = omt * U[None] - om * lapU[None] + om * Dp[None]
    h = np.zeros((nt, n) + grid.shape("boundary"))
    # stress: -(d_1 u_n + d_n u_1) = h_1 and -2 d_n u_n + p = h_n on x_n = 0
    h[:, 0] = (om[:, 0] * (-(xi * xi * c * P + c * P2)))[..., 0]
    h[:, n - 1] = (om[:, 0] * (-2 * xi * s * P1 + pr))[..., 0]
    data = StokesData.from_arrays(grid, np.zeros(shape), f, np.zeros((nt,) + grid.shape("half_space")), h)
    return data, {"u": om * U[None], "p": om[:, 0] * pr}


# maximal-regularity and trace norms ------------------------------------------------
#
# Half-space Besov norms are evaluated on the even extension across x_n = 0
# (one fixed extension operator, so ratios stay comparable between runs).  The
# L^1-in-time integrals use the trapezoid rule on [0, t_max].


@dataclass
class RatioReport:
    """Measured ratios LHS / RHS of an a priori estimate over an ensemble."""

    name: str
    ratios: list
    lhs: list
    rhs: list
    params: dict
    details: dict = field(default_factory=dict)

    @property
    def max_ratio(self) -> float:
        return float(max(self.ratios)) if self.ratios else 0.0

    @property
    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.ratios)))

    def to_dict(self) -> dict:
        return {"name": self.name, "max_ratio": self.max_ratio, "finite": self.finite,
                "ratios": [float(r) for r in self.ratios], "lhs": [float(v) for v in self.lhs],
                "rhs": [float(v) for v in self.rhs], "params": self.params, "details": self.details}


def _ratio(lhs: float, rhs: float) -> float:
    if rhs == 0.0:
        return 0.0 if lhs == 0.0 else math.inf
    return lhs / rhs


def _even_torus(a: np.ndarray) -> np.ndarray:
    return extend_array(np.asarray(a), "even")


def half_besov(a: np.ndarray, grid: Grid, params, timed: bool = False) -> np.ndarray | float:
    """Ḃ^s_{p,sigma} norm of a half-space array (components allowed).

    With ``timed`` the leading axis is time and one norm per sample is
    returned.
    """
    from .lp_besov import BesovParams, besov_norm_array, build_bank
    bp = BesovParams(params.s, params.p, params.sigma, "whole")
    bank = build_bank("annulus_phi", grid, domain="whole_space")
    arr = _even_torus(a)
    res = besov_norm_array(arr, grid, "whole_space", bp, bank, batch=timed)
    return res["norm"]


def l1_half_besov(a: np.ndarray, grid: Grid, params) -> float:
    """``L^1(0, T; Ḃ^s_{p,1})`` norm of timed half-space samples."""
    from .timeint import trapezoid_weights
    per_t = half_besov(a, grid, params, timed=True)
    return float(np.sum(trapezoid_weights(a.shape[0], grid.dt) * per_t))


def l1_boundary_besov(a: np.ndarray, grid: Grid, s: float, p: float) -> float:
    """``L^1(0, T; Ḃ^s_{p,1}(R^{n-1}))`` of timed boundary samples."""
    from .lp_besov import BesovParams, besov_norm_array
    from .timeint import trapezoid_weights
    per_t = besov_norm_array(np.asarray(a), grid, "boundary", BesovParams(s, p, 1.0, "boundary"),
                             batch=True)["norm"]
    return float(np.sum(trapezoid_weights(a.shape[0], grid.dt) * per_t))


TRACE_HORIZON = 64.0


def boundary_trace_norms(a: np.ndarray, grid: Grid, s: float, p: float) -> tuple[float, float]:
    """The two boundary norms of the stress data and the pressure trace.

    Returns ``(F, L)`` with ``F`` the ``F^{1/2-1/(2p)}_{1,1}(Ḃ^s_{p,1})``
    norm (time zero-extended outside ``[0, T]``, transform window at least
    ``TRACE_HORIZON``) and ``L`` the ``L^1(Ḃ^{s+1-1/p}_{p,1})`` norm.
    """
    from .lp_besov import BesovParams, MixedNormParams, mixed_norm_array
    mp = MixedNormParams(0.5 - 0.5 / p, 1.0, "triebel_F", BesovParams(s, p, 1.0, "boundary"))
    F = mixed_norm_array(np.asarray(a), grid, "boundary", mp, horizon=TRACE_HORIZON)["norm"]
    return float(F), l1_boundary_besov(a, grid, s + 1 - 1 / p, p)


def _even_jets(a: np.ndarray, grid: Grid, spatial_ndim: int | None = None):
    """Spectral hat of the even torus extension and the torus wavenumbers."""
    n = grid.n
    axes = tuple(range(-n, 0))
    ah = np.fft.fftn(_even_torus(a), axes=axes)
    return ah, axes, _torus_wavenumbers(grid)


def _grad_even(a: np.ndarray, grid: Grid, order: int = 1):
    """Gradient (``order=1``) or Hessian (``order=2``) of the even torus extension."""
    ah, axes, k = _even_jets(a, grid)
    mul = [derivative_multiplier(ki, 1, npts) for ki, npts in zip(k, grid.shape("whole_space"))]
    back = lambda b: extend_restrict(np.real(np.fft.ifftn(b, axes=axes)), grid)
    if order == 1:
        return np.stack([back(ah * m) for m in mul], axis=-grid.n - 1)
    k2 = [-(ki ** 2) for ki in k]
    rows = []
    for i in range(grid.n):
        row = []
        for j in range(grid.n):
            m = k2[i] if i == j else mul[i] * mul[j]
            row.append(back(ah * m))
        rows.append(np.stack(row, axis=-grid.n - 1))
    return np.stack(rows, axis=-grid.n - 2)


def extend_restrict(a: np.ndarray, grid: Grid) -> np.ndarray:
    return a[..., : grid.Nn + 1]


def grad_inverse_laplacian_even(g: np.ndarray, grid: Grid) -> np.ndarray:
    """``grad (-Delta)^{-1} g`` built from the even extension of ``g``."""
    ah, axes, k = _even_jets(g, grid)
    k2 = sum(ki ** 2 for ki in k)
    inv = np.divide(1.0, k2, out=np.zeros_like(k2), where=k2 > 0)
    mul = [derivative_multiplier(ki, 1, npts) for ki, npts in zip(k, grid.shape("whole_space"))]
    return np.stack([extend_restrict(np.real(np.fft.ifftn(ah * inv * m, axes=axes)), grid)
                     for m in mul], axis=-grid.n - 1)


def _default_besov(params):
    from .lp_besov import BesovParams
    if params is None:
        return BesovParams(0.0, 2.0, 1.0, "half")
    if not (-1 + 1 / params.p < params.s <= 0):
        raise ValueError(f"maximal regularity needs -1+1/p < s <= 0, got s={params.s}, p={params.p}")
    return params


def maximal_regularity_terms(data: StokesData, params=None, grid: Grid | None = None,
                             solution: StokesSolution | None = None) -> dict:
    """Every norm appearing on the two sides of the maximal-regularity estimate.

    ``D2u`` is the full Hessian; ``lapu`` (the Laplacian alone) is reported
    as well so both conventions can be compared.
    """
    params = _default_besov(params)
    grid = grid or data.grid
    s, p = params.s, params.p
    u0, f, g, h = data.arrays()
    sol = solution or solve_stokes_halfspace(data, grid, second=True)
    jets = sol.jets
    if "D2u" not in jets:
        raise ValueError("solution must carry second derivatives (second=True)")
    F_p, L_p = boundary_trace_norms(jets["p"][..., 0], grid, s, p)
    F_h, L_h = boundary_trace_norms(h, grid, s, p)
    gi = grad_inverse_laplacian_even(g, grid)
    lhs = {"ut": l1_half_besov(jets["ut"], grid, params),
           "D2u": l1_half_besov(jets["D2u"], grid, params),
           "lapu": l1_half_besov(jets["lapu"], grid, params),
           "grad_p": l1_half_besov(jets["Dp"], grid, params),
           "p_trace_F": F_p, "p_trace_L1B": L_p}
    rhs = {"u0": float(half_besov(u0, grid, params)),
           "f": l1_half_besov(f, grid, params),
           "grad_g": l1_half_besov(_grad_even(g, grid), grid, params),
           "dt_grad_inv_lap_g": l1_half_besov(time_derivative(gi, grid.dt), grid, params),
           "h_F": F_h, "h_L1B": L_h}
    return {"lhs": lhs, "rhs": rhs, "diagnostics": sol.diagnostics}


def _mr_totals(terms: dict) -> tuple[float, float, float]:
    L, R = terms["lhs"], terms["rhs"]
    common = L["ut"] + L["grad_p"] + L["p_trace_F"] + L["p_trace_L1B"]
    return common + L["D2u"], common + L["lapu"], sum(R.values())


def maximal_regularity_ratio(ensemble, params=None, scales=(1.0,)) -> RatioReport:
    """Empirical maximal-regularity constant over a data ensemble.

    For each member the ratio LHS / RHS is computed (zero data give 0).
    Each member is also re-solved at every factor in ``scales``; for the
    linear problem the ratios must not depend on the scale.
    """
    params = _default_besov(params)
    ratios, lhs_all, rhs_all, lap_ratios, scale_rows, per_member = [], [], [], [], [], []
    for data in ensemble:
        row = []
        for lam in scales:
            d = data if lam == 1.0 else data.scaled(lam)
            terms = maximal_regularity_terms(d, params)
            lhs, lhs_lap, rhs = _mr_totals(terms)
            row.append(_ratio(lhs, rhs))
            if lam == scales[0]:
                ratios.append(row[-1])
                lhs_all.append(lhs)
                rhs_all.append(rhs)
                lap_ratios.append(_ratio(lhs_lap, rhs))
                per_member.append({"lhs": terms["lhs"], "rhs": terms["rhs"]})
        scale_rows.append(row)
    spread = 0.0
    for row in scale_rows:
        r0 = row[0]
        if r0 > 0:
            spread = max(spread, max(abs(r - r0) / r0 for r in row))
    details = {"laplacian_convention_ratios": [float(r) for r in lap_ratios],
               "laplacian_convention_max": float(max(lap_ratios)) if lap_ratios else 0.0,
               "scales": list(scales), "scale_ratios": scale_rows, "scale_spread": spread,
               "terms": per_member}
    return RatioReport("maximal_regularity", ratios, lhs_all, rhs_all, params.to_dict(), details)


def _field_values(f) -> np.ndarray:
    if isinstance(f, Field):
        if f.domain != "half_space" or not f.timed:
            raise ValueError("expected a timed half-space field")
        return np.asarray(f.values)
    return np.asarray(f)


def trace_norms(f, params=None, grid: Grid | None = None, rows=None) -> tuple[float, float]:
    """``sup`` over sampled ``x_n`` of the two boundary norms of ``f(., ., x_n)``.

    ``rows`` selects the wall-normal sample indices (default: every fourth
    row in the lower half of the slab, where the data live).
    """
    params = _default_trace(params)
    grid = grid or f.grid
    a = _field_values(f)
    rows = _trace_rows(grid) if rows is None else rows
    Fs, Ls = [], []
    for r in rows:
        F, L = boundary_trace_norms(a[..., r], grid, params.s, params.p)
        Fs.append(F)
        Ls.append(L)
    return float(max(Fs)), float(max(Ls))


def _default_trace(params):
    from .lp_besov import BesovParams
    if params is None:
        return BesovParams(0.0, 2.0, 1.0, "half")
    if not params.s > -1 + 1 / params.p:
        raise ValueError("trace estimates need s > -1+1/p")
    return params


def _trace_rows(grid: Grid) -> list[int]:
    return list(range(0, grid.Nn // 2 + 1, max(1, grid.Nn // 16)))


def verify_sharp_trace(f, params=None, grid: Grid | None = None, variant: str = "derivative",
                       rows=None) -> RatioReport:
    """Trace norms of ``grad f`` (or ``f`` for ``variant='pressure'``) against the bulk norms.

    ``derivative``: LHS is the sup over ``x_n`` of both boundary norms of
    every first derivative, RHS is ``|d_t f| + |D^2 f|`` in ``L^1 Ḃ^s``.
    ``pressure``: LHS uses ``f`` itself, RHS is ``|grad f| + |d_t grad
    (-Delta)^{-1} f|``.
    """
    params = _default_trace(params)
    grid = grid or f.grid
    a = _field_values(f)
    if a.ndim != grid.n + 1:
        raise ValueError("verify_sharp_trace expects a timed scalar field")
    rows = _trace_rows(grid) if rows is None else rows
    if variant == "derivative":
        lhs_field = _grad_even(a, grid)
        rhs_terms = {"dt_f": l1_half_besov(time_derivative(a, grid.dt), grid, params),
                     "D2f": l1_half_besov(_grad_even(a, grid, order=2), grid, params)}
    elif variant == "pressure":
        lhs_field = a[:, None]
        gi = grad_inverse_laplacian_even(a, grid)
        rhs_terms = {"grad_f": l1_half_besov(_grad_even(a, grid), grid, params),
                     "dt_grad_inv_lap_f": l1_half_besov(time_derivative(gi, grid.dt), grid, params)}
    else:
        raise ValueError(f"unknown trace variant {variant!r}")
    sups = [0.0, 0.0]
    for c in range(lhs_field.shape[1]):
        F, L = trace_norms(lhs_field[:, c], params, grid, rows)
        sups[0] = max(sups[0], F)
        sups[1] = max(sups[1], L)
    lhs = sups[0] + sups[1]
    rhs = sum(rhs_terms.values())
    details = {"variant": variant, "F_norm": sups[0], "L1B_norm": sups[1], "rhs_terms": rhs_terms,
               "rows": list(rows)}
    return RatioReport("sharp_trace", [_ratio(lhs, rhs)], [lhs], [rhs], params.to_dict(), details)


def gaussian_trace_field(grid: Grid, seed: int = 0, t0: float | None = None,
                         width: float | None = None) -> np.ndarray:
    """Separable test field ``exp(-(t-t0)^2/w^2) cos(k.x' + phase) exp(-x_n^2)``.

    One tangential Fourier mode with seeded wavenumber and phase; the
    normal profile is even so the even extension is smooth.
    """
    rng = np.random.default_rng(seed)
    t0 = 0.5 * grid.t_max if t0 is None else t0
    width = 0.15 * grid.t_max if width is None else width
    coords = grid.coords("boundary")
    base = [2 * np.pi / L for L in grid.tangential_lengths]
    ks = rng.integers(1, 3, size=grid.n - 1)
    phase = sum(b * k * c for b, k, c in zip(base, ks, coords)) + rng.uniform(0, 2 * np.pi)
    tt = np.exp(-((grid.times - t0) / width) ** 2).reshape((-1,) + (1,) * grid.n)
    return tt * np.cos(phase)[None, ..., None] * np.exp(-grid.xn_half ** 2)
