"""Time discretization helpers shared by the linear solvers.

* exponential time differencing for ``y' = -lam y + F(t)`` with a cubic
  Lagrange interpolant of the sampled forcing (fourth order in ``dt``),
* fourth-order finite differences on a uniform time grid,
* cumulative trapezoid integrals.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.integrate import cumulative_trapezoid

_SERIES_CUT = 2.0
_SERIES_TERMS = 40


def phi_integrals(z, order: int = 3) -> np.ndarray:
    """``I_m(z) = int_0^1 exp(-z (1 - s)) s^m ds`` for ``m = 0..order``.

    Small ``|z|`` uses the power series ``m! sum_k (-z)^k / (m+k+1)!``; the
    upward recurrence ``I_m = (1 - m I_{m-1}) / z`` is stable otherwise.
    Returns an array with a new leading axis of length ``order + 1``.
    """
    z = np.asarray(z, dtype=complex if np.iscomplexobj(z) else float)
    out = np.empty((order + 1,) + z.shape, dtype=z.dtype)
    small = np.abs(z) < _SERIES_CUT
    zs = np.where(small, z, 0.0)
    zl = np.where(small, 1.0, z)
    i0 = -np.expm1(-zl) / zl
    prev = i0
    out[0] = i0
    for m in range(1, order + 1):
        prev = (1.0 - m * prev) / zl
        out[m] = prev
    for m in range(order + 1):
        acc = np.zeros_like(zs)
        term = np.ones_like(zs) / math.factorial(m + 1)
        for k in range(_SERIES_TERMS):
            acc = acc + term
            term = term * (-zs) / (m + k + 2)
        out[m] = np.where(small, math.factorial(m) * acc, out[m])
    return out


def _lagrange_monomials(nodes) -> np.ndarray:
    """Rows: monomial coefficients (ascending) of the Lagrange basis on ``nodes``."""
    V = np.vander(np.asarray(nodes, float), increasing=True)
    return np.linalg.inv(V).T


# stencils used on the step [t_k, t_k+1]; offsets relative to k
_STENCILS = {"first": (0, 1, 2, 3), "interior": (-1, 0, 1, 2), "last": (-2, -1, 0, 1)}
_BASIS = {key: _lagrange_monomials(v) for key, v in _STENCILS.items()}


def _stencil_for(k: int, nt: int) -> str:
    if nt < 4:
        raise ValueError("cubic forcing interpolation needs at least 4 time samples")
    if k == 0:
        return "first"
    if k + 2 > nt - 1:
        return "last"
    return "interior"


def etd_weights(lam, dt: float) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Propagator ``exp(-lam dt)`` and per-stencil forcing weights.

    ``y_{k+1} = E y_k + sum_i W[i] F_{k + offset_i}`` reproduces the exact
    solution whenever ``F`` is a cubic polynomial in time.
    """
    z = np.asarray(lam) * dt
    E = np.exp(-z)
    I = phi_integrals(z, 3)
    weights = {}
    for key, C in _BASIS.items():
        W = dt * np.tensordot(C, I, axes=(1, 0))
        weights[key] = W
    return E, weights


def etd_solve(lam, y0, F, dt: float) -> np.ndarray:
    """Integrate ``y' = -lam y + F`` on the sample times of ``F`` (time axis 0).

    ``lam`` broadcasts against ``y0`` and each ``F[k]``.  Returns the
    trajectory with ``F.shape`` (time first).
    """
    F = np.asarray(F)
    nt = F.shape[0]
    E, W = etd_weights(lam, dt)
    dtype = np.result_type(F, y0, E)
    out = np.empty((nt,) + np.broadcast_shapes(F.shape[1:], np.shape(y0)), dtype=dtype)
    out[0] = y0
    for k in range(nt - 1):
        key = _stencil_for(k, nt)
        offs = _STENCILS[key]
        acc = E * out[k]
        for w, o in zip(W[key], offs):
            acc = acc + w * F[k + o]
        out[k + 1] = acc
    return out


def etd_solve_derivative_forcing(lam, y0, G, dt: float) -> np.ndarray:
    """Integrate ``y' = -lam y + G'(t)`` from the samples of ``G`` alone.

    On each step ``int e^{-lam(t1-s)} G'(s) ds`` is integrated by parts into
    ``G(t1) - e^{-lam dt} G(t0) - lam int e^{-lam(t1-s)} G(s) ds``, so the
    data are never differentiated.
    """
    G = np.asarray(G)
    nt = G.shape[0]
    lam = np.asarray(lam)
    E, W = etd_weights(lam, dt)
    dtype = np.result_type(G, y0, E)
    out = np.empty((nt,) + np.broadcast_shapes(G.shape[1:], np.shape(y0)), dtype=dtype)
    out[0] = y0
    for k in range(nt - 1):
        key = _stencil_for(k, nt)
        conv = 0.0
        for w, o in zip(W[key], _STENCILS[key]):
            conv = conv + w * G[k + o]
        out[k + 1] = E * out[k] + G[k + 1] - E * G[k] - lam * conv
    return out


# finite differences --------------------------------------------------------

_C4 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_F0 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
_F1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0


def time_derivative(a: np.ndarray, dt: float, axis: int = 0) -> np.ndarray:
    """Fourth-order finite-difference derivative along ``axis`` (central inside)."""
    a = np.moveaxis(np.asarray(a), axis, 0)
    nt = a.shape[0]
    if nt < 5:
        raise ValueError("fourth-order differences need at least 5 samples")
    out = np.empty_like(a, dtype=np.result_type(a, float))
    out[2:-2] = sum(c * a[i:nt - 4 + i] for i, c in enumerate(_C4) if c != 0.0)
    out[0] = np.tensordot(_F0, a[:5], axes=(0, 0))
    out[1] = np.tensordot(_F1, a[:5], axes=(0, 0))
    out[-1] = -np.tensordot(_F0, a[::-1][:5], axes=(0, 0))
    out[-2] = -np.tensordot(_F1, a[::-1][:5], axes=(0, 0))
    return np.moveaxis(out / dt, 0, axis)


def cumulative_integral(a: np.ndarray, dt: float, axis: int = 0) -> np.ndarray:
    """``int_0^t a`` by the trapezoid rule, zero at the first sample."""
    return cumulative_trapezoid(a, dx=dt, axis=axis, initial=0.0)


def trapezoid_weights(nt: int, dt: float) -> np.ndarray:
    w = np.full(nt, dt)
    w[0] = w[-1] = dt / 2
    return w


def cumulative_lagrange(a: np.ndarray, h: float, axis: int = -1, points: int = 8) -> np.ndarray:
    """High-order ``int_0^x a`` on a uniform grid.

    Each cell integral uses the Lagrange interpolant through the ``points``
    nearest samples (shifted inward at the ends), giving order ``points``.
    """
    a = np.moveaxis(np.asarray(a), axis, -1)
    N = a.shape[-1]
    if N < points:
        raise ValueError("not enough samples for the requested order")
    cells = np.empty(a.shape[:-1] + (N - 1,), dtype=np.result_type(a, float))
    cache: dict[int, np.ndarray] = {}
    for i in range(N - 1):
        start = min(max(i - points // 2 + 1, 0), N - points)
        off = i - start
        if off not in cache:
            nodes = np.arange(points, dtype=float) - off
            C = _lagrange_monomials(nodes)
            mono = 1.0 / np.arange(1, points + 1)  # int_0^1 s^m ds
            cache[off] = C @ mono
        cells[..., i] = a[..., start:start + points] @ cache[off]
    out = np.concatenate([np.zeros(a.shape[:-1] + (1,)), np.cumsum(cells, axis=-1)], axis=-1) * h
    return np.moveaxis(out, -1, axis)
