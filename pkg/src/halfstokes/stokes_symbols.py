"""Boundary symbols of the half-space Stokes problem with stress data.

With ``A = |xi'|`` and ``B = sqrt(i tau + A^2)`` (principal branch)::

    D   = B^3 + A B^2 + 3 A^2 B - A^3
    m'  = 2 B (A + B) / D * i xi'
    m_n = -(A + B)(A^2 + B^2) / D

and the rescaled moduli ``b = sqrt(i s + a^-2 |z'|^2)``,
``d = sqrt(a^-2 i s + |z'|^2)`` used on dyadic annuli.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ORIGIN_TOL = 1e-12


class SymbolSingularity(ValueError):
    """Raised for evaluations at (or too close to) the origin (tau, xi') = (0, 0)."""


def _check_origin(tau, A, delta: float = ORIGIN_TOL) -> None:
    near = np.abs(tau) + np.asarray(A) ** 2 < delta
    if np.any(near):
        raise SymbolSingularity("symbol evaluated at the excluded origin (tau, xi') = (0, 0)")


def _modulus(xi_prime) -> np.ndarray:
    xi = np.asarray(xi_prime, dtype=float)
    if xi.ndim == 0:
        return np.abs(xi)
    return np.sqrt(np.sum(xi ** 2, axis=-1))


def symbol_B(tau, A) -> np.ndarray:
    """Principal square root of i tau + A^2 as a function of A = |xi'|."""
    B = np.sqrt(1j * np.asarray(tau, dtype=float) + np.asarray(A, dtype=float) ** 2)
    if np.any(B.real < -1e-15):
        raise AssertionError("principal branch violated: Re B < 0")
    return B


def symbol_D(tau, A, B=None) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    B = symbol_B(tau, A) if B is None else B
    return B ** 3 + A * B ** 2 + 3 * A ** 2 * B - A ** 3


def eval_B(tau, xi_prime) -> np.ndarray:
    """B(tau, xi'); ``xi_prime`` has the tangential components on its last axis."""
    return symbol_B(tau, _modulus(xi_prime))


def eval_D(tau, xi_prime, delta: float = ORIGIN_TOL) -> np.ndarray:
    A = _modulus(xi_prime)
    _check_origin(tau, A, delta)
    return symbol_D(tau, A)


def eval_m(tau, xi_prime, delta: float = ORIGIN_TOL):
    """Return ``(m', m_n)``; ``m'`` carries the tangential axis last."""
    xi = np.asarray(xi_prime, dtype=float)
    if xi.ndim == 0:
        xi = xi[None]
    A = _modulus(xi)
    _check_origin(tau, A, delta)
    B = symbol_B(tau, A)
    D = symbol_D(tau, A, B)
    mp = (2 * B * (A + B) / D)[..., None] * 1j * xi
    mn = -(A + B) * (A ** 2 + B ** 2) / D
    return mp, mn


def m_moduli(tau, A):
    """|m'| and |m_n| as functions of (tau, |xi'|)."""
    A = np.asarray(A, dtype=float)
    _check_origin(tau, A)
    B = symbol_B(tau, A)
    D = symbol_D(tau, A, B)
    return np.abs(2 * B * (A + B) / D) * A, np.abs((A + B) * (A ** 2 + B ** 2) / D)


def rescaled_b(sigma, zeta, a) -> np.ndarray:
    return np.sqrt(1j * np.asarray(sigma, float) + np.asarray(zeta, float) ** 2 / np.asarray(a, float) ** 2)


def rescaled_d(sigma, zeta, a) -> np.ndarray:
    return np.sqrt(1j * np.asarray(sigma, float) / np.asarray(a, float) ** 2 + np.asarray(zeta, float) ** 2)


# Monte-Carlo verification ----------------------------------------------------


@dataclass
class BoundReport:
    region: str
    samples: int
    min: float
    max: float
    argmin: dict
    argmax: dict
    bound_check: str
    bounds: tuple[float, float] | None = None

    def to_dict(self) -> dict:
        return {"region": self.region, "samples": self.samples, "min": self.min, "max": self.max,
                "argmin": self.argmin, "argmax": self.argmax, "bound_check": self.bound_check}

    @property
    def passed(self) -> bool:
        return self.bound_check == "pass"


def _annulus_samples(rng: np.random.Generator, count: int, dim: int):
    """Points with 1/2 < |x| < 2 in R^dim (moduli uniform on the log scale)."""
    r = 2.0 ** rng.uniform(-1, 1, count)
    if dim == 1:
        return r * rng.choice([-1.0, 1.0], count)
    v = rng.standard_normal((count, dim))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * r[:, None]


def _draw_pairs(rng, count, j_range, k_range, region):
    js = rng.integers(j_range[0], j_range[1] + 1, count)
    ks = rng.integers(k_range[0], k_range[1] + 1, count)
    if region == "time":
        bad = ks < 2 * js
        ks = np.where(bad, 2 * js + rng.integers(0, 4, count), ks)
    else:
        bad = ks >= 2 * js
        ks = np.where(bad, 2 * js - 1 - rng.integers(0, 4, count), ks)
    return js, ks


def _report(region, vals, meta, lo, hi) -> BoundReport:
    imin, imax = int(np.argmin(vals)), int(np.argmax(vals))
    pick = lambda i: {k: float(v[i]) for k, v in meta.items()}
    ok = bool(np.all(vals >= lo - 1e-15) and np.all(vals <= hi + 1e-15))
    return BoundReport(region, int(vals.size), float(vals[imin]), float(vals[imax]),
                       pick(imin), pick(imax), "pass" if ok else "fail", (lo, hi))


def verify_region_bounds(sample_count: int, j_range=(-4, 4), k_range=(-8, 12), seed: int = 0,
                         n: int = 2) -> dict[str, BoundReport]:
    """Bounds on |b| (time-dominated, k >= 2j) and |d| (space-dominated, k < 2j)."""
    if sample_count <= 0:
        raise ValueError("empty sample set")
    rng = np.random.default_rng(seed)
    out = {}
    upper = 20.0 ** 0.25
    for region, lo in (("time", 1 / np.sqrt(2)), ("space", 0.5)):
        js, ks = _draw_pairs(rng, sample_count, j_range, k_range, region)
        sigma = _annulus_samples(rng, sample_count, 1)
        zeta = _modulus(_annulus_samples(rng, sample_count, n - 1).reshape(sample_count, n - 1))
        if region == "time":
            a = 2.0 ** (ks / 2 - js)
            vals = np.abs(rescaled_b(sigma, zeta, a))
        else:
            a = 2.0 ** (js - ks / 2)
            vals = np.abs(rescaled_d(sigma, zeta, a))
        meta = {"sigma": sigma, "zeta": zeta, "k": ks, "j": js, "a": a}
        out["b" if region == "time" else "d"] = _report(region, vals, meta, lo, upper)
    return out


def max_b_on_boundary(points: int = 2001) -> float:
    """Dense-grid maximum of |b| over the closed annuli at k = 2j (a = 1)."""
    s = np.linspace(0.5, 2.0, points)
    z = np.linspace(0.5, 2.0, points)
    S, Z = np.meshgrid(s, z, indexing="ij")
    return float(np.abs(rescaled_b(S, Z, 1.0)).max())


def verify_multiplier_boundedness(region: str, samples: int, seed: int = 0, j_range=(-4, 4),
                                  k_range=(-8, 12), cap: float = 1e6, n: int = 2) -> dict[str, BoundReport]:
    """Monte-Carlo sups of |m'|, |m_n| and the minimum of |D| on scaled annuli."""
    if samples <= 0:
        raise ValueError("empty sample set")
    rng = np.random.default_rng(seed)
    js, ks = _draw_pairs(rng, samples, j_range, k_range, region)
    sigma = _annulus_samples(rng, samples, 1)
    zeta = _modulus(_annulus_samples(rng, samples, n - 1).reshape(samples, n - 1))
    tau = 2.0 ** ks * sigma
    A = 2.0 ** js * zeta
    mp, mn = m_moduli(tau, A)
    # |D| compared on the parabolic scale: D is homogeneous of degree 3 in B ~ lambda
    lam = np.maximum(np.sqrt(np.abs(tau)), A)
    dmin = np.abs(symbol_D(tau, A)) / lam ** 3
    meta = {"tau": tau, "xi": A, "k": ks, "j": js}
    return {"m_prime": _report(region, mp, meta, 0.0, cap),
            "m_n": _report(region, mn, meta, 0.0, cap),
            "D_scaled": _report(region, dmin, meta, 1e-300, np.inf)}
