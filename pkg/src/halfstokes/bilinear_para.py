"""Bony paraproducts and empirical constants of the product estimates.

The decomposition acts on torus arrays (``whole_space`` or ``boundary``
lattices).  With ``P_k = zeta_{k-3}`` (all blocks up to ``k - 3`` and the
mean)::

    f g = sum_k (phi_k f)(P_k g) + sum_k (P_k f)(phi_k g)
          + sum_k sum_{|l-k|<=2} (phi_k f)(phi_l g) + f_0 g_0

``high_low`` is the first sum, ``low_high`` the second plus the product of
the means, ``high_high`` the resonant sum.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid_field import Field, Grid, extend_array, restrict_array
from .lp_besov import (BesovParams, DyadicBank, MixedNormParams, besov_norm_array, build_bank,
                       lowpass_multiplier, lp_norm, mixed_norm_array)
from .linear_solvers import RatioReport, _ratio, half_besov

BILINEAR_KINDS = ("product_s_positive", "critical_halfspace", "div_curl", "space_time_double_bony",
                  "banach_algebra")


@dataclass(eq=False)
class Paraproduct:
    low_high: np.ndarray
    high_low: np.ndarray
    high_high: np.ndarray
    bank: DyadicBank
    truncation: dict = field(default_factory=dict)

    def total(self) -> np.ndarray:
        return self.low_high + self.high_low + self.high_high


def _spatial(a: np.ndarray, grid: Grid, domain: str):
    d = grid.ndim(domain)
    axes = tuple(range(a.ndim - d, a.ndim))
    return axes


def bony_decompose(f, g, bank: DyadicBank | None = None, grid: Grid | None = None,
                   domain: str | None = None, coverage_tol: float = 1e-12) -> Paraproduct:
    """Split ``f g`` into the three paraproduct pieces.

    ``f, g`` are physical Fields on a torus domain (or arrays with ``grid``
    and ``domain``).  The bank must cover every nonzero lattice frequency,
    otherwise the resummation cannot be exact and a ValueError is raised.
    """
    if isinstance(f, Field):
        if f.domain == "half_space" or f.state != "physical":
            raise ValueError("bony_decompose needs physical torus fields")
        grid, domain = f.grid, f.domain
        f, g = np.asarray(f.values), np.asarray(g.values)
    if grid is None or domain is None:
        raise ValueError("arrays need an explicit grid and domain")
    f, g = np.asarray(f, float), np.asarray(g, float)
    bank = bank or build_bank("annulus_phi", grid, domain=domain)
    r = bank.radius
    defect = float(np.max(np.abs(bank.coverage()[r > 0] - 1.0)))
    if defect > coverage_tol:
        raise ValueError(f"bank leaves lattice frequencies uncovered (defect {defect:.2e})")
    axes = _spatial(f, grid, domain)
    fh, gh = np.fft.fftn(f, axes=axes), np.fft.fftn(g, axes=axes)
    back = lambda a: np.real(np.fft.ifftn(a, axes=axes))
    fb = {k: back(fh * bank.multiplier(k)) for k in bank.indices}
    gb = {k: back(gh * bank.multiplier(k)) for k in bank.indices}
    z = (r == 0)
    f0, g0 = back(fh * z), back(gh * z)
    hl = np.zeros(np.broadcast_shapes(f.shape, g.shape))
    lh = f0 * g0
    hh = np.zeros_like(hl)
    for k in bank.indices:
        low = lowpass_multiplier(r, k - 3)
        hl = hl + fb[k] * back(gh * low)
        lh = lh + back(fh * low) * gb[k]
        for l in range(k - 2, k + 3):
            if l in gb:
                hh = hh + fb[k] * gb[l]
    prod = f * g
    resid = float(np.max(np.abs(hl + lh + hh - prod)))
    scale = float(np.max(np.abs(prod))) or 1.0
    return Paraproduct(lh, hl, hh, bank, {"coverage_defect": defect, "resummation": resid / scale})


# seeded generators -----------------------------------------------------------------


def _modes(rng, grid: Grid, domain: str, kmax: int, count: int):
    coords = grid.coords(domain)
    if domain == "whole_space":
        periods = grid.tangential_lengths + (2 * grid.Ln,)
    else:
        periods = grid.tangential_lengths
    base = [2 * np.pi / L for L in periods]
    out = np.zeros(grid.shape(domain))
    for _ in range(count):
        ks = rng.integers(-kmax, kmax + 1, size=len(periods))
        if not ks.any():
            ks[0] = 1
        ph = sum(b * k * c for b, k, c in zip(base, ks, coords)) + rng.uniform(0, 2 * np.pi)
        out = out + rng.normal() * np.cos(ph)
    return out / math.sqrt(count)


def random_band_limited(grid: Grid, domain: str = "whole_space", seed: int = 0, kmax: int = 3,
                        modes: int = 6, even: bool = False) -> np.ndarray:
    """Seeded trigonometric polynomial on a torus lattice.

    ``even`` symmetrises in ``x_n`` so the half-space restriction has a
    smooth even extension.
    """
    a = _modes(np.random.default_rng(seed), grid, domain, kmax, modes)
    if even:
        if domain != "whole_space":
            raise ValueError("even symmetrisation needs the whole-space lattice")
        a = 0.5 * (a + np.roll(a[..., ::-1], 1, axis=-1))
    return a


def divfree_curlfree_pair(grid: Grid, seed: int = 0, kmax: int = 3, modes: int = 6):
    """``f`` = Leray projection of seeded noise, ``g = grad chi`` (torus arrays)."""
    rng = np.random.default_rng(seed)
    n = grid.n
    noise = np.stack([_modes(rng, grid, "whole_space", kmax, modes) for _ in range(n)])
    chi = _modes(rng, grid, "whole_space", kmax, modes)
    axes = tuple(range(-n, 0))
    k = grid.wavenumbers("whole_space")
    k2 = sum(ki ** 2 for ki in k)
    inv = np.divide(1.0, k2, out=np.zeros_like(k2), where=k2 > 0)
    nh = np.fft.fftn(noise, axes=axes)
    dot = sum(k[a] * nh[a] for a in range(n))
    f = np.real(np.fft.ifftn(np.stack([nh[a] - k[a] * dot * inv for a in range(n)]), axes=axes))
    ch = np.fft.fftn(chi, axes=axes)
    g = np.real(np.fft.ifftn(np.stack([1j * k[a] * ch for a in range(n)]), axes=axes))
    return f, g


def structure_defects(f: np.ndarray, g: np.ndarray, grid: Grid) -> dict:
    """Spectral ``div f`` and ``curl g`` relative to the field sizes."""
    n = grid.n
    axes = tuple(range(-n, 0))
    k = grid.wavenumbers("whole_space")
    fh, gh = np.fft.fftn(f, axes=axes), np.fft.fftn(g, axes=axes)
    div = np.real(np.fft.ifftn(sum(1j * k[a] * fh[a] for a in range(n)), axes=axes))
    curl = 0.0
    for a in range(n):
        for b in range(a + 1, n):
            c = np.real(np.fft.ifftn(1j * k[a] * gh[b] - 1j * k[b] * gh[a], axes=axes))
            curl = max(curl, float(np.max(np.abs(c))))
    kmax = max(float(np.max(np.abs(ki))) for ki in k)
    return {"div_f": float(np.max(np.abs(div))) / (max(float(np.max(np.abs(f))), 1e-300) * kmax),
            "curl_g": curl / (max(float(np.max(np.abs(g))), 1e-300) * kmax)}


def _time_profile(grid: Grid, rng) -> np.ndarray:
    t = grid.times / grid.t_max
    c, w = rng.uniform(0.3, 0.7), rng.uniform(0.1, 0.2)
    return np.exp(-((t - c) / w) ** 2)


def generate_ensemble(kind: str, grid: Grid, count: int = 8, seed: int = 0, kmax: int = 3) -> list:
    """Seeded input pairs for :func:`verify_bilinear`."""
    if kind not in BILINEAR_KINDS:
        raise ValueError(f"unknown bilinear kind {kind!r}")
    out = []
    for m in range(count):
        s = seed * 1000 + m
        if kind == "product_s_positive":
            out.append((random_band_limited(grid, "whole_space", 2 * s, kmax),
                        random_band_limited(grid, "whole_space", 2 * s + 1, kmax)))
        elif kind == "critical_halfspace":
            out.append((restrict_array(random_band_limited(grid, "whole_space", 2 * s, kmax, even=True)),
                        restrict_array(random_band_limited(grid, "whole_space", 2 * s + 1, kmax, even=True))))
        elif kind == "div_curl":
            out.append(divfree_curlfree_pair(grid, s, kmax))
        else:
            rng = np.random.default_rng(s)
            tshape = (grid.nt,) + (1,) * (grid.n - 1)
            F = _time_profile(grid, rng).reshape(tshape) * random_band_limited(grid, "boundary", 2 * s, kmax)
            G = _time_profile(grid, rng).reshape(tshape) * random_band_limited(grid, "boundary", 2 * s + 1, kmax)
            out.append((F, G))
    return out


# estimates ---------------------------------------------------------------------------


def _torus_besov(a: np.ndarray, grid: Grid, domain: str, s: float, p: float, sigma: float = 1.0) -> float:
    return float(besov_norm_array(a, grid, domain, BesovParams(s, p, sigma, "whole"))["norm"])


def _lp(a: np.ndarray, grid: Grid, domain: str, p: float) -> float:
    d = grid.ndim(domain)
    if math.isinf(p):
        return float(np.max(np.abs(a)))
    return float(lp_norm(np.asarray(a)[None], p, grid.cell_volume(domain), d)[0])


def _half(a: np.ndarray, grid: Grid, s: float, p: float) -> float:
    return float(half_besov(a, grid, BesovParams(s, p, 1.0, "half")))


def _params(kind: str, grid: Grid, params: dict | None) -> dict:
    n = grid.n
    par = {"p": float(n)}
    if kind == "product_s_positive":
        par.update(s=0.5, sigma=1.0)
    par.update(params or {})
    p = par["p"]
    if kind == "product_s_positive" and not par["s"] > 0:
        raise ValueError("product_s_positive needs s > 0")
    if kind == "critical_halfspace" and not 1 <= p < 2 * n:
        raise ValueError(f"critical_halfspace needs 1 <= p < 2n, got p={p}")
    if kind == "div_curl" and not 1 <= p < math.inf:
        raise ValueError("div_curl needs 1 <= p < inf")
    if kind in ("space_time_double_bony", "banach_algebra") and not 1 < p < 2 * n - 1:
        raise ValueError(f"{kind} needs 1 < p < 2n-1, got p={p}")
    return par


def _space_time_norms(F: np.ndarray, grid: Grid, p: float) -> dict:
    n = grid.n
    r = 0.5 - 0.5 / p
    lo = BesovParams(-1 + n / p, p, 1.0, "boundary")
    hi = BesovParams((n - 1) / p, p, 1.0, "boundary")
    mixed = lambda kind, rr, rho, sp: mixed_norm_array(F, grid, "boundary", MixedNormParams(rr, rho, kind, sp))["norm"]
    return {"B1": mixed("besov_B_tilde", r, 1.0, lo), "Binf": mixed("besov_B_tilde", r, math.inf, lo),
            "L1": mixed("lebesgue_L_tilde", 0.0, 1.0, hi), "Linf": mixed("lebesgue_L_tilde", 0.0, math.inf, hi)}


def bilinear_terms(kind: str, f: np.ndarray, g: np.ndarray, grid: Grid, params: dict | None = None) -> tuple:
    """``(lhs, rhs, info)`` of one product estimate for a single pair."""
    par = _params(kind, grid, params)
    n, p = grid.n, par["p"]
    info = {}
    if kind == "product_s_positive":
        s, sig = par["s"], par["sigma"]
        q = 2 * p  # 1/p = 1/r1 + 1/r2 = 1/q1 + 1/q2 with all four equal to 2p
        lhs = _torus_besov(f * g, grid, "whole_space", s, p, sig)
        a = _torus_besov(f, grid, "whole_space", s, q, sig) * _lp(g, grid, "whole_space", q)
        b = _lp(f, grid, "whole_space", q) * _torus_besov(g, grid, "whole_space", s, q, sig)
        rhs = a + b
    elif kind == "critical_halfspace":
        lhs = _half(f * g, grid, -1 + n / p, p)
        rhs = _half(f, grid, -1 + n / p, p) * _half(g, grid, n / p, p)
    elif kind == "div_curl":
        info = structure_defects(f, g, grid)
        fh, gh = restrict_array(f), restrict_array(g)
        lhs = _half(np.sum(fh * gh, axis=0), grid, -1 + n / p, p)
        rhs = _half(fh, grid, -1 + n / p, p) * _half(gh, grid, n / p, p)
    elif kind == "space_time_double_bony":
        Nf, Ng, Nfg = (_space_time_norms(a, grid, p) for a in (f, g, f * g))
        lhs = Nfg["B1"]
        rhs = (Nf["B1"] + Nf["L1"]) * (Ng["Binf"] + Ng["Linf"])
        info = {"F": Nf, "G": Ng, "FG": Nfg}
    else:  # banach_algebra
        Nf, Ng, Nfg = (_space_time_norms(a, grid, p) for a in (f, g, f * g))
        lhs = Nfg["Linf"]
        rhs = Nf["Linf"] * Ng["Linf"]
    return float(lhs), float(rhs), info


def verify_bilinear(kind: str, ensemble, params: dict | None = None, grid: Grid | None = None) -> RatioReport:
    """Measured constant ``max LHS / RHS`` of a product estimate over ``ensemble``.

    The constants are not specified, so only non-finite ratios count as a
    failure (``report.finite``).
    """
    if grid is None:
        raise ValueError("verify_bilinear needs the grid of the ensemble")
    par = _params(kind, grid, params)
    ratios, L, R, rows = [], [], [], []
    for f, g in ensemble:
        lhs, rhs, info = bilinear_terms(kind, f, g, grid, par)
        ratios.append(_ratio(lhs, rhs))
        L.append(lhs)
        R.append(rhs)
        rows.append(info)
    details = {"members": rows}
    if kind == "div_curl" and rows:
        details["max_div_f"] = max(r["div_f"] for r in rows)
        details["max_curl_g"] = max(r["curl_g"] for r in rows)
    return RatioReport(f"bilinear_{kind}", ratios, L, R, dict(par), details)


def p_trend(grid: Grid, p_values, count: int = 4, seed: int = 0) -> dict:
    """Measured constants of the generic and the div-curl critical estimates as ``p`` varies.

    Informative only: the generic ratio may grow as ``p`` nears ``2n``,
    the div-curl one should not.
    """
    generic, structured = [], []
    pairs = generate_ensemble("div_curl", grid, count, seed)
    generic_pairs = [(restrict_array(np.sum(f, axis=0)), restrict_array(np.sum(g, axis=0))) for f, g in pairs]
    for p in p_values:
        structured.append(verify_bilinear("div_curl", pairs, {"p": p}, grid).max_ratio)
        if p < 2 * grid.n:
            generic.append(verify_bilinear("critical_halfspace", generic_pairs, {"p": p}, grid).max_ratio)
        else:
            generic.append(float("nan"))
    return {"p": list(p_values), "generic": generic, "div_curl": structured}
