"""Littlewood-Paley banks and Besov / Triebel / Chemin-Lerner norms.

All multipliers are built from one profile ``h`` on the dyadic log-scale:
``phi_j(xi) = h(log2|xi| - j)`` with ``sum_j h(x - j) = 1`` and
``supp h = (-1, 1)``.  The smooth step behind ``h`` is the usual ratio of
``exp(-1/x)`` mollifiers.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .grid_field import ExtensionPolicy, Field, Grid, extend_array

BANK_KINDS = ("annulus_phi", "lowpass_zeta", "separated_Phi", "temporal_psi")
MIXED_KINDS = ("triebel_F", "besov_B_tilde", "lebesgue_L_tilde")


# profile -------------------------------------------------------------------


def smooth_step(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = (x > 0) & (x < 1)
    xi = x[inside]
    a = np.exp(-1.0 / xi)
    b = np.exp(-1.0 / (1.0 - xi))
    out[inside] = a / (a + b)
    out[x >= 1] = 1.0
    return out


def bump(x):
    """Log-scale profile with support (-1, 1) and sum_j bump(x - j) = 1."""
    x = np.asarray(x, dtype=float)
    return np.where(x <= 0, smooth_step(x + 1.0), 1.0 - smooth_step(x))


def _log2_abs(r):
    r = np.abs(np.asarray(r, dtype=float))
    with np.errstate(divide="ignore"):
        return np.where(r > 0, np.log2(np.where(r > 0, r, 1.0)), -np.inf)


def annulus_multiplier(r, j: int):
    """phi_j(r) = h(log2 r - j); zero at r = 0."""
    x = _log2_abs(r) - j
    out = np.zeros(np.shape(x))
    live = np.abs(x) < 1
    out[live] = bump(x[live])
    return out


def lowpass_multiplier(r, m: int):
    """zeta_m(r) = sum_{l <= m} phi_l(r) plus the zero mode: 1 on |r| <= 2^m."""
    x = _log2_abs(r) - m
    out = np.ones(np.shape(x))
    mid = (x > 0) & (x < 1)
    out[mid] = 1.0 - smooth_step(x[mid])
    out[x >= 1] = 0.0
    return out


def separated_multiplier(a, b, m: int):
    """phi_m(|xi'|) zeta_{m-1}(xi_n) + zeta_m(|xi'|) phi_m(xi_n)."""
    return (annulus_multiplier(a, m) * lowpass_multiplier(b, m - 1)
            + lowpass_multiplier(a, m) * annulus_multiplier(b, m))


# banks ---------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DyadicBank:
    """Truncated family of dyadic multipliers on a fixed frequency lattice.

    ``radius`` is |xi| (or |tau|) on the lattice; separated banks also carry
    the tangential and normal moduli.
    """

    kind: str
    j_min: int
    j_max: int
    radius: np.ndarray
    tangential: np.ndarray | None = None
    normal: np.ndarray | None = None

    @property
    def indices(self) -> range:
        return range(self.j_min, self.j_max + 1)

    def multiplier(self, j: int) -> np.ndarray:
        if j not in self.indices:
            raise ValueError(f"block index {j} outside [{self.j_min}, {self.j_max}]")
        if self.kind in ("annulus_phi", "temporal_psi"):
            return annulus_multiplier(self.radius, j)
        if self.kind == "lowpass_zeta":
            return lowpass_multiplier(self.radius, j)
        return separated_multiplier(self.tangential, self.normal, j)

    def coverage(self) -> np.ndarray:
        """Pointwise sum of the decomposing multipliers."""
        if self.kind == "lowpass_zeta":
            raise ValueError("low-pass banks do not decompose")
        return sum(self.multiplier(j) for j in self.indices)

    def block_of(self, r) -> np.ndarray:
        return np.floor(_log2_abs(r))


def _lattice_extent(radius: np.ndarray) -> tuple[float, float]:
    nz = radius[radius > 0]
    return float(nz.min()), float(nz.max())


def _resolve_range(kind: str, f0: float, f1: float, index_range) -> tuple[int, int]:
    if index_range is None:
        return math.floor(math.log2(f0)), math.ceil(math.log2(f1))
    j0, j1 = int(index_range[0]), int(index_range[1])
    if j0 > j1:
        raise ValueError("empty index range")
    if kind == "lowpass_zeta":
        return j0, j1
    if 2.0 ** (j1 - 1) >= f1 or 2.0 ** (j0 + 1) <= f0:
        raise ValueError(f"index range [{j0}, {j1}] is not resolvable on frequencies "
                         f"[{f0:.4g}, {f1:.4g}]")
    return j0, j1


def build_bank(kind: str, grid: Grid | None = None, index_range: Sequence[int] | None = None,
               domain: str = "whole_space", time_samples: int | None = None,
               dt: float | None = None) -> DyadicBank:
    """Build a dyadic bank on the spectral lattice of ``grid``.

    Without ``index_range`` the range is chosen so that every nonzero lattice
    frequency is covered.  Temporal banks live on the lattice of a
    ``time_samples``-point series with spacing ``dt``.
    """
    if kind not in BANK_KINDS:
        raise ValueError(f"unknown bank kind {kind!r}")
    if kind == "temporal_psi":
        if time_samples is None:
            time_samples = grid.nt
        dt = grid.dt if dt is None else dt
        radius = np.abs(2 * np.pi * np.fft.fftfreq(time_samples, dt))
        f0, f1 = _lattice_extent(radius)
        j0, j1 = _resolve_range(kind, f0, f1, index_range)
        return DyadicBank(kind, j0, j1, radius)
    if kind == "separated_Phi":
        if domain != "whole_space":
            raise ValueError("separated banks need the whole-space lattice")
        ks = grid.wavenumbers("whole_space")
        tang = np.sqrt(sum(k ** 2 for k in ks[:-1]))
        nor = np.abs(ks[-1])
        radius = np.sqrt(tang ** 2 + nor ** 2)
        big = np.maximum(tang, nor)
        f0, f1 = _lattice_extent(big)
        j0, j1 = _resolve_range(kind, f0, f1, index_range)
        return DyadicBank(kind, j0, j1, radius, tang, nor)
    radius = grid.abs_wavenumber(domain)
    f0, f1 = _lattice_extent(radius)
    j0, j1 = _resolve_range(kind, f0, f1, index_range)
    return DyadicBank(kind, j0, j1, radius)


def partition_defect(grid: Grid, kind: str = "annulus_phi", index_range=None) -> float:
    """max |sum of multipliers - 1| over covered nonzero lattice frequencies.

    The multipliers depend only on |xi'| and |xi_n|, so they are evaluated
    once per distinct pair occurring on the lattice.  Only the blocks whose
    support contains a point are evaluated there.
    """
    axes = [np.abs(2 * np.pi * np.fft.rfftfreq(N, L / N))
            for L, N in zip(grid.tangential_lengths, grid.tangential_points)]
    tmesh = np.meshgrid(*axes, indexing="ij", sparse=True)
    tang_vals = np.unique(np.sqrt(sum(k ** 2 for k in tmesh)))
    nor_vals = np.abs(2 * np.pi * np.fft.rfftfreq(2 * grid.Nn, grid.hn))
    tang, nor = np.meshgrid(tang_vals, nor_vals, indexing="ij")
    if kind == "annulus_phi":
        r = np.sqrt(tang ** 2 + nor ** 2)
        f0, f1 = _lattice_extent(r)
        j0, j1 = _resolve_range(kind, f0, f1, index_range)
        x = _log2_abs(r)
        base = np.floor(x)
        total = np.zeros_like(x)
        for off in (0, 1):
            jj = base + off
            ok = (jj >= j0) & (jj <= j1) & np.isfinite(x)
            total[ok] += bump(x[ok] - jj[ok])
        covered = (r >= 2.0 ** j0) & (r <= 2.0 ** j1)
        return float(np.abs(total[covered] - 1.0).max())
    if kind == "separated_Phi":
        big = np.maximum(tang, nor)
        f0, f1 = _lattice_extent(big)
        j0, j1 = _resolve_range(kind, f0, f1, index_range)
        total = np.zeros(tang.shape)
        for m in range(j0, j1 + 1):
            # the separated multiplier is a sum of two tensor products
            total += np.outer(annulus_multiplier(tang_vals, m), lowpass_multiplier(nor_vals, m - 1))
            total += np.outer(lowpass_multiplier(tang_vals, m), annulus_multiplier(nor_vals, m))
        covered = (big >= 2.0 ** j0) & (big <= 2.0 ** j1)
        return float(np.abs(total[covered] - 1.0).max())
    raise ValueError("partition defined for annulus_phi and separated_Phi banks")


# norms ---------------------------------------------------------------------


@dataclass(frozen=True)
class BesovParams:
    s: float
    p: float
    sigma: float = 1.0
    domain: str = "whole"
    check_range: bool = False

    def __post_init__(self) -> None:
        if not 1 <= self.p < math.inf:
            raise ValueError("p must lie in [1, inf)")
        if not self.sigma >= 1:
            raise ValueError("sigma must lie in [1, inf]")
        if self.domain not in ("whole", "half", "boundary"):
            raise ValueError(f"unknown domain {self.domain!r}")
        if self.check_range and self.domain == "half":
            if not (-1 + 1 / self.p < self.s < 1 / self.p):
                raise ValueError(f"half-space regularity s={self.s} outside (-1+1/p, 1/p)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sigma"] = "inf" if math.isinf(self.sigma) else self.sigma
        return d


@dataclass(frozen=True)
class MixedNormParams:
    r: float
    rho: float
    kind: str
    spatial: BesovParams
    sigma_t: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in MIXED_KINDS:
            raise ValueError(f"unknown mixed norm kind {self.kind!r}")
        if self.rho < 1:
            raise ValueError("rho must be >= 1")

    def to_dict(self) -> dict:
        inf = lambda v: "inf" if math.isinf(v) else v
        return {"r": self.r, "rho": inf(self.rho), "kind": self.kind, "sigma_t": inf(self.sigma_t),
                "spatial": self.spatial.to_dict()}


@dataclass
class NormReport:
    norm_value: float
    per_block_contributions: list
    tail_bound: float
    params: dict
    tail_flag: bool = False

    def to_dict(self) -> dict:
        return {"norm_value": self.norm_value,
                "per_block_contributions": self.per_block_contributions,
                "tail_bound": self.tail_bound, "params": self.params,
                "tail_flag": self.tail_flag}

    def __float__(self) -> float:
        return self.norm_value


def lp_norm(a: np.ndarray, p: float, dv: float, spatial_ndim: int) -> np.ndarray:
    """L^p norm over the trailing spatial axes of the pointwise magnitude.

    Axes between the leading batch axis (if any) and the spatial axes are
    treated as components.  Returns one value per leading index.
    """
    a = np.asarray(a)
    sp = tuple(range(a.ndim - spatial_ndim, a.ndim))
    comp = tuple(range(1, a.ndim - spatial_ndim))
    mag2 = np.abs(a) ** 2
    if comp:
        mag2 = mag2.sum(axis=comp)
    mag = np.sqrt(mag2)
    return (dv * np.sum(mag ** p, axis=tuple(range(1, mag.ndim)))) ** (1.0 / p)


def _combine(weighted: np.ndarray, sigma: float, axis: int = 0) -> np.ndarray:
    if math.isinf(sigma):
        return np.max(weighted, axis=axis)
    return np.sum(weighted ** sigma, axis=axis) ** (1.0 / sigma)


def _whole_array(f: Field, policy: ExtensionPolicy | None) -> tuple[np.ndarray, str]:
    """Physical array on the torus of f (extending half-space fields)."""
    vals = f.values
    if f.state == "spectral":
        from .grid_field import to_physical
        vals = to_physical(f).values
    if f.domain != "half_space":
        return np.asarray(vals), f.domain
    pol = policy or f.policy
    lead = vals.shape[:1] if f.timed else ()
    flat = vals.reshape(lead + (f.ncomp,) + f.grid.shape("half_space"))
    parts = [extend_array(flat[(slice(None),) * len(lead) + (c,)], pol.parities[c])
             for c in range(f.ncomp)]
    out = np.stack(parts, axis=len(lead)).reshape(lead + f.component_shape + f.grid.shape("whole_space"))
    return out, "whole_space"


def besov_norm_array(a: np.ndarray, grid: Grid, domain: str, params: BesovParams,
                     bank: DyadicBank | None = None, batch: bool = False) -> dict:
    """Homogeneous Besov norm of a torus array (whole_space or boundary).

    With ``batch`` the leading axis indexes independent fields and arrays of
    norms are returned.  The result dictionary holds ``norm``, per-block
    weighted contributions, and a tail estimate for the uncovered content.
    """
    d = grid.ndim(domain)
    bank = bank or build_bank("annulus_phi", grid, domain=domain)
    arr = a if batch else a[None]
    axes = tuple(range(arr.ndim - d, arr.ndim))
    ahat = np.fft.fftn(arr, axes=axes)
    real = np.isrealobj(arr)
    dv = grid.cell_volume(domain)
    contrib = []
    cov = np.zeros(bank.radius.shape)
    for j in bank.indices:
        mult = bank.multiplier(j)
        cov = cov + mult
        blk = np.fft.ifftn(ahat * mult, axes=axes)
        if real:
            blk = blk.real
        contrib.append(2.0 ** (params.s * j) * lp_norm(blk, params.p, dv, d))
    contrib = np.array(contrib)
    norm = _combine(contrib, params.sigma)
    # tail: uncovered content grouped by sharp dyadic shells
    resid_mult = 1.0 - cov
    tail_terms = []
    shell = bank.block_of(bank.radius)
    live = np.abs(resid_mult) > 1e-14
    if np.any(live):
        for jj in np.unique(shell[live & np.isfinite(shell)]):
            sel = (shell == jj) & live
            blk = np.fft.ifftn(ahat * np.where(sel, resid_mult, 0.0), axes=axes)
            if real:
                blk = blk.real
            tail_terms.append(2.0 ** (params.s * jj) * lp_norm(blk, params.p, dv, d))
        zero = np.fft.ifftn(ahat * (bank.radius == 0), axes=axes)
        if real:
            zero = zero.real
        tail_terms.append(2.0 ** (params.s * bank.j_min) * lp_norm(zero, params.p, dv, d))
    tail = _combine(np.array(tail_terms), params.sigma) if tail_terms else np.zeros(arr.shape[0])
    if not batch:
        return {"norm": float(norm[0]), "blocks": [(j, float(c[0])) for j, c in zip(bank.indices, contrib)],
                "tail": float(tail[0])}
    return {"norm": norm, "blocks": contrib, "tail": tail}


def lp_block(f: Field, bank: DyadicBank, j: int, policy: ExtensionPolicy | None = None) -> Field:
    """phi_j * f as a physical field on the torus of ``f``."""
    arr, domain = _whole_array(f, policy)
    d = f.grid.ndim(domain)
    axes = tuple(range(arr.ndim - d, arr.ndim))
    blk = np.fft.ifftn(np.fft.fftn(arr, axes=axes) * bank.multiplier(j), axes=axes)
    if np.isrealobj(arr):
        blk = blk.real
    return Field(f.grid, blk, f.rank, "physical", domain, None, f.timed)


def besov_norm(f: Field, params: BesovParams, bank: DyadicBank | None = None,
               policy: ExtensionPolicy | None = None, tail_tol: float | None = None) -> NormReport:
    """Homogeneous Besov norm; half-space fields use their policy extension."""
    if f.timed:
        raise ValueError("besov_norm expects a time-independent field; use mixed_norm")
    arr, domain = _whole_array(f, policy)
    res = besov_norm_array(arr, f.grid, domain, params, bank)
    flag = tail_tol is not None and res["tail"] > tail_tol * max(res["norm"], 1e-300)
    if flag:
        raise ValueError(f"Besov tail {res['tail']:.3e} exceeds tolerance relative to norm {res['norm']:.3e}")
    return NormReport(res["norm"], [[j, c] for j, c in res["blocks"]], res["tail"], params.to_dict(), False)


def _lrho(vals: np.ndarray, w, rho: float) -> float:
    """Discrete L^rho norm in time (``rho = inf`` gives the max)."""
    if math.isinf(rho):
        return float(np.max(vals))
    return float(np.sum(w * vals ** rho) ** (1 / rho))


def _time_weights(nt: int, dt: float) -> np.ndarray:
    w = np.full(nt, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


def mixed_norm_array(a: np.ndarray, grid: Grid, domain: str, params: MixedNormParams,
                     pad_factor: int = 4, dt: float | None = None,
                     time_range: Sequence[int] | None = None, horizon: float | None = None) -> dict:
    """Space-time norm of samples ``a[t, ...]`` on [0, T], zero-extended in time.

    The transform window is ``pad_factor * T`` long, or at least ``horizon``
    time units when given, so runs with different ``T`` resolve the same
    low temporal blocks.

    ``triebel_F`` puts the temporal block sum inside the L^rho_t norm;
    ``lebesgue_L_tilde`` is the Chemin-Lerner norm with the time integral
    inside the spatial block sum; ``besov_B_tilde`` takes both block sums
    outside an L^rho_t L^p_x norm.
    """
    dt = grid.dt if dt is None else dt
    nt = a.shape[0]
    sp = params.spatial
    d = grid.ndim(domain)
    axes = tuple(range(a.ndim - d, a.ndim))
    sbank = build_bank("annulus_phi", grid, domain=domain)
    dv = grid.cell_volume(domain)
    real = np.isrealobj(a)
    if params.kind == "lebesgue_L_tilde":
        ahat = np.fft.fftn(a, axes=axes)
        w = _time_weights(nt, dt)
        contrib = []
        for j in sbank.indices:
            blk = np.fft.ifftn(ahat * sbank.multiplier(j), axes=axes)
            blk = blk.real if real else blk
            per_t = lp_norm(blk, sp.p, dv, d)
            contrib.append(2.0 ** (sp.s * j) * _lrho(per_t, w, params.rho))
        contrib = np.array(contrib)
        return {"norm": float(_combine(contrib, sp.sigma)),
                "blocks": [[j, float(c)] for j, c in zip(sbank.indices, contrib)], "tail": 0.0}
    M = max(pad_factor * nt, int(math.ceil(horizon / dt)) if horizon else 0)
    M = 1 << int(math.ceil(math.log2(M)))
    padded = np.zeros((M,) + a.shape[1:], dtype=np.result_type(a, float))
    padded[:nt] = a
    if params.kind == "triebel_F" and real:
        return _triebel_real(padded, grid, domain, params, sbank, dt, time_range)
    tbank = build_bank("temporal_psi", None, time_range, time_samples=M, dt=dt)
    tshape = (M,) + (1,) * (a.ndim - 1)
    ahat = np.fft.fft(np.fft.fftn(padded, axes=axes), axis=0)
    wt = dt
    rows = []
    kidx = list(tbank.indices)
    for k in kidx:
        tk = ahat * tbank.multiplier(k).reshape(tshape)
        if params.kind == "triebel_F":
            tk_t = np.fft.ifft(tk, axis=0)
            x = besov_norm_array(np.fft.ifftn(tk_t, axes=axes).real if real else np.fft.ifftn(tk_t, axes=axes),
                                 grid, domain, sp, sbank, batch=True)["norm"]
            rows.append(2.0 ** (params.r * k) * x)
        else:
            tk_t = np.fft.ifft(tk, axis=0)
            jrow = []
            for j in sbank.indices:
                blk = np.fft.ifftn(tk_t * sbank.multiplier(j), axes=axes)
                blk = blk.real if real else blk
                per_t = lp_norm(blk, sp.p, dv, d)
                jrow.append(2.0 ** (sp.s * j) * _lrho(per_t, wt, params.rho))
            rows.append(2.0 ** (params.r * k) * _combine(np.array(jrow), sp.sigma))
    rows = np.array(rows)
    # uncovered temporal content (the zero temporal mode, below resolution)
    zero = np.fft.ifft(ahat * (tbank.radius == 0).reshape(tshape), axis=0)
    zx = besov_norm_array(np.fft.ifftn(zero, axes=axes).real if real else np.fft.ifftn(zero, axes=axes),
                          grid, domain, sp, sbank, batch=True)["norm"]
    tail = 2.0 ** (params.r * tbank.j_min) * _lrho(zx, wt, params.rho)
    if params.kind == "triebel_F":
        inner = _combine(rows, params.sigma_t, axis=0)
        norm = _lrho(inner, wt, params.rho)
        blocks = [[k, _lrho(r, wt, params.rho)] for k, r in zip(kidx, rows)]
    else:
        norm = float(_combine(rows, params.sigma_t))
        blocks = [[k, float(r)] for k, r in zip(kidx, rows)]
    return {"norm": norm, "blocks": blocks, "tail": tail}


def _triebel_real(padded: np.ndarray, grid: Grid, domain: str, params: MixedNormParams,
                  sbank: DyadicBank, dt: float, time_range) -> dict:
    """``triebel_F`` for real samples with half-spectrum transforms.

    Every multiplier depends on ``|tau|`` and ``|xi|`` only, so each block
    stays real and can be filtered on the ``rfft`` lattices.  For ``p = 2``
    the block norms come from Parseval without spatial inverse transforms.
    The value agrees with the complex path to round-off.
    """
    M = padded.shape[0]
    sp = params.spatial
    d = grid.ndim(domain)
    axes = tuple(range(padded.ndim - d, padded.ndim))
    shape = padded.shape[padded.ndim - d:]
    dv = grid.cell_volume(domain)
    tbank = build_bank("temporal_psi", None, time_range, time_samples=M, dt=dt)
    tshape = (-1,) + (1,) * (padded.ndim - 1)
    rad = sbank.radius[..., : shape[-1] // 2 + 1]
    smult = {j: annulus_multiplier(rad, j) for j in sbank.indices}
    rows = []
    if sp.p == 2:
        C = np.fft.fft(np.fft.rfftn(padded, axes=axes), axis=0)
        tau = np.abs(2 * np.pi * np.fft.fftfreq(M, dt)).reshape(tshape)
        w = np.full(rad.shape[-1], 2.0)  # half-spectrum multiplicity
        w[0] = 1.0
        if shape[-1] % 2 == 0:
            w[-1] = 1.0
        phi2 = np.stack([np.broadcast_to(smult[j], rad.shape).ravel() ** 2 for j in sbank.indices], 1)
        weight = 2.0 ** (sp.s * np.array(list(sbank.indices)))
        norm = dv / int(np.prod(shape))
        for k in tbank.indices:
            blk = np.fft.ifft(C * annulus_multiplier(tau, k), axis=0)
            P = (np.abs(blk) ** 2 * w).reshape((M, -1) + rad.shape).sum(axis=1).reshape(M, -1)
            contrib = (weight * np.sqrt(np.maximum(P @ phi2, 0.0) * norm)).T
            rows.append(2.0 ** (params.r * k) * _combine(contrib, sp.sigma))
    else:
        A = np.fft.rfft(padded, axis=0)
        tau = np.abs(2 * np.pi * np.fft.rfftfreq(M, dt)).reshape(tshape)
        for k in tbank.indices:
            bh = np.fft.rfftn(np.fft.irfft(A * annulus_multiplier(tau, k), n=M, axis=0), axes=axes)
            contrib = [2.0 ** (sp.s * j) * lp_norm(np.fft.irfftn(bh * smult[j], s=shape, axes=axes), sp.p, dv, d)
                       for j in sbank.indices]
            rows.append(2.0 ** (params.r * k) * _combine(np.array(contrib), sp.sigma))
    rows = np.array(rows)
    # the zero temporal mode is the window mean, constant in time
    z = besov_norm_array(padded.mean(axis=0)[None], grid, domain, sp, sbank, batch=True)["norm"][0]
    tail = 2.0 ** (params.r * tbank.j_min) * _lrho(np.full(M, z), dt, params.rho)
    inner = _combine(rows, params.sigma_t, axis=0)
    blocks = [[k, _lrho(r, dt, params.rho)] for k, r in zip(tbank.indices, rows)]
    return {"norm": _lrho(inner, dt, params.rho), "blocks": blocks, "tail": tail}


def mixed_norm(f: Field, params: MixedNormParams, policy: ExtensionPolicy | None = None,
               tail_tol: float = 1e-2, pad_factor: int = 4) -> NormReport:
    """Space-time norm of a timed field; see :func:`mixed_norm_array`."""
    if not f.timed:
        raise ValueError("mixed_norm expects a time-dependent field")
    arr, domain = _whole_array(f, policy)
    res = mixed_norm_array(arr, f.grid, domain, params, pad_factor)
    flag = res["tail"] > tail_tol * max(res["norm"], 1e-300)
    return NormReport(res["norm"], res["blocks"], res["tail"], params.to_dict(), bool(flag))
