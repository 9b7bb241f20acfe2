"""Dyadic pieces of the pressure potential and their decay.

The potential is the matrix-valued oscillatory integral

    pi(t, x', eta) = (2 pi)^{-n} \\int\\int e^{i t tau + i x'.xi'}
                     (i xi', -|xi'|)^T m(tau, xi') e^{-|xi'| |eta|} dtau dxi'

and ``pi_{k,j}`` localizes it with ``psi_k(tau) phi_j(xi')``.  Substituting
``tau = 2^k s``, ``xi' = 2^j z'`` gives

    ||pi_{k,j}(t, ., eta)||_{L^1_{x'}} = 2^{k+j} ||K(2^k t, ., 2^j eta)||_{L^1_y}

with a kernel ``K`` that only depends on ``a = 2^{k/2-j}``.  We evaluate
``K`` by FFT on a periodic (s, y') box; the dyadic support keeps the
integrand away from the symbol singularity.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .lp_besov import annulus_multiplier, lowpass_multiplier
from .stokes_symbols import symbol_B, symbol_D


@dataclass(frozen=True)
class KernelGrid:
    """Periodic box in the scaled variables (s, y')."""

    n: int = 2
    s_period: float = 512.0
    n_s: int = 2048
    y_period: float = 64.0
    n_y: int = 256

    @classmethod
    def default(cls, n: int = 2) -> "KernelGrid":
        if n == 2:
            return cls(2)
        return cls(3, 256.0, 1024, 32.0, 64)

    def frequencies(self):
        sig = 2 * np.pi * np.fft.fftfreq(self.n_s, self.s_period / self.n_s)
        ze = 2 * np.pi * np.fft.fftfreq(self.n_y, self.y_period / self.n_y)
        axes = [sig] + [ze] * (self.n - 1)
        return np.meshgrid(*axes, indexing="ij", sparse=True)

    @property
    def s(self) -> np.ndarray:
        return np.fft.fftfreq(self.n_s, 1.0 / self.s_period)

    @property
    def dy(self) -> float:
        return (self.y_period / self.n_y) ** (self.n - 1)

    @property
    def norm(self) -> float:
        return self.n_s * self.n_y ** (self.n - 1) / (self.s_period * self.y_period ** (self.n - 1))


@dataclass
class KernelSlice:
    k: int | None
    j: int
    eta: float
    region: str
    t: np.ndarray
    l1_xprime: np.ndarray
    scale: float
    values: np.ndarray | None = None
    m_eta: int | None = None

    def to_dict(self) -> dict:
        return {"k": self.k, "j": self.j, "eta": self.eta, "region": self.region,
                "m_eta": self.m_eta, "scale": self.scale}


def _symbol_pieces(kg: KernelGrid, k_scale: float, j: int, region: str):
    """Localized prefactor-times-symbol entries on the scaled lattice."""
    grids = kg.frequencies()
    sig, zet = grids[0], grids[1:]
    zmod = np.sqrt(sum(z ** 2 for z in zet))
    temporal = annulus_multiplier(sig, 0) if region == "time" else lowpass_multiplier(sig, -1)
    w = temporal * annulus_multiplier(zmod, 0)
    live = w > 0
    tau = np.where(live, k_scale * sig, 1.0)
    A = np.where(live, 2.0 ** j * zmod, 1.0)
    A = np.broadcast_to(A, live.shape)
    tau = np.broadcast_to(tau, live.shape)
    B = symbol_B(tau, A)
    D = symbol_D(tau, A, B)
    coef = np.where(live, 2 * B * (A + B) / D, 0.0)
    mprime = [coef * 1j * (2.0 ** j) * z for z in zet]
    mn = np.where(live, -(A + B) * (A ** 2 + B ** 2) / D, 0.0)
    pref = [1j * z for z in zet] + [-zmod]
    return w, pref, mprime + [mn], zmod


def _l1_curve(kg: KernelGrid, w, pref, msym, damp) -> tuple[np.ndarray, np.ndarray]:
    mag2 = 0.0
    spatial_axes = tuple(range(1, kg.n))
    vals = []
    for p in pref:
        for m in msym:
            comp = np.fft.ifftn(w * p * m * damp) * kg.norm
            vals.append(comp)
            mag2 = mag2 + np.abs(comp) ** 2
    l1 = np.sqrt(mag2).sum(axis=spatial_axes) * kg.dy
    return l1, np.array(vals)


def _eta_profile(zmod: np.ndarray, eta_scaled: float, shift: int | None, n_omega: int = 4001):
    """Damping factor in eta: exp(-|z| eta), or its phi_shift-block in eta."""
    if shift is None:
        return np.exp(-zmod * abs(eta_scaled))
    lo, hi = 2.0 ** (shift - 1), 2.0 ** (shift + 1)
    om = np.linspace(lo, hi, n_omega)
    wts = annulus_multiplier(om, shift)
    out = np.zeros_like(zmod, dtype=float)
    live = (zmod > 0.25)
    avals = np.unique(zmod[live])
    # (1/2pi) int phi(w) 2A/(A^2+w^2) e^{i w eta} dw over both signs of w
    integrand = wts[None, :] * 2 * avals[:, None] / (avals[:, None] ** 2 + om[None, :] ** 2)
    g = 2 * integrate.trapezoid(integrand * np.cos(om[None, :] * eta_scaled), om, axis=1) / (2 * np.pi)
    lookup = dict(zip(avals.tolist(), g.tolist()))
    flat = out.reshape(-1)
    zf = np.broadcast_to(zmod, out.shape).reshape(-1)
    for i in np.nonzero(live.reshape(-1))[0]:
        flat[i] = lookup[zf[i]]
    return out


def build_kernel_slice(k: int | None, j: int, eta: float, kgrid: KernelGrid | None = None,
                       region: str = "time", m_eta: int | None = None,
                       keep_values: bool = False) -> KernelSlice:
    """L^1_{x'} norm curve of pi_{k,j}(t, ., eta) over the scaled time window.

    ``region="space"`` builds the low-frequency sum over k < 2j instead of a
    single temporal block.  ``m_eta`` additionally localizes in eta with the
    block phi_{m_eta}.
    """
    kg = kgrid or KernelGrid.default()
    if region == "time":
        if k is None or k < 2 * j:
            raise ValueError("time-dominated slices need k >= 2j")
        t_scale = 2.0 ** k
    elif region == "space":
        t_scale = 2.0 ** (2 * j)
    else:
        raise ValueError(f"unknown region {region!r}")
    w, pref, msym, zmod = _symbol_pieces(kg, t_scale, j, region)
    es = (2.0 ** j) * eta
    damp = _eta_profile(zmod, es, None if m_eta is None else m_eta - j)
    l1, vals = _l1_curve(kg, w, pref, msym, damp)
    amp = t_scale * 2.0 ** j
    s = kg.s
    order = np.argsort(s)
    values = None
    if keep_values:
        values = vals
    return KernelSlice(k, j, float(eta), region, s[order] / t_scale, amp * l1[order], t_scale,
                       values, m_eta)


def kernel_imag_ratio(slice_values: np.ndarray) -> float:
    """max |Im| / max |v| over the pieces (the full kernel is real)."""
    return float(np.abs(slice_values.imag).max() / np.abs(slice_values).max())


# decay fits --------------------------------------------------------------------


@dataclass
class DecayFit:
    indices: dict
    window: tuple[float, float]
    slope: float
    scale: float
    eta_rate: float | None
    residual: float
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"indices": self.indices, "window": list(self.window), "slope": self.slope,
                "scale": self.scale, "eta_rate": self.eta_rate, "residual": self.residual,
                "pass": self.passed, **({"details": self.details} if self.details else {})}


def tail_envelope(t: np.ndarray, l1: np.ndarray):
    """sup_{|t'| >= |t|} L(t') on t >= 0, folding both time directions."""
    pos = t >= 0
    tp, lp = t[pos], l1[pos]
    neg = np.interp(tp, -t[~pos][::-1], l1[~pos][::-1], right=0.0)
    both = np.maximum(lp, neg)
    env = np.maximum.accumulate(both[::-1])[::-1]
    return tp, env


def temporal_slope(sl: KernelSlice, window=(4.0, 64.0)):
    tp, env = tail_envelope(sl.t, sl.l1_xprime)
    st = tp * sl.scale
    sel = (st >= window[0]) & (st <= window[1])
    x, y = np.log(st[sel]), np.log(env[sel])
    coef, res, *_ = np.polyfit(x, y, 1, full=True)
    resid = float(np.sqrt(res[0] / sel.sum())) if res.size else 0.0
    return float(coef[0]), resid


def kernel_bound_shape(t, eta, k_scale: float, j: int, n: int = 2):
    """2^j (1 + (2^j eta)^{n+2}) e^{-2^{j-1} eta} T / <T t>^2 with T the time scale."""
    return (2.0 ** j * (1 + (2.0 ** j * eta) ** (n + 2)) * np.exp(-(2.0 ** (j - 1)) * eta)
            * k_scale / (1 + (k_scale * t) ** 2))


def eta_rate(k: int | None, j: int, region: str = "time", kgrid: KernelGrid | None = None,
             span=(2.0, 8.0), points: int = 7) -> tuple[float, float]:
    """Exponential rate of sup_t ||pi_{k,j}(t)||_{L^1} in eta on 2^j eta in ``span``."""
    etas = np.linspace(span[0], span[1], points) / 2.0 ** j
    sup = np.array([build_kernel_slice(k, j, e, kgrid, region).l1_xprime.max() for e in etas])
    coef, res, *_ = np.polyfit(etas, np.log(sup), 1, full=True)
    return float(-coef[0]), float(np.sqrt(res[0] / points)) if res.size else 0.0


def calibrate_constant(sl: KernelSlice, n: int = 2) -> float:
    shape = kernel_bound_shape(sl.t, sl.eta, sl.scale, sl.j, n)
    return float(np.max(sl.l1_xprime / shape))


def dominated(sl: KernelSlice, C: float, n: int = 2, margin: float = 2.0) -> float:
    """max of LHS / (margin C shape); at most 1 when the frozen bound dominates."""
    shape = kernel_bound_shape(sl.t, sl.eta, sl.scale, sl.j, n)
    return float(np.max(sl.l1_xprime / (margin * C * shape)))


def verify_orthogonality_time(k: int, j: int, eta: float = 0.0, t_window=(4.0, 64.0),
                              kgrid: KernelGrid | None = None, C_ref: float | None = None,
                              slope_range=(-2.5, -1.5)) -> DecayFit:
    """Temporal decay of a time-dominated piece (k >= 2j)."""
    if k < 2 * j:
        raise ValueError("time-dominated region requires k >= 2j")
    sl = build_kernel_slice(k, j, eta, kgrid, "time")
    slope, resid = temporal_slope(sl, t_window)
    if slope != slope:
        raise ValueError("insufficient dynamic range")
    rate, _ = eta_rate(k, j, "time", kgrid)
    C = C_ref if C_ref is not None else calibrate_constant(sl, (kgrid or KernelGrid.default()).n)
    dom = dominated(sl, C, (kgrid or KernelGrid.default()).n)
    ok = (slope_range[0] <= slope <= slope_range[1] and dom <= 1.0
          and 2.0 ** (j - 2) <= rate <= 2.0 ** j)
    return DecayFit({"k": k, "j": j, "eta": eta}, tuple(t_window), slope, 2.0 ** k, rate, resid, ok,
                    {"domination": dom, "C": C})


def verify_orthogonality_space(j: int, eta: float = 0.0, t_window=(4.0, 64.0),
                               kgrid: KernelGrid | None = None, C_ref: float | None = None,
                               slope_range=(-2.5, -1.5)) -> DecayFit:
    """Temporal decay of the low-frequency sum over k < 2j."""
    sl = build_kernel_slice(None, j, eta, kgrid, "space")
    slope, resid = temporal_slope(sl, t_window)
    rate, _ = eta_rate(None, j, "space", kgrid)
    C = C_ref if C_ref is not None else calibrate_constant(sl, (kgrid or KernelGrid.default()).n)
    dom = dominated(sl, C, (kgrid or KernelGrid.default()).n)
    ok = (slope_range[0] <= slope <= slope_range[1] and dom <= 1.0
          and 2.0 ** (j - 2) <= rate <= 2.0 ** j)
    return DecayFit({"j": j, "eta": eta}, tuple(t_window), slope, 2.0 ** (2 * j), rate, resid, ok,
                    {"domination": dom, "C": C})


# the eta-block sweeps need many slices; a coarser time axis keeps them cheap
CONVOLVED_GRID = KernelGrid(2, 128.0, 512, 64.0, 256)


def convolved_amplitude(k: int, j: int, m: int, etas: np.ndarray, kgrid: KernelGrid | None = None,
                        region: str = "time") -> np.ndarray:
    """sup_t ||phi_m *_eta pi_{k,j}(t, ., eta)||_{L^1} at each eta."""
    if m < j:
        raise ValueError("the eta block index must satisfy m >= j")
    return np.array([build_kernel_slice(k, j, float(e), kgrid, region, m_eta=m).l1_xprime.max()
                     for e in etas])


def verify_orthogonality_convolved(k: int, j: int, m_values, eta_tail=None,
                                   kgrid: KernelGrid | None = None,
                                   ratio_range=(0.3, 0.7)) -> DecayFit:
    """Geometric decay in m - j and the polynomial eta tail of phi_m *_eta pi_{k,j}."""
    m_values = list(m_values)
    if kgrid is None:
        kgrid = CONVOLVED_GRID
    etas = np.linspace(0.0, 2.0, 41) / 2.0 ** j
    amps = np.array([convolved_amplitude(k, j, m, etas, kgrid).max() for m in m_values])
    ratios = amps[1:] / amps[:-1]
    # eta tail for the last m: compare power-law and exponential fits
    m_tail = m_values[-1]
    if eta_tail is None:
        eta_tail = np.geomspace(4.0, 64.0, 25) / 2.0 ** m_tail
    tail = convolved_amplitude(k, j, m_tail, np.asarray(eta_tail), kgrid)
    env = np.maximum.accumulate(tail[::-1])[::-1]
    x = np.asarray(eta_tail)
    p_pow, r_pow, *_ = np.polyfit(np.log(x), np.log(env), 1, full=True)
    p_exp, r_exp, *_ = np.polyfit(x, np.log(env), 1, full=True)
    r_pow = float(r_pow[0]) if r_pow.size else 0.0
    r_exp = float(r_exp[0]) if r_exp.size else 0.0
    polynomial = r_pow < r_exp
    ok = bool(np.all((ratios >= ratio_range[0]) & (ratios <= ratio_range[1])) and polynomial)
    return DecayFit({"k": k, "j": j, "m": m_values}, (float(x[0]), float(x[-1])), float(p_pow[0]),
                    2.0 ** k, None, r_pow, ok,
                    {"ratios": ratios.tolist(), "amplitudes": amps.tolist(),
                     "power_fit_residual": r_pow, "exp_fit_residual": r_exp,
                     "eta_power": float(p_pow[0])})


# integral bound ----------------------------------------------------------------


def integral_closed_form(a: float, N: float) -> float:
    """int_{-a}^{a} (1+x^2)^{-N/2} dx = 2a 2F1(1/2, N/2; 3/2; -a^2)."""
    return float(2 * a * special.hyp2f1(0.5, N / 2.0, 1.5, -a * a))


def integral_bound_check(a: float, N: float) -> tuple[float, float]:
    """(lhs, rhs) = (int_{-a}^{a}(1+x^2)^{-N/2}dx, 4a/sqrt(1+a^2)); asserts lhs <= rhs."""
    if N < 2 or a <= 0:
        raise ValueError("need N >= 2 and a > 0")
    lhs, _ = integrate.quad(lambda x: (1 + x * x) ** (-N / 2.0), -a, a, epsabs=1e-13, epsrel=1e-13,
                            limit=200)
    rhs = 4 * a / np.sqrt(1 + a * a)
    if not lhs <= rhs:
        raise AssertionError(f"integral bound violated: {lhs} > {rhs}")
    return float(lhs), float(rhs)
