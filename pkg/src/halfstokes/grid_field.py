"""Periodic grids, sampled fields and spectral operators.

The tangential directions x' are periodic.  The wall-normal direction x_n is
sampled on the closed slab [0, L_n] (both end points included) and embedded
into a torus of period 2 L_n by reflection, so every Fourier multiplier acts
exactly on the discrete model.  Arrays follow the layout

* whole space : ``(*components, N_1, ..., N_{n-1}, 2 N_n)``
* half space  : ``(*components, N_1, ..., N_{n-1}, N_n + 1)``
* boundary    : ``(*components, N_1, ..., N_{n-1})``

with an optional leading time axis.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

PARITIES = ("even", "odd", "zero")
RANKS = {"scalar": 0, "vector": 1, "matrix": 2}
DOMAINS = ("whole_space", "half_space", "boundary")
STATES = ("physical", "spectral")


def _is_pow2(k: int) -> bool:
    return k >= 1 and (k & (k - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Discretization of R^{n-1} x (0, L_n) x (0, t_max).

    Parameters
    ----------
    n : int
        Spatial dimension, 2 or 3.
    lengths : sequence of float
        Periods of the tangential axes followed by the slab height ``L_n``.
    points : sequence of int
        Samples per tangential axis followed by the number of normal
        intervals ``N_n``; all powers of two and at least 8.
    t_max, nt : float, int
        Time window ``[0, t_max]`` sampled at ``nt`` uniformly spaced points.
    n_pre : int
        Number of zero samples stored before ``t = 0``; the window is then
        ``(t_min, t_max)`` with ``t_min = -n_pre * dt``.
    """

    n: int
    lengths: tuple[float, ...]
    points: tuple[int, ...]
    t_max: float = 1.0
    nt: int = 33
    n_pre: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "lengths", tuple(float(v) for v in self.lengths))
        object.__setattr__(self, "points", tuple(int(v) for v in self.points))
        if self.n not in (2, 3):
            raise ValueError(f"only n = 2, 3 are supported, got {self.n}")
        if len(self.lengths) != self.n or len(self.points) != self.n:
            raise ValueError("lengths and points must have one entry per axis")
        if any(v <= 0 for v in self.lengths):
            raise ValueError("box lengths must be positive")
        for v in self.points:
            if v < 8 or not _is_pow2(v):
                raise ValueError(f"points per axis must be a power of two >= 8, got {v}")
        if self.nt < 2 or self.t_max <= 0:
            raise ValueError("time window needs t_max > 0 and at least two samples")
        if self.n_pre < 0:
            raise ValueError("n_pre must be non-negative")

    @classmethod
    def uniform(cls, n: int, N: int, L: float = 2 * np.pi, Nn: int | None = None,
                Ln: float | None = None, t_max: float = 1.0, nt: int = 33) -> "Grid":
        Nn = N if Nn is None else Nn
        Ln = L if Ln is None else Ln
        return cls(n, (L,) * (n - 1) + (Ln,), (N,) * (n - 1) + (Nn,), t_max, nt)

    def with_time(self, t_max: float, nt: int) -> "Grid":
        return Grid(self.n, self.lengths, self.points, t_max, nt, self.n_pre)

    def refined(self, factor: int = 2) -> "Grid":
        """Same box with ``factor`` times more samples per spatial axis."""
        return Grid(self.n, self.lengths, tuple(p * factor for p in self.points),
                    self.t_max, self.nt, self.n_pre)

    # geometry -----------------------------------------------------------

    @property
    def Ln(self) -> float:
        return self.lengths[-1]

    @property
    def Nn(self) -> int:
        return self.points[-1]

    @property
    def tangential_points(self) -> tuple[int, ...]:
        return self.points[:-1]

    @property
    def tangential_lengths(self) -> tuple[float, ...]:
        return self.lengths[:-1]

    @property
    def hn(self) -> float:
        """Normal grid spacing."""
        return self.Ln / self.Nn

    @property
    def spacings(self) -> tuple[float, ...]:
        return tuple(L / N for L, N in zip(self.tangential_lengths, self.tangential_points)) + (self.hn,)

    @property
    def dt(self) -> float:
        return self.t_max / (self.nt - 1)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.nt) * self.dt

    @property
    def time_window(self) -> tuple[float, float]:
        return (-self.n_pre * self.dt, self.t_max)

    def shape(self, domain: str) -> tuple[int, ...]:
        if domain == "whole_space":
            return self.tangential_points + (2 * self.Nn,)
        if domain == "half_space":
            return self.tangential_points + (self.Nn + 1,)
        if domain == "boundary":
            return self.tangential_points
        raise ValueError(f"unknown domain {domain!r}")

    def ndim(self, domain: str) -> int:
        return self.n - 1 if domain == "boundary" else self.n

    def cell_volume(self, domain: str) -> float:
        sp = self.spacings
        return float(np.prod(sp[:-1] if domain == "boundary" else sp))

    def x_tangential(self, axis: int) -> np.ndarray:
        return np.arange(self.points[axis]) * (self.lengths[axis] / self.points[axis])

    @property
    def xn_half(self) -> np.ndarray:
        return np.arange(self.Nn + 1) * self.hn

    @property
    def xn_whole(self) -> np.ndarray:
        k = np.arange(2 * self.Nn)
        return np.where(k <= self.Nn, k, k - 2 * self.Nn) * self.hn

    def coords(self, domain: str) -> list[np.ndarray]:
        """Broadcastable coordinate arrays for the spatial axes of ``domain``."""
        axes = [self.x_tangential(i) for i in range(self.n - 1)]
        if domain == "whole_space":
            axes.append(self.xn_whole)
        elif domain == "half_space":
            axes.append(self.xn_half)
        return _open_mesh(axes)

    def wavenumbers(self, domain: str) -> list[np.ndarray]:
        """Broadcastable angular wavenumber arrays for ``domain``."""
        axes = [2 * np.pi * np.fft.fftfreq(N, L / N)
                for L, N in zip(self.tangential_lengths, self.tangential_points)]
        if domain == "whole_space":
            axes.append(2 * np.pi * np.fft.fftfreq(2 * self.Nn, self.hn))
        elif domain != "boundary":
            raise ValueError("wavenumbers exist for whole_space and boundary domains")
        return _open_mesh(axes)

    def abs_wavenumber(self, domain: str) -> np.ndarray:
        return np.sqrt(sum(k ** 2 for k in self.wavenumbers(domain)))

    def abs_tangential(self) -> np.ndarray:
        """|xi'| on the boundary grid."""
        return self.abs_wavenumber("boundary")

    def to_dict(self) -> dict:
        return {"n": self.n, "lengths": list(self.lengths), "points": list(self.points),
                "t_max": self.t_max, "nt": self.nt, "n_pre": self.n_pre}

    @classmethod
    def from_dict(cls, d: dict) -> "Grid":
        return cls(int(d["n"]), tuple(d["lengths"]), tuple(d["points"]),
                   float(d.get("t_max", 1.0)), int(d.get("nt", 33)), int(d.get("n_pre", 0)))


def _open_mesh(axes: Sequence[np.ndarray]) -> list[np.ndarray]:
    d = len(axes)
    out = []
    for i, a in enumerate(axes):
        shape = [1] * d
        shape[i] = a.size
        out.append(a.reshape(shape))
    return out


@dataclass(frozen=True)
class ExtensionPolicy:
    """Per-component parity used when reflecting across x_n = 0."""

    parities: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "parities", tuple(self.parities))
        for p in self.parities:
            if p not in PARITIES:
                raise ValueError(f"unknown parity {p!r}")

    @classmethod
    def scalar(cls, parity: str = "even") -> "ExtensionPolicy":
        return cls((parity,))

    @classmethod
    def uniform(cls, parity: str, count: int) -> "ExtensionPolicy":
        return cls((parity,) * count)

    @classmethod
    def velocity(cls, n: int) -> "ExtensionPolicy":
        """Odd tangential components and even normal component."""
        return cls(("odd",) * (n - 1) + ("even",))

    def __len__(self) -> int:
        return len(self.parities)

    def flipped(self) -> "ExtensionPolicy":
        """Parity after one derivative in x_n."""
        swap = {"even": "odd", "odd": "even", "zero": "zero"}
        return ExtensionPolicy(tuple(swap[p] for p in self.parities))


# array level operators -----------------------------------------------------


def extend_array(a: np.ndarray, parity: str) -> np.ndarray:
    """Reflect half-slab samples along the last axis onto the doubled torus."""
    Nn = a.shape[-1] - 1
    out = np.zeros(a.shape[:-1] + (2 * Nn,), dtype=np.result_type(a, float))
    out[..., : Nn + 1] = a
    if parity == "even":
        out[..., Nn + 1:] = a[..., Nn - 1:0:-1]
    elif parity == "odd":
        out[..., Nn + 1:] = -a[..., Nn - 1:0:-1]
        out[..., 0] = 0.0
        out[..., Nn] = 0.0
    elif parity == "zero":
        pass
    else:
        raise ValueError(f"unknown parity {parity!r}")
    return out


def restrict_array(a: np.ndarray) -> np.ndarray:
    Nn = a.shape[-1] // 2
    return np.array(a[..., : Nn + 1])


def spectral_axes(ndim_spatial: int, arr_ndim: int) -> tuple[int, ...]:
    return tuple(range(arr_ndim - ndim_spatial, arr_ndim))


def fft_spatial(a: np.ndarray, d: int, norm: str | None = None) -> np.ndarray:
    return np.fft.fftn(a, axes=spectral_axes(d, a.ndim), norm=norm)


def ifft_spatial(a: np.ndarray, d: int, norm: str | None = None) -> np.ndarray:
    return np.fft.ifftn(a, axes=spectral_axes(d, a.ndim), norm=norm)


def derivative_multiplier(k: np.ndarray, order: int, n_axis: int) -> np.ndarray:
    """(i k)^order with the Nyquist mode removed for odd orders."""
    m = (1j * k) ** order
    if order % 2 == 1 and n_axis % 2 == 0:
        m = np.where(np.isclose(np.abs(k), np.abs(k).max()) & (k < 0), 0.0, m)
    return m


# Field ---------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Field:
    """Immutable sampled field on a :class:`Grid`.

    ``values`` carries an optional leading time axis (``timed=True``), then
    the component axes implied by ``rank``, then the spatial axes of
    ``domain``.  Spectral coefficients use the unitary normalization (the
    forward transform divides by the square root of the sample count).
    """

    grid: Grid
    values: np.ndarray
    rank: str = "scalar"
    state: str = "physical"
    domain: str = "whole_space"
    policy: ExtensionPolicy | None = None
    timed: bool = False

    def __post_init__(self) -> None:
        if self.rank not in RANKS:
            raise ValueError(f"unknown rank {self.rank!r}")
        if self.domain not in DOMAINS:
            raise ValueError(f"unknown domain {self.domain!r}")
        if self.state not in STATES:
            raise ValueError(f"unknown state {self.state!r}")
        vals = np.array(self.values, copy=True)
        expected = self.component_shape + self.grid.shape(self.domain)
        got = vals.shape[1:] if self.timed else vals.shape
        if tuple(got) != expected:
            raise ValueError(f"value shape {got} does not match grid x rank {expected}")
        if self.domain == "half_space":
            pol = self.policy or ExtensionPolicy.uniform("even", self.ncomp)
            if len(pol) != self.ncomp:
                raise ValueError("policy component count mismatch")
            object.__setattr__(self, "policy", pol)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def component_shape(self) -> tuple[int, ...]:
        return (self.grid.n,) * RANKS[self.rank]

    @property
    def ncomp(self) -> int:
        return int(np.prod(self.component_shape, dtype=int))

    @property
    def spatial_ndim(self) -> int:
        return self.grid.ndim(self.domain)

    def replace(self, **kw) -> "Field":
        base = dict(grid=self.grid, values=self.values, rank=self.rank, state=self.state,
                    domain=self.domain, policy=self.policy, timed=self.timed)
        base.update(kw)
        return Field(**base)

    def real(self) -> np.ndarray:
        return np.real(self.values)

    def component(self, *idx: int) -> "Field":
        lead = (slice(None),) if self.timed else ()
        vals = self.values[lead + tuple(idx)]
        rank = {0: "scalar", 1: "vector", 2: "matrix"}[RANKS[self.rank] - len(idx)]
        pol = None
        if self.policy is not None:
            flat = np.array(self.policy.parities, dtype=object).reshape(self.component_shape or (1,))
            sub = flat[tuple(idx)] if idx else flat
            pol = ExtensionPolicy(tuple(np.atleast_1d(sub).ravel()))
        return Field(self.grid, vals, rank, self.state, self.domain, pol, self.timed)


def _require(f: Field, state: str | None = None, domain: Sequence[str] | None = None) -> None:
    if state is not None and f.state != state:
        raise ValueError(f"field must be {state}, is {f.state}")
    if domain is not None and f.domain not in domain:
        raise ValueError(f"field domain {f.domain} not in {tuple(domain)}")


def to_spectral(f: Field) -> Field:
    """Unitary forward FFT over the spatial axes of a whole-space or boundary field."""
    _require(f, "physical", ("whole_space", "boundary"))
    return f.replace(values=fft_spatial(f.values, f.spatial_ndim, "ortho"), state="spectral")


def to_physical(f: Field) -> Field:
    _require(f, "spectral", ("whole_space", "boundary"))
    return f.replace(values=ifft_spatial(f.values, f.spatial_ndim, "ortho"), state="physical")


def _physical(f: Field) -> Field:
    return to_physical(f) if f.state == "spectral" else f


def extend_half_to_whole(f: Field, policy: ExtensionPolicy | None = None) -> Field:
    """Reflect a half-space field onto the doubled torus."""
    _require(f, "physical", ("half_space",))
    pol = policy or f.policy
    if len(pol) != f.ncomp:
        raise ValueError(f"policy has {len(pol)} parities for {f.ncomp} components")
    lead = f.values.shape[:1] if f.timed else ()
    flat = f.values.reshape(lead + (f.ncomp,) + f.grid.shape("half_space"))
    parts = [extend_array(flat[(slice(None),) * len(lead) + (c,)], pol.parities[c])
             for c in range(f.ncomp)]
    out = np.stack(parts, axis=len(lead)).reshape(lead + f.component_shape + f.grid.shape("whole_space"))
    return Field(f.grid, out, f.rank, "physical", "whole_space", None, f.timed)


def restrict_whole_to_half(f: Field, policy: ExtensionPolicy | None = None) -> Field:
    _require(f, None, ("whole_space",))
    f = _physical(f)
    return Field(f.grid, restrict_array(f.values), f.rank, "physical", "half_space", policy, f.timed)


def _check_axis(f: Field, axis: int) -> None:
    if not 0 <= axis < f.spatial_ndim:
        raise ValueError(f"axis {axis} out of range for a {f.spatial_ndim}-d field")


def derivative(f: Field, axis: int, order: int = 1) -> Field:
    """Spectral derivative along a spatial axis (0-based; axis n-1 is x_n)."""
    _check_axis(f, axis)
    if f.domain == "half_space":
        whole = extend_half_to_whole(f)
        d = derivative(whole, axis, order)
        pol = f.policy
        if axis == f.grid.n - 1 and order % 2 == 1:
            pol = pol.flipped()
        return restrict_whole_to_half(d, pol)
    was_spectral = f.state == "spectral"
    g = f if was_spectral else to_spectral(f)
    k = g.grid.wavenumbers(g.domain)[axis]
    npts = g.grid.shape(g.domain)[axis]
    vals = g.values * derivative_multiplier(k, order, npts)
    out = g.replace(values=vals)
    if was_spectral:
        return out
    out = to_physical(out)
    if np.isrealobj(f.values):
        out = out.replace(values=out.values.real)
    return out


def gradient(f: Field) -> Field:
    if f.rank != "scalar":
        raise ValueError("gradient expects a scalar field")
    d = f.spatial_ndim
    parts = [derivative(f, a).values for a in range(d)]
    ax = 1 if f.timed else 0
    vals = np.stack(parts, axis=ax)
    if d < f.grid.n:  # boundary field: pad the missing normal slot with zeros
        pad = np.zeros_like(parts[0])
        vals = np.concatenate([vals, np.expand_dims(pad, ax)], axis=ax)
    pol = None
    if f.domain == "half_space":
        par = f.policy.parities[0]
        pol = ExtensionPolicy((par,) * (f.grid.n - 1) + ExtensionPolicy.scalar(par).flipped().parities)
    return Field(f.grid, vals, "vector", f.state, f.domain, pol, f.timed)


def divergence(f: Field) -> Field:
    if f.rank != "vector":
        raise ValueError("divergence expects a vector field")
    total = None
    for a in range(f.spatial_ndim):
        term = derivative(f.component(a), a).values
        total = term if total is None else total + term
    pol = None
    if f.domain == "half_space":
        pol = ExtensionPolicy.scalar(f.policy.parities[-1]).flipped()
    return Field(f.grid, total, "scalar", f.state, f.domain, pol, f.timed)


def laplacian(f: Field) -> Field:
    total = None
    for a in range(f.spatial_ndim):
        term = derivative(f, a, 2).values
        total = term if total is None else total + term
    return f.replace(values=total)


def newtonian_potential(g: Field) -> Field:
    """(-Delta)^{-1} g on the torus with the zero mode set to zero."""
    _require(g, None, ("whole_space", "boundary"))
    if g.rank != "scalar":
        raise ValueError("newtonian_potential expects a scalar field")
    was_spectral = g.state == "spectral"
    gs = g if was_spectral else to_spectral(g)
    k2 = g.grid.abs_wavenumber(g.domain) ** 2
    inv = np.divide(1.0, k2, out=np.zeros_like(k2), where=k2 > 0)
    out = gs.replace(values=gs.values * inv)
    if was_spectral:
        return out
    out = to_physical(out)
    if np.isrealobj(g.values):
        out = out.replace(values=out.values.real)
    return out


def l2_norm(f: Field) -> float:
    """Discrete L2 norm, sqrt(dV * sum |v|^2), in either transform state.

    With the unitary transform both states give the same number (Parseval).
    """
    dv = f.grid.cell_volume(f.domain)
    return float(np.sqrt(dv * np.sum(np.abs(f.values) ** 2)))


def field_from_function(grid: Grid, func, domain: str = "whole_space", rank: str = "scalar",
                        policy: ExtensionPolicy | None = None) -> Field:
    """Sample ``func(*coords)`` on the grid."""
    vals = np.asarray(func(*grid.coords(domain)))
    vals = np.broadcast_to(vals, vals.shape[: vals.ndim - grid.ndim(domain)] + grid.shape(domain))
    return Field(grid, vals, rank, "physical", domain, policy)
