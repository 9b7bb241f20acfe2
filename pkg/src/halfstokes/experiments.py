"""Registry of named checks and solver runs.

Each experiment declares its defaults (grid, params, tolerances), whether
it draws random data, and a descriptive anchor naming the estimate it
exercises.  A runner returns an :class:`Outcome`; :func:`run_experiment`
wraps it into a :class:`~halfstokes.reports.RunReport` and writes the
artifacts when an output directory is given.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .config import ConfigError, ExperimentConfig, GridSpec
from .plotting import PlotSpec, render
from .reports import RunReport, metric_rows, write_csv, write_json


@dataclass
class Outcome:
    status: str  # pass | fail | informative
    metrics: dict
    tables: dict = field(default_factory=dict)
    plots: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    arrays: dict = field(default_factory=dict)  # name -> Field snapshots


@dataclass(frozen=True)
class Experiment:
    name: str
    anchor: str
    runner: Callable[[ExperimentConfig], Outcome]
    defaults: ExperimentConfig
    randomized: bool = False
    summary: str = ""


REGISTRY: dict[str, Experiment] = {}


def register(name: str, anchor: str, grid: GridSpec | None = None, params: dict | None = None,
             tolerances: dict | None = None, seed: int | None = None, summary: str = ""):
    def deco(fn):
        cfg = ExperimentConfig(name, grid or GridSpec(), dict(params or {}), dict(tolerances or {}), seed)
        REGISTRY[name] = Experiment(name, anchor, fn, cfg, seed is not None, summary or (fn.__doc__ or "").strip())
        return fn
    return deco


def get(name: str) -> Experiment:
    if name not in REGISTRY:
        raise ConfigError(f"unknown experiment {name!r}; known: {', '.join(sorted(REGISTRY))}")
    return REGISTRY[name]


def _status(ok: bool) -> str:
    return "pass" if ok else "fail"


def _spread(a, b) -> float:
    """Relative deviation of ``b`` from ``a``."""
    return abs(b - a) / abs(a) if a else (0.0 if b == 0 else float("inf"))


# Littlewood-Paley ----------------------------------------------------------------------


@register("verify.partition", "Littlewood-Paley partition of unity",
          GridSpec(n=2, N=256, L=2 * np.pi), {"sizes": [32, 64, 128, 256]}, {"deviation": 1e-12})
def _partition(cfg: ExperimentConfig) -> Outcome:
    """Sum of the annular and the separated dyadic multipliers equals one."""
    from .grid_field import Grid
    from .lp_besov import partition_defect
    rows, times = [], {}
    for N in cfg.params["sizes"]:
        g = Grid.uniform(cfg.grid.n, int(N), L=cfg.grid.L)
        t0 = time.perf_counter()
        a = partition_defect(g, "annulus_phi")
        b = partition_defect(g, "separated_Phi")
        times[f"N{N}"] = time.perf_counter() - t0
        rows.append({"N": int(N), "annulus_phi": a, "separated_Phi": b})
    worst = max(max(r["annulus_phi"], r["separated_Phi"]) for r in rows)
    Ns = [r["N"] for r in rows]
    plots = [PlotSpec("partition_defect", {k: (Ns, [r[k] for r in rows]) for k in ("annulus_phi", "separated_Phi")},
                      xlabel="N", ylabel="max |sum - 1|", logx=True, title="partition of unity defect")]
    return Outcome(_status(worst < cfg.tolerances["deviation"]),
                   {"max_deviation": worst, "grids": rows}, {"partition": rows}, plots, timings=times)


# symbols ----------------------------------------------------------------------------


@register("verify.symbols", "bounds of the boundary symbols B and D on dyadic regions",
          params={"samples": 100000, "fine_samples": 400000}, tolerances={"stability": 0.10}, seed=0)
def _symbols(cfg: ExperimentConfig) -> Outcome:
    """|b| and |d| bounds on the time- and space-dominated regions; sup |m| stability."""
    from .stokes_symbols import max_b_on_boundary, verify_multiplier_boundedness, verify_region_bounds
    P, seed = cfg.params, cfg.seed
    reg = verify_region_bounds(int(P["samples"]), seed=seed, n=cfg.grid.n)
    sups, stable = {}, True
    for region in ("time", "space"):
        coarse = verify_multiplier_boundedness(region, int(P["samples"]), seed=seed, n=cfg.grid.n)
        fine = verify_multiplier_boundedness(region, int(P["fine_samples"]), seed=seed + 1, n=cfg.grid.n)
        for key in ("m_prime", "m_n"):
            a, b = coarse[key].max, fine[key].max
            ok = np.isfinite(a) and np.isfinite(b) and _spread(a, b) <= cfg.tolerances["stability"]
            stable &= bool(ok)
            sups[f"{region}.{key}"] = {"coarse": a, "fine": b, "spread": _spread(a, b)}
    ok = all(r.passed for r in reg.values()) and stable
    metrics = {"b": reg["b"].to_dict(), "d": reg["d"].to_dict(), "m_sup": sups,
               "b_boundary_max": max_b_on_boundary(), "violations": int(sum(not r.passed for r in reg.values()))}
    return Outcome(_status(ok), metrics)


# pressure kernels ------------------------------------------------------------------------


@register("verify.orthogonality", "almost orthogonality of the pressure kernel blocks",
          params={"part": "both", "pairs": [2, 1, 3, 1, 4, 1, 5, 1, 4, 2, 6, 2], "ref_k": 4, "ref_j": 1,
                  "conv_k": 4, "conv_j": 1, "conv_steps": 4},
          tolerances={"slope_lo": 2.5, "slope_hi": 1.5, "ratio_lo": 0.3, "ratio_hi": 0.7})
def _orthogonality(cfg: ExperimentConfig) -> Outcome:
    """Temporal t^-2 decay with frozen-constant domination, eta decay, and the m-sweep."""
    from .pressure_kernels import (build_kernel_slice, calibrate_constant, tail_envelope,
                                   verify_orthogonality_convolved, verify_orthogonality_time)
    P, T = cfg.params, cfg.tolerances
    part = P["part"]
    if part not in ("time", "convolved", "both"):
        raise ConfigError("part must be time, convolved or both")
    metrics, tables, plots, ok = {}, {}, [], True
    slopes = (-T["slope_lo"], -T["slope_hi"])
    if part in ("time", "both"):
        ref = build_kernel_slice(int(P["ref_k"]), int(P["ref_j"]), 0.0)
        C = calibrate_constant(ref)
        pairs = list(zip(P["pairs"][::2], P["pairs"][1::2]))
        rows = []
        for k, j in pairs:
            fit = verify_orthogonality_time(int(k), int(j), C_ref=C, slope_range=slopes)
            rows.append({"k": int(k), "j": int(j), "slope": fit.slope, "eta_rate": fit.eta_rate,
                         "rate_lo": 2.0 ** (j - 2), "rate_hi": 2.0 ** j,
                         "domination": fit.details["domination"], "pass": fit.passed})
        t_ok = all(r["pass"] for r in rows)
        ok &= t_ok
        metrics["time"] = {"pass": t_ok, "C_frozen": C, "pairs": rows,
                           "slope_range": list(slopes)}
        tables["time_pairs"] = rows
        tp, env = tail_envelope(ref.t, ref.l1_xprime)
        sel = tp > 0
        plots.append(PlotSpec("kernel_decay", {f"k={ref.k}, j={ref.j}": (tp[sel] * ref.scale, env[sel])},
                              xlabel="2^k t", ylabel="sup_{|s|>=t} ||pi(s)||_L1", logx=True, logy=True,
                              markers=False))
    if part in ("convolved", "both"):
        k, j = int(P["conv_k"]), int(P["conv_j"])
        ms = list(range(j, j + int(P["conv_steps"]) + 1))
        fit = verify_orthogonality_convolved(k, j, ms, ratio_range=(T["ratio_lo"], T["ratio_hi"]))
        ok &= fit.passed
        metrics["convolved"] = {"pass": fit.passed, "m_values": ms, **fit.details}
        tables["convolved"] = [{"m": m, "amplitude": a} for m, a in zip(ms, fit.details["amplitudes"])]
        plots.append(PlotSpec("m_sweep", {"amplitude": (ms, fit.details["amplitudes"])}, xlabel="m",
                              ylabel="sup amplitude", logy=True))
    return Outcome(_status(ok), metrics, tables, plots)


@register("verify.integral", "integral bound for the Japanese-bracket power",
          params={"pairs": 20}, tolerances={"quadrature": 1e-8}, seed=0)
def _integral(cfg: ExperimentConfig) -> Outcome:
    """int_{-a}^{a} (1+x^2)^{-N/2} dx <= 4a / sqrt(1+a^2) on seeded (a, N)."""
    from .pressure_kernels import integral_bound_check, integral_closed_form
    rng = np.random.default_rng(cfg.seed)
    rows = []
    draws = [(float(a), float(N)) for a, N in zip(10.0 ** rng.uniform(-2, 2, cfg.params["pairs"]),
                                                    rng.uniform(2, 8, cfg.params["pairs"]))]
    spots = [(1.0, 2.0, np.pi / 2, 2 * np.sqrt(2)), (0.1, 3.0, 0.19901, 0.39801)]
    for a, N in draws + [(s[0], s[1]) for s in spots]:
        lhs, rhs = integral_bound_check(a, N)
        rows.append({"a": a, "N": N, "lhs": lhs, "rhs": rhs, "quad_error": abs(lhs - integral_closed_form(a, N)),
                     "holds": lhs <= rhs})
    spot = [{"a": a, "N": N, "lhs": r["lhs"], "lhs_ref": L, "rhs": r["rhs"], "rhs_ref": R}
            for (a, N, L, R), r in zip(spots, rows[-2:])]
    quad = max(r["quad_error"] for r in rows)
    # references are quoted to five digits
    spot_ok = all(abs(s["lhs"] - s["lhs_ref"]) < 5e-6 and abs(s["rhs"] - s["rhs_ref"]) < 5e-6 for s in spot)
    ok = all(r["holds"] for r in rows) and quad < cfg.tolerances["quadrature"] and spot_ok
    plots = [PlotSpec("integral_bound", {"lhs / rhs": ([r["a"] for r in rows], [r["lhs"] / r["rhs"] for r in rows])},
                      kind="scatter", xlabel="a", ylabel="integral / (4a / sqrt(1+a^2))", logx=True,
                      title="ratio below 1 on every seeded pair")]
    return Outcome(_status(ok), {"max_quad_error": quad, "spot_checks": spot, "pairs": len(rows)},
                   {"integral": rows}, plots)


# linear solvers ------------------------------------------------------------------------


@register("solve.heat", "heat equation with Neumann data on the half space",
          GridSpec(n=2, N=32, L=2 * np.pi, Nn=32, Ln=np.pi, t_max=1.0, nt=33),
          tolerances={"eigen": 1e-6, "boundary": 1e-3})
def _heat(cfg: ExperimentConfig) -> Outcome:
    """Eigenmode decay, Neumann data reproduction and the zero solution."""
    from .linear_solvers import heat_neumann_arrays, heat_residuals
    g = cfg.grid.build()
    x = g.coords("half_space")
    X, Xn = x[0], x[-1]
    t = g.times.reshape((-1,) + (1,) * g.n)
    kx, kn = 2 * np.pi / g.tangential_lengths[0] * 2, np.pi / g.Ln * 3
    u0 = np.cos(kx * X) * np.cos(kn * Xn) * np.ones(g.shape("half_space"))
    f = np.zeros((g.nt,) + g.shape("half_space"))
    hz = np.zeros((g.nt,) + g.shape("boundary"))
    s = heat_neumann_arrays(u0, f, hz, g)
    exact = np.exp(-(kx ** 2 + kn ** 2) * t) * u0
    eig = float(np.abs(s["u"] - exact).max() / np.abs(exact).max())
    xb = g.coords("boundary")[0]
    tb = g.times.reshape((-1,) + (1,) * (g.n - 1))
    h = np.sin(np.pi * tb / g.t_max) ** 3 * (np.cos(2 * np.pi * xb / g.tangential_lengths[0])
                                             + 0.5 * np.sin(6 * np.pi * xb / g.tangential_lengths[0]) + 0.3)
    sb = heat_neumann_arrays(np.zeros_like(u0), f, h, g)
    res = heat_residuals(sb, f, h, np.zeros_like(u0), g)
    z = heat_neumann_arrays(np.zeros_like(u0), f, hz, g)
    zero = float(max(np.abs(v).max() for v in z.values()))
    T = cfg.tolerances
    ok = eig < T["eigen"] and res["neumann"] < T["boundary"] and res["pde"] < T["boundary"] and zero == 0.0
    probe = (0,) * g.n
    plots = [PlotSpec("heat_eigenmode", {"computed": (g.times, s["u"][(slice(None),) + probe]),
                                         "exact": (g.times, exact[(slice(None),) + probe])},
                      xlabel="t", ylabel="u(t, 0)", logy=True)]
    return Outcome(_status(ok), {"eigenmode_error": eig, "boundary": res, "zero_data_max": zero}, {}, plots)


@register("solve.stokes", "half-space Stokes problem with stress boundary data",
          GridSpec(n=2, N=32, L=np.pi, Nn=32, Ln=2 * np.pi, t_max=1.0, nt=33),
          {"members": 16, "mms_N": 64}, {"mms": 1e-2, "residual": 1e-3, "linearity": 1e-10}, seed=0)
def _stokes(cfg: ExperimentConfig) -> Outcome:
    """Manufactured solution, five residuals on a seeded ensemble and linearity."""
    from .linear_solvers import manufactured_stokes, random_stokes_data, relative, solve_stokes_halfspace
    g = cfg.grid.build()
    T = cfg.tolerances
    mN = int(cfg.params["mms_N"])
    gm = replace(cfg.grid, N=mN, Nn=mN, nt=mN + 1).build()
    data, exact = manufactured_stokes(gm)
    sol = solve_stokes_halfspace(data)
    err_u = relative(np.linalg.norm(sol.u.values - exact["u"]), np.linalg.norm(exact["u"]))
    err_p = relative(np.linalg.norm(sol.p.values - exact["p"]), np.linalg.norm(exact["p"]))
    keys = ("momentum", "divergence", "stress", "initial", "trace")
    rows, worst = [], dict.fromkeys(keys, 0.0)
    sols = []
    for m in range(int(cfg.params["members"])):
        d = random_stokes_data(g, seed=cfg.seed + m)
        s = solve_stokes_halfspace(d)
        sols.append((d, s))
        rows.append({"member": m, **{k: s.diagnostics[k] for k in keys}})
        for k in keys:
            worst[k] = max(worst[k], s.diagnostics[k])
    (d1, s1), (d2, s2) = sols[0], sols[1 % len(sols)]
    a, b = 0.7, -1.3
    s12 = solve_stokes_halfspace(d1.scaled(a) + d2.scaled(b))
    lin = max(relative(np.abs(s12.u.values - a * s1.u.values - b * s2.u.values).max(),
                       np.abs(s12.u.values).max()),
              relative(np.abs(s12.p.values - a * s1.p.values - b * s2.p.values).max(),
                       np.abs(s12.p.values).max()))
    ok = err_u < T["mms"] and max(worst.values()) < T["residual"] and lin < T["linearity"]
    plots = [PlotSpec("residuals", {k: [r[k] for r in rows] for k in keys}, kind="hist",
                      xlabel="relative residual", ylabel="members")]
    return Outcome(_status(ok), {"mms_u_error": err_u, "mms_p_error": err_p, "worst_residuals": worst,
                                 "linearity": lin, "members": len(rows)}, {"ensemble": rows}, plots,
                   arrays={"u_member0": s1.u})


@register("verify.maxreg", "maximal L1 regularity estimate for the half-space Stokes problem",
          GridSpec(n=2, N=32, L=np.pi, Nn=32, Ln=np.pi, t_max=1.0, nt=33),
          {"members": 3, "fine_N": 64, "scales": [0.01, 1.0, 10.0]}, {"stability": 0.20}, seed=0)
def _maxreg(cfg: ExperimentConfig) -> Outcome:
    """Empirical maximal-regularity constant at two resolutions and three decades."""
    from .linear_solvers import maximal_regularity_ratio, random_stokes_data
    res = {}
    for label, spec in (("coarse", cfg.grid),
                        ("fine", replace(cfg.grid, N=int(cfg.params["fine_N"]), Nn=int(cfg.params["fine_N"]),
                                         nt=2 * (cfg.grid.nt - 1) + 1))):
        g = spec.build()
        ens = [random_stokes_data(g, seed=cfg.seed + m) for m in range(int(cfg.params["members"]))]
        res[label] = maximal_regularity_ratio(ens, scales=tuple(cfg.params["scales"]))
    c, f = res["coarse"], res["fine"]
    spread = _spread(c.max_ratio, f.max_ratio)
    member = max(_spread(a, b) for a, b in zip(c.ratios, f.ratios))
    scale_spread = max(c.details["scale_spread"], f.details["scale_spread"])
    ok = c.finite and f.finite and spread <= cfg.tolerances["stability"] and scale_spread <= cfg.tolerances["stability"]
    metrics = {"C_M_coarse": c.max_ratio, "C_M_fine": f.max_ratio, "resolution_spread": spread,
               "member_spread": member, "scale_spread": scale_spread,
               "ratios_coarse": c.ratios, "ratios_fine": f.ratios,
               "laplacian_convention_coarse": c.details["laplacian_convention_ratios"],
               "laplacian_convention_fine": f.details["laplacian_convention_ratios"]}
    plots = [PlotSpec("maxreg_ratios", {"coarse": c.ratios, "fine": f.ratios}, kind="hist",
                      xlabel="LHS / RHS", ylabel="members")]
    return Outcome(_status(ok), metrics, {"ratios": [{"member": i, "coarse": a, "fine": b}
                                                     for i, (a, b) in enumerate(zip(c.ratios, f.ratios))]}, plots)


@register("verify.trace", "sharp trace estimate for the boundary pressure",
          GridSpec(n=2, N=32, L=np.pi, Nn=32, Ln=np.pi, t_max=1.0, nt=33),
          {"fields": 8, "fine_N": 64, "variant": "both"}, {"stability": 0.30, "drift": 0.30}, seed=0)
def _trace(cfg: ExperimentConfig) -> Outcome:
    """Trace-norm / RHS ratios: finite, grid-stable and invariant under a dyadic dilation."""
    from .grid_field import Grid
    from .linear_solvers import gaussian_trace_field, verify_sharp_trace
    variants = ("derivative", "pressure") if cfg.params["variant"] == "both" else (cfg.params["variant"],)
    g = cfg.grid.build()
    fN = int(cfg.params["fine_N"])
    gf = replace(cfg.grid, N=fN, Nn=fN, nt=2 * (cfg.grid.nt - 1) + 1).build()
    # dilation by 2: the same samples on a grid with lengths / 2 and t_max / 4
    gs = Grid(g.n, tuple(L / 2 for L in g.lengths), g.points, g.t_max / 4, g.nt)
    rows, ok = [], True
    for m in range(int(cfg.params["fields"])):
        f = gaussian_trace_field(g, seed=cfg.seed + m)
        ff = gaussian_trace_field(gf, seed=cfg.seed + m)
        for v in variants:
            r0 = verify_sharp_trace(f, grid=g, variant=v).max_ratio
            r1 = verify_sharp_trace(ff, grid=gf, variant=v).max_ratio
            r2 = verify_sharp_trace(f, grid=gs, variant=v).max_ratio
            row = {"field": m, "variant": v, "ratio": r0, "ratio_fine": r1, "ratio_dilated": r2,
                   "resolution_spread": _spread(r0, r1), "drift": _spread(r0, r2)}
            rows.append(row)
            ok &= bool(np.isfinite(r0) and np.isfinite(r1) and row["resolution_spread"] <= cfg.tolerances["stability"]
                       and row["drift"] <= cfg.tolerances["drift"])
    metrics = {"max_ratio": max(r["ratio"] for r in rows),
               "max_resolution_spread": max(r["resolution_spread"] for r in rows),
               "max_drift": max(r["drift"] for r in rows), "fields": int(cfg.params["fields"])}
    plots = [PlotSpec("trace_ratios", {v: [r["ratio"] for r in rows if r["variant"] == v] for v in variants},
                      kind="hist", xlabel="trace norm / RHS", ylabel="fields")]
    return Outcome(_status(ok), metrics, {"trace": rows}, plots)


def _dim_grid(cfg: ExperimentConfig, n: int):
    """The configured grid for ``n = 2``; the coarser ``N3`` lattice for ``n = 3``."""
    if n == 2:
        return replace(cfg.grid, n=2).build()
    N3 = int(cfg.params["N3"])
    return replace(cfg.grid, n=3, N=N3, Nn=max(8, N3 // 2)).build()


# Lagrangian structure --------------------------------------------------------------------------


def analytic_cofactor_state(grid):
    """Displacement ``(a sin(k x_2), b sin(m x_1))``: trigonometric cofactors, exact row divergence."""
    from .lagrangian_nl import FlowState
    x = grid.coords("whole_space")
    shp = grid.shape("whole_space")
    L0, L1 = grid.lengths[0], grid.lengths[1] if grid.n > 2 else 2 * grid.Ln
    t = (grid.times / grid.t_max).reshape((-1,) + (1,) * grid.n)
    X = np.zeros((grid.nt, grid.n) + shp)
    Xt = np.zeros_like(X)
    a, b = 0.1 * t, 0.05 * t ** 2
    X[:, 0] = a * np.sin(2 * np.pi * x[1] / L1)
    X[:, 1] = b * np.sin(4 * np.pi * x[0] / L0)
    Xt[:, 0] = 0.1 / grid.t_max * np.sin(2 * np.pi * x[1] / L1) * np.ones_like(t)
    Xt[:, 1] = 0.1 * t / grid.t_max * np.sin(4 * np.pi * x[0] / L0)
    return FlowState.from_displacement(grid, X, Xt)


@register("verify.cofactor", "divergence-free rows of the cofactor matrix",
          GridSpec(n=2, N=32, L=2 * np.pi, Nn=16, Ln=np.pi, t_max=1.0, nt=9),
          {"states": 16, "dims": [2, 3], "N3": 16}, {"violation": 1e-8, "analytic": 1e-13}, seed=0)
def _cofactor(cfg: ExperimentConfig) -> Outcome:
    """Row divergences of all sub-cofactors on seeded band-limited states."""
    from .lagrangian_nl import random_lagrangian_state, verify_cofactor_divfree
    rows, worst = [], 0.0
    for n in cfg.params["dims"]:
        g = _dim_grid(cfg, int(n))
        for m in range(int(cfg.params["states"])):
            rep = verify_cofactor_divfree(random_lagrangian_state(g, seed=cfg.seed + m))
            rows.append({"n": int(n), "state": m, "violation": rep.max_violation})
            worst = max(worst, rep.max_violation)
    analytic = verify_cofactor_divfree(analytic_cofactor_state(_dim_grid(cfg, 2))).max_violation
    ok = worst < cfg.tolerances["violation"] and analytic < cfg.tolerances["analytic"]
    plots = [PlotSpec("cofactor_violation", {f"n={d}": [np.log10(max(r["violation"], 1e-300)) for r in rows
                                                         if r["n"] == d] for d in sorted({r["n"] for r in rows})},
                      kind="hist", xlabel="log10 max row divergence", ylabel="states")]
    return Outcome(_status(ok), {"max_violation": worst, "analytic_n2": analytic, "states": len(rows)},
                   {"cofactor": rows}, plots)


@register("verify.flowmap", "volume preservation of the Lagrangian flow map",
          GridSpec(n=2, N=32, L=2 * np.pi, Nn=16, Ln=np.pi, t_max=1.0, nt=9),
          {"velocities": 4, "points": 8, "steps": 64, "dims": [2, 3], "N3": 16},
          {"det": 1e-6, "rotation": 1e-6}, seed=0)
def _flowmap(cfg: ExperimentConfig) -> Outcome:
    """|det DY - 1| along RK4 trajectories of seeded divergence-free fields; rigid rotation."""
    from .grid_field import Field
    from .lagrangian_nl import integrate_flow_map, linear_velocity, random_divfree_torus
    rng = np.random.default_rng(cfg.seed)
    rows, worst = [], 0.0
    for n in cfg.params["dims"]:
        g = _dim_grid(cfg, int(n))
        for m in range(int(cfg.params["velocities"])):
            u = random_divfree_torus(g, seed=cfg.seed + m)
            F = Field(g, u, "vector", "physical", "whole_space")
            x0 = rng.uniform(0, 3, size=(int(cfg.params["points"]), g.n))
            tr = integrate_flow_map(F, x0, 1.0, int(cfg.params["steps"]))
            d = float(np.abs(tr.det[-1] - 1).max())
            rows.append({"n": g.n, "velocity": m, "det_error": d})
            worst = max(worst, d)
    x0 = np.array([[1.0, 0.0], [0.3, 2.0]])
    tr = integrate_flow_map(linear_velocity([[0, -1], [1, 0]]), x0, 1.0, int(cfg.params["steps"]))
    R = np.array([[np.cos(1), -np.sin(1)], [np.sin(1), np.cos(1)]])
    rot = float(np.abs(tr.positions[-1] - x0 @ R.T).max())
    rot_det = float(np.abs(tr.det - 1).max())
    ok = worst < cfg.tolerances["det"] and rot < cfg.tolerances["rotation"] and rot_det < cfg.tolerances["rotation"]
    plots = [PlotSpec("flowmap_det", {f"n={d}": [np.log10(max(r["det_error"], 1e-300)) for r in rows
                                                  if r["n"] == d] for d in sorted({r["n"] for r in rows})},
                      kind="hist", xlabel="log10 |det - 1| at t = 1", ylabel="velocities")]
    return Outcome(_status(ok), {"max_det_error": worst, "rotation_position_error": rot,
                                 "rotation_det_error": rot_det}, {"flowmap": rows}, plots)


@register("verify.dualforms", "matrix and polynomial forms of the Lagrangian nonlinear terms",
          GridSpec(n=2, N=32, L=2 * np.pi, Nn=16, Ln=np.pi, t_max=1.0, nt=17),
          {"states": 3, "eps": [1e-4, 2e-4, 4e-4, 8e-4], "dims": [2, 3], "N3": 16, "N3_shear": 32},
          {"agreement": 1e-10, "div_bar": 1e-8, "slope": 1e-3}, seed=0)
def _dualforms(cfg: ExperimentConfig) -> Outcome:
    """Matrix vs polynomial evaluation, G_div = div G_div_bar and first-order eps-slopes."""
    from .lagrangian_nl import (assemble_nonlinear_terms, loglog_slope, random_lagrangian_state,
                                random_pressure_torus, shear_flow_state, verify_dual_forms)
    T = cfg.tolerances
    rows, agree, divbar = [], 0.0, 0.0
    names = ("F_u", "F_p", "G_div", "G_div_bar", "H_u", "H_p")
    for n in cfg.params["dims"]:
        g = _dim_grid(cfg, int(n))
        # composed shears have broad spectra: the 3-d shear check needs a full 32^3 lattice
        gs = g if g.n == 2 else replace(g, points=(int(cfg.params["N3_shear"]),) * 3, nt=9)
        ps = [random_pressure_torus(gs, cfg.seed + m) for m in range(int(cfg.params["states"]))]
        for m in range(int(cfg.params["states"])):
            p = random_pressure_torus(g, cfg.seed + m)
            d = verify_dual_forms(random_lagrangian_state(g, seed=cfg.seed + m), p)
            sh = verify_dual_forms(shear_flow_state(gs, seed=cfg.seed + m), ps[m])
            a = max(d[k] for k in names if k in d)
            agree = max(agree, a, max(sh[k] for k in names if k in sh))
            divbar = max(divbar, sh["G_div_vs_div_bar"])
            rows.append({"n": g.n, "state": m, "agreement": a, "shear_G_div_vs_div_bar": sh["G_div_vs_div_bar"],
                         "shear_det_defect": sh["det_defect"]})
    # eps-slopes on the first state (n = cfg.grid.n)
    g = _dim_grid(cfg, 2)
    p = random_pressure_torus(g, cfg.seed)
    eps = [float(e) for e in cfg.params["eps"]]
    sizes = {k: [] for k in names}
    for e in eps:
        t = assemble_nonlinear_terms(random_lagrangian_state(g, seed=cfg.seed, scale=e), p)
        for k in names:
            if getattr(t, k) is not None:
                sizes[k].append(float(np.max(np.abs(getattr(t, k)))))
    sizes = {k: v for k, v in sizes.items() if v}
    slopes = {k: loglog_slope(eps, v) for k, v in sizes.items()}
    first = max(abs(slopes["F_p"] - 1), abs(slopes["H_p"] - 1))
    ok = agree < T["agreement"] and divbar < T["div_bar"] and first < T["slope"]
    metrics = {"max_agreement": agree, "G_div_vs_div_bar": divbar, "eps_slopes": slopes,
               "first_order_slope_error": first}
    plots = [PlotSpec("eps_slopes", {k: (eps, v) for k, v in sizes.items()}, xlabel="eps", ylabel="max |term|",
                      logx=True, logy=True)]
    return Outcome(_status(ok), metrics, {"dualforms": rows}, plots)


@register("verify.divcurl", "div-curl structure of the Lagrangian pressure and divergence terms",
          GridSpec(n=2, N=32, L=2 * np.pi, Nn=16, Ln=np.pi, t_max=1.0, nt=9),
          {"states": 4, "dims": [2, 3], "N3": 16}, {"violation": 1e-8}, seed=0)
def _divcurl(cfg: ExperimentConfig) -> Outcome:
    """curl-free and divergence-free factors whose product reassembles F_p and G_div."""
    from .lagrangian_nl import random_lagrangian_state, random_pressure_torus, verify_div_curl_structure
    rows, worst = [], 0.0
    for n in cfg.params["dims"]:
        g = _dim_grid(cfg, int(n))
        for m in range(int(cfg.params["states"])):
            rep = verify_div_curl_structure(random_lagrangian_state(g, seed=cfg.seed + m),
                                            random_pressure_torus(g, cfg.seed + m),
                                            tolerance=cfg.tolerances["violation"])
            rows.append({"n": g.n, "state": m, "violation": rep.max_violation})
            worst = max(worst, rep.max_violation)
    plots = [PlotSpec("divcurl_violation", {f"n={d}": ([r["state"] for r in rows if r["n"] == d],
                                                       [max(r["violation"], 1e-300) for r in rows if r["n"] == d])
                                            for d in sorted({r["n"] for r in rows})},
                      xlabel="state", ylabel="max structure defect", logy=True)]
    return Outcome(_status(worst < cfg.tolerances["violation"]), {"max_violation": worst}, {"divcurl": rows}, plots)


# bilinear ------------------------------------------------------------------------------------


@register("verify.bilinear", "paraproduct and bilinear estimates in critical Besov spaces",
          GridSpec(n=2, N=32, L=2 * np.pi, Nn=16, Ln=np.pi, t_max=1.0, nt=33),
          {"members": 4, "kinds": ["all"]}, {"resummation": 1e-10, "stability": 0.30, "structure": 1e-10}, seed=0)
def _bilinear(cfg: ExperimentConfig) -> Outcome:
    """Bony resummation; finite, two-resolution-stable ratios for every product estimate."""
    from .bilinear_para import BILINEAR_KINDS, bony_decompose, generate_ensemble, random_band_limited, verify_bilinear
    kinds = BILINEAR_KINDS if list(cfg.params["kinds"]) == ["all"] else tuple(cfg.params["kinds"])
    T = cfg.tolerances
    g = cfg.grid.build()
    gf = replace(cfg.grid, N=2 * cfg.grid.N, Nn=2 * (cfg.grid.Nn or cfg.grid.N)).build()
    f = random_band_limited(g, seed=cfg.seed)
    h = random_band_limited(g, seed=cfg.seed + 1)
    resum = bony_decompose(f, h, grid=g, domain="whole_space").truncation["resummation"]
    rows, ok, struct = [], resum < T["resummation"], 0.0
    for kind in kinds:
        rc = verify_bilinear(kind, generate_ensemble(kind, g, int(cfg.params["members"]), cfg.seed), grid=g)
        rf = verify_bilinear(kind, generate_ensemble(kind, gf, int(cfg.params["members"]), cfg.seed), grid=gf)
        sp = _spread(rc.max_ratio, rf.max_ratio)
        if kind == "div_curl":
            struct = max(rc.details["max_div_f"], rc.details["max_curl_g"],
                         rf.details["max_div_f"], rf.details["max_curl_g"])
            ok &= struct < T["structure"]
        good = rc.finite and rf.finite and sp <= T["stability"]
        ok &= good
        rows.append({"kind": kind, "ratio": rc.max_ratio, "ratio_fine": rf.max_ratio, "spread": sp, "pass": good})
    plots = [PlotSpec("bilinear_ratios", {r["kind"]: ([0, 1], [r["ratio"], r["ratio_fine"]]) for r in rows},
                      xlabel="resolution (0 coarse, 1 fine)", ylabel="max LHS / RHS", logy=True)]
    return Outcome(_status(bool(ok)), {"resummation": resum, "structure_defect": struct, "kinds": rows},
                   {"bilinear": rows}, plots)


@register("verify.bilinear_trend", "div-curl versus generic critical products as p approaches 2n",
          GridSpec(n=2, N=32, L=2 * np.pi, Nn=16, Ln=np.pi, t_max=1.0, nt=9),
          {"p_values": [2.0, 2.5, 3.0, 3.5], "members": 4}, seed=0)
def _bilinear_trend(cfg: ExperimentConfig) -> Outcome:
    """Informative: measured constants of both ensembles along a p sweep."""
    from .bilinear_para import p_trend
    tr = p_trend(cfg.grid.build(), [float(p) for p in cfg.params["p_values"]], int(cfg.params["members"]), cfg.seed)
    return Outcome("informative", tr)


# Navier-Stokes ----------------------------------------------------------------------------------


@register("solve.ns", "global solvability for small critical data via contraction",
          GridSpec(n=2, N=64, L=np.pi, Nn=64, Ln=np.pi, t_max=1.0, nt=65),
          {"p": 2.0, "eps": 0.05, "width": 1.0, "mode": 1, "M": 1.0, "max_iters": 12,
           "coarse_N": 32, "coarse_nt": 33, "sweep": [0.125, 0.25, 0.5, 1.0], "bisect_lo": 0.001,
           "bisect_hi": 1.0, "bisect_steps": 5, "audits": True, "samples": 100},
          {"contraction": 0.6, "residual": 1e-3, "slope": 0.1, "growth": 0.05, "pullback": 10.0}, seed=0)
def _ns(cfg: ExperimentConfig) -> Outcome:
    """Picard iteration with bisected eps0, eps-sweep, T-doubling and the Eulerian pull-back."""
    from .grid_field import ExtensionPolicy, Field
    from .lagrangian_nl import loglog_slope
    from .nls_fixedpoint import (FixedPointConfig, bisect_eps0, pullback_eulerian, run_fixed_point,
                                 scaled_initial_velocity)
    P, T = cfg.params, cfg.tolerances
    kw = {"width": float(P["width"]), "k": int(P["mode"])}
    g = cfg.grid.build()
    coarse_spec = replace(cfg.grid, N=int(P["coarse_N"]), Nn=int(P["coarse_N"]), nt=int(P["coarse_nt"]))
    gc = coarse_spec.build()
    fp = lambda grid, iters=int(P["max_iters"]): FixedPointConfig(grid, float(P["p"]), float(P["eps"]),
                                                                   float(P["M"]), iters, T["contraction"], T["residual"])
    metrics, tables, plots, times = {}, {}, [], {}
    ok = True
    eps = float(P["eps"])
    if P["audits"]:
        t0 = time.perf_counter()
        bis = bisect_eps0(fp(gc), float(P["bisect_lo"]), float(P["bisect_hi"]), int(P["bisect_steps"]), **kw)
        times["bisection"] = time.perf_counter() - t0
        metrics["eps0"] = bis
        eps = min(eps, bis["eps0"])
    t0 = time.perf_counter()
    u0 = scaled_initial_velocity(g, eps, float(P["p"]), **kw)
    trace, jets = run_fixed_point(u0, fp(g))
    times["main_run"] = time.perf_counter() - t0
    early = max(trace.ratios[:2]) if trace.ratios else 0.0
    late = trace.ratios[1:]
    main = {"eps": eps, "status": trace.status, "iterations": len(trace.x_norms),
            "final_x_norm": trace.x_norms[-1], "x_terms": trace.x_terms[-1] if trace.x_terms else {},
            "ratios": trace.ratios, "residual": trace.residuals[-1], "u0_norm": trace.u0_norm,
            "boundary_diff_norms": trace.boundary_diff_norms,
            "monotone_trace": all(r <= max(early, T["contraction"]) for r in late)}
    ok &= trace.status == "converged" and (not late or max(late) <= T["contraction"])
    ok &= trace.residuals[-1] < T["residual"]
    metrics["main"] = main
    tables["iterations"] = trace.rows()
    plots.append(PlotSpec("iteration_trace", {"successive difference": (list(range(1, len(trace.diff_norms) + 1)),
                                                                        trace.diff_norms)},
                          xlabel="iteration", ylabel="X-norm", logy=True))
    if P["audits"]:
        t0 = time.perf_counter()
        xs, rmax, sweep = [], [], []
        for fac in P["sweep"]:
            e = eps * float(fac)
            tr, _ = run_fixed_point(scaled_initial_velocity(gc, e, float(P["p"]), **kw), fp(gc))
            xs.append(tr.x_norms[-1])
            rmax.append(max(tr.ratios) if tr.ratios else 0.0)
            sweep.append({"eps": e, "x_norm": tr.x_norms[-1], "max_ratio": rmax[-1], "status": tr.status})
        es = [r["eps"] for r in sweep]
        slope = loglog_slope(es, xs)
        monotone = all(a <= b for a, b in zip(rmax, rmax[1:]))
        times["sweep"] = time.perf_counter() - t0
        metrics["sweep"] = {"slope": slope, "ratio_monotone": monotone, "runs": sweep}
        tables["sweep"] = sweep
        plots.append(PlotSpec("eps_sweep", {"final X-norm": (es, xs)}, xlabel="eps", ylabel="X-norm",
                              logx=True, logy=True))
        ok &= abs(slope - 1) <= T["slope"] and monotone
        # finite-window audit: same time step, doubled horizon
        t0 = time.perf_counter()
        base_nt = 2 * (int(P["coarse_nt"]) - 1) + 1
        g1 = replace(coarse_spec, t_max=cfg.grid.t_max, nt=base_nt).build()
        g2 = replace(coarse_spec, t_max=2 * cfg.grid.t_max, nt=2 * (base_nt - 1) + 1).build()
        x1 = run_fixed_point(scaled_initial_velocity(g1, eps, float(P["p"]), **kw), fp(g1))[0].x_norms[-1]
        x2 = run_fixed_point(scaled_initial_velocity(g2, eps, float(P["p"]), **kw), fp(g2))[0].x_norms[-1]
        growth = (x2 - x1) / x1
        times["doubling"] = time.perf_counter() - t0
        metrics["t_doubling"] = {"x_T": x1, "x_2T": x2, "growth": growth}
        ok &= growth < T["growth"]
    pb = pullback_eulerian(jets, g, samples=int(P["samples"]), seed=cfg.seed)
    metrics["pullback"] = pb
    ok &= pb["ratio"] < T["pullback"]
    field = Field(g, jets["u"], "vector", "physical", "half_space", ExtensionPolicy.velocity(g.n), True)
    return Outcome(_status(bool(ok)), metrics, tables, plots, times, {"u_final": field})


# dispatch -------------------------------------------------------------------------------------------


def resolve(name: str, overrides: dict | None = None, sections: dict | None = None,
            seed: int | None = None) -> ExperimentConfig:
    from .config import apply_flat, apply_sections
    exp = get(name)
    cfg = exp.defaults
    if sections:
        cfg = apply_sections(sections, cfg)
    if overrides:
        cfg = apply_flat(overrides, cfg)
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    return cfg.validate(exp.randomized)


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None, name: str | None = None,
                   plots: bool = True) -> RunReport:
    """Run a resolved config; artifacts go to ``out_dir`` when given."""
    exp = get(cfg.experiment)
    cfg.validate(exp.randomized)
    t0 = time.perf_counter()
    try:
        oc = exp.runner(cfg)
        status, metrics, message = oc.status, oc.metrics, ""
    except ConfigError:
        raise
    except Exception as exc:  # a crashed check is a failure, not a usage error
        oc = Outcome("error", {})
        status, metrics, message = "error", {}, f"{type(exc).__name__}: {exc}"
    wall = time.perf_counter() - t0
    rep = RunReport(cfg.experiment, exp.anchor, status, metrics, cfg.config_hash(), wall, name, message)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        arts = [write_csv(out / "metrics.csv", metric_rows(metrics))]
        for tname, rows in oc.tables.items():
            if rows:
                arts.append(write_csv(out / f"{tname}.csv", rows))
        if plots:
            for spec in oc.plots:
                arts.extend(render(spec, out))
        if oc.arrays:
            from .snapshot import save_field
            for aname, fld in oc.arrays.items():
                arts.append(save_field(out / f"{aname}.hsf", fld))
        rep.artifacts = [p.name for p in arts] + ["report.json"]
        write_json(out / "report.json", {**rep.to_dict(), "timings": oc.timings, "config": cfg.to_dict()})
    rep.timings = oc.timings
    return rep
