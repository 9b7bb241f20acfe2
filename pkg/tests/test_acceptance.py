"""Acceptance criteria 1-15, each checked at its stated tolerance.

Every experiment runs once per session at its default configuration.  Each test
records a one-line outcome that the terminal summary prints as
``criterion N: PASS|FAIL ...``.
"""
import math
from pathlib import Path

import numpy as np
import pytest

from halfstokes import experiments as E
from halfstokes.cli import run_suite

from conftest import ACCEPTANCE

MANIFESTS = Path(__file__).resolve().parent.parent / "manifests"
_CACHE: dict = {}


@pytest.fixture(scope="session")
def outdir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


def run(name, outdir):
    if name not in _CACHE:
        _CACHE[name] = E.run_experiment(E.resolve(name), outdir / name, plots=False)
    return _CACHE[name]


def check(k: int, ok: bool, line: str):
    ACCEPTANCE[k] = ("PASS" if ok else "FAIL", line)
    assert ok, line


def test_criterion_01_partition_of_unity(outdir):
    rep = run("verify.partition", outdir)
    m = rep.metrics
    sizes = [g["N"] for g in m["grids"]]
    slowest = max(rep.timings.values())
    ok = m["max_deviation"] < 1e-12 and max(sizes) >= 256 and slowest < 1.0
    check(1, ok, f"max deviation {m['max_deviation']:.1e} over N={sizes}, slowest grid {slowest:.2f}s")


def test_criterion_02_symbol_bounds(outdir):
    rep = run("verify.symbols", outdir)
    m = rep.metrics
    b, d = m["b"], m["d"]
    lo_b, lo_d, hi = 1 / math.sqrt(2), 0.5, 20 ** 0.25
    tol = 1e-12  # the upper bound is attained at the corner of the closed region
    bounds = (b["min"] >= lo_b - tol and b["max"] <= hi + tol and d["min"] >= lo_d - tol and d["max"] <= hi + tol)
    samples = E.resolve("verify.symbols").params["samples"]
    sups = m["m_sup"]
    stable = all(np.isfinite(r["coarse"]) and np.isfinite(r["fine"]) and r["spread"] <= 0.10 for r in sups.values())
    ok = bounds and m["violations"] == 0 and samples >= 10 ** 5 and stable
    spreads = ", ".join(f"{k} {v['spread']:.3f}" for k, v in sups.items())
    check(2, ok, f"|b| in [{b['min']:.4f}, {b['max']:.4f}], |d| in [{d['min']:.4f}, {d['max']:.4f}], "
                 f"{m['violations']} violations, sup |m| spreads "
                 f"{spreads}")


def test_criterion_03_orthogonality_time(outdir):
    rep = run("verify.orthogonality", outdir)
    t = rep.metrics["time"]
    rows = t["pairs"]
    slopes = [r["slope"] for r in rows]
    slope_ok = all(-2.5 <= s <= -1.5 for s in slopes)
    dom_ok = all(r["domination"] <= 1.0 for r in rows)
    rate_ok = all(2.0 ** (r["j"] - 2) <= r["eta_rate"] <= 2.0 ** r["j"] for r in rows)
    ok = len(rows) == 6 and all(r["k"] >= 2 * r["j"] for r in rows) and slope_ok and dom_ok and rate_ok \
        and rep.wall_time < 300
    check(3, ok, f"slopes {[round(s, 2) for s in slopes]} (window [-2.5, -1.5]), max domination "
                 f"{max(r['domination'] for r in rows):.2f}, eta rates in range: {rate_ok}, {rep.wall_time:.0f}s")


def test_criterion_04_orthogonality_convolved(outdir):
    rep = run("verify.orthogonality", outdir)
    c = rep.metrics["convolved"]
    ratios = c["ratios"]
    ratio_ok = len(ratios) == 4 and all(0.3 <= r <= 0.7 for r in ratios)
    polynomial = c["power_fit_residual"] < c["exp_fit_residual"]
    check(4, ratio_ok and polynomial,
          f"m-ratios {[round(r, 3) for r in ratios]} (window [0.3, 0.7]), tail fit residuals power "
          f"{c['power_fit_residual']:.2f} vs exponential {c['exp_fit_residual']:.2f}")


def test_criterion_05_integral_bound(outdir):
    rep = run("verify.integral", outdir)
    m = rep.metrics
    spots = m["spot_checks"]
    spot_ok = all(abs(s["lhs"] - s["lhs_ref"]) < 5e-6 and abs(s["rhs"] - s["rhs_ref"]) < 5e-6 for s in spots)
    ok = rep.status == "pass" and m["max_quad_error"] < 1e-8 and m["pairs"] >= 20 and spot_ok
    check(5, ok, f"{m['pairs']} pairs hold, quadrature error {m['max_quad_error']:.1e}, "
                 f"spot values {[(round(s['lhs'], 5), round(s['rhs'], 5)) for s in spots]}")


def test_criterion_06_heat_neumann(outdir):
    m = run("solve.heat", outdir).metrics
    ok = m["eigenmode_error"] < 1e-6 and m["boundary"]["neumann"] < 1e-3 and m["zero_data_max"] == 0.0
    check(6, ok, f"eigenmode error {m['eigenmode_error']:.1e}, Neumann residual {m['boundary']['neumann']:.1e}, "
                 f"zero data max {m['zero_data_max']}")


def test_criterion_07_halfspace_stokes(outdir):
    m = run("solve.stokes", outdir).metrics
    worst = m["worst_residuals"]
    ok = (m["mms_u_error"] < 1e-2 and m["members"] >= 16 and len(worst) == 5
          and max(worst.values()) < 1e-3 and m["linearity"] < 1e-10)
    check(7, ok, f"MMS error {m['mms_u_error']:.1e}, worst residual {max(worst.values()):.1e} over "
                 f"{m['members']} members, linearity {m['linearity']:.1e}")


def test_criterion_08_maximal_regularity(outdir):
    m = run("verify.maxreg", outdir).metrics
    ratios = m["ratios_coarse"] + m["ratios_fine"]
    finite = all(np.isfinite(ratios))
    ok = finite and m["resolution_spread"] <= 0.2 and m["scale_spread"] <= 0.2
    check(8, ok, f"C_M {m['C_M_coarse']:.3f} / {m['C_M_fine']:.3f}, resolution spread "
                 f"{m['resolution_spread']:.3f}, scale spread over 3 decades {m['scale_spread']:.1e}")


def test_criterion_09_cofactor_divfree(outdir):
    rep = run("verify.cofactor", outdir)
    m = rep.metrics
    dims = E.resolve("verify.cofactor").params["dims"]
    ok = m["max_violation"] < 1e-8 and m["analytic_n2"] < 1e-13 and sorted(dims) == [2, 3] and m["states"] >= 32
    check(9, ok, f"max row divergence {m['max_violation']:.1e} on {m['states']} states (n=2,3), "
                 f"analytic n=2 {m['analytic_n2']:.1e}")


def test_criterion_10_flow_map(outdir):
    m = run("verify.flowmap", outdir).metrics
    ok = m["max_det_error"] < 1e-6 and m["rotation_position_error"] < 1e-6 and m["rotation_det_error"] < 1e-6
    check(10, ok, f"|det - 1| {m['max_det_error']:.1e}, rotation error {m['rotation_position_error']:.1e}")


def test_criterion_11_dual_forms(outdir):
    m = run("verify.dualforms", outdir).metrics
    ok = m["max_agreement"] < 1e-10 and m["G_div_vs_div_bar"] < 1e-8 and m["first_order_slope_error"] < 1e-3
    check(11, ok, f"form agreement {m['max_agreement']:.1e}, G_div vs div G_bar {m['G_div_vs_div_bar']:.1e}, "
                  f"slope error {m['first_order_slope_error']:.1e}")


def test_criterion_12_bilinear(outdir):
    m = run("verify.bilinear", outdir).metrics
    kinds = m["kinds"]
    stable = all(np.isfinite(r["ratio"]) and np.isfinite(r["ratio_fine"]) and r["spread"] <= 0.3 for r in kinds)
    ok = m["resummation"] < 1e-10 and m["structure_defect"] < 1e-10 and stable and len(kinds) >= 4
    check(12, ok, f"resummation {m['resummation']:.1e}, div/curl defect {m['structure_defect']:.1e}, "
                  f"max spread {max(r['spread'] for r in kinds):.3f} over {len(kinds)} kinds")


def test_criterion_13_sharp_trace(outdir):
    m = run("verify.trace", outdir).metrics
    ok = (m["fields"] >= 8 and np.isfinite(m["max_ratio"]) and m["max_resolution_spread"] <= 0.3
          and m["max_drift"] < 0.3)
    check(13, ok, f"max ratio {m['max_ratio']:.3f}, resolution spread {m['max_resolution_spread']:.3f}, "
                  f"dyadic drift {m['max_drift']:.3f}")


def test_criterion_14_fixed_point(outdir):
    rep = run("solve.ns", outdir)
    m = rep.metrics
    main = m["main"]
    late = main["ratios"][1:]
    ok = (main["status"] == "converged" and (not late or max(late) <= 0.6) and main["residual"] < 1e-3
          and abs(m["sweep"]["slope"] - 1) <= 0.1 and m["t_doubling"]["growth"] < 0.05
          and m["pullback"]["ratio"] < 10 and rep.wall_time < 600)
    check(14, ok, f"eps0 {m['eps0']['eps0']:.3f}, max ratio {max(main['ratios']):.3f}, residual "
                  f"{main['residual']:.1e}, sweep slope {m['sweep']['slope']:.3f}, T-doubling growth "
                  f"{m['t_doubling']['growth']:.1e}, pull-back ratio {m['pullback']['ratio']:.2f}, "
                  f"{rep.wall_time:.0f}s")


def test_criterion_15_suite_determinism(tmp_path):
    manifest = MANIFESTS / "quick.ini"
    run_suite(manifest, tmp_path / "a", plots=False)
    run_suite(manifest, tmp_path / "b", plots=False)
    a, b = (tmp_path / "a" / "summary.json").read_bytes(), (tmp_path / "b" / "summary.json").read_bytes()
    check(15, a == b, f"quick manifest twice: summaries {'identical' if a == b else 'differ'} ({len(a)} bytes)")
