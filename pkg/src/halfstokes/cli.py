"""Command line entry point ``halfstokes``.

Verbs::

    halfstokes verify <check>   [options]    partition, symbols, orthogonality, cofactor, divcurl,
                                             bilinear, trace, integral, maxreg, flowmap, dualforms,
                                             bilinear_trend
    halfstokes solve <problem>  [options]    heat, stokes, ns
    halfstokes suite run <manifest> [--jobs J] [--seed S] [--out DIR]
    halfstokes list                          registered experiments and their anchors
    halfstokes show <experiment> [options]   resolved configuration as INI text

Exit codes: 0 when every non-informative check passes, 1 when a check
fails or crashes, 2 for usage errors (unknown experiment, bad config).
"""
from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import experiments as E
from .config import ConfigError, default_out_dir, ini_text, read_ini, read_manifest
from .reports import RunReport, suite_summary, write_json

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _parse_sets(items) -> dict:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="FILE", help="INI file with [run]/[grid]/[params]/[tolerances]")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", default=[],
                   help="flat override (grid key, param, or tol_<name>); repeatable")
    p.add_argument("--seed", type=int, default=None, help="seed for randomized experiments")
    p.add_argument("--n", type=int, default=None,
                   help="spatial dimension (sets 'dims' for checks that sweep dimensions)")
    p.add_argument("--out", default=None, help="output directory (default: $HALFSTOKES_OUT or ./halfstokes_runs)")
    p.add_argument("--no-plots", action="store_true", help="skip SVG/PNG figures")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="halfstokes", description=__doc__.split("\n")[0],
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="verb", required=True)
    for verb in ("verify", "solve"):
        names = sorted(k.split(".", 1)[1] for k in E.REGISTRY if k.startswith(verb + "."))
        p = sub.add_parser(verb, help=f"run one {verb} experiment")
        p.add_argument("target", choices=names)
        _common(p)
    s = sub.add_parser("suite", help="run a manifest of checks")
    s.add_argument("action", choices=["run"])
    s.add_argument("manifest")
    s.add_argument("--jobs", type=int, default=1, help="parallel worker processes (default 1)")
    s.add_argument("--seed", type=int, default=None, help="default seed for every check")
    s.add_argument("--out", default=None, help="output directory (default: $HALFSTOKES_OUT/<manifest stem>)")
    s.add_argument("--no-plots", action="store_true")
    sub.add_parser("list", help="list registered experiments")
    sh = sub.add_parser("show", help="print the resolved configuration")
    sh.add_argument("experiment")
    _common(sh)
    return ap


def _resolve(name: str, args) -> E.ExperimentConfig:
    exp = E.get(name)
    over = _parse_sets(args.set)
    if args.n is not None:
        over["dims" if "dims" in exp.defaults.params else "n"] = str(args.n)
    sections = read_ini(args.config) if args.config else None
    return E.resolve(name, over, sections, args.seed)


def _line(rep: RunReport) -> str:
    tag = rep.status.upper()
    extra = f": {rep.message}" if rep.message else ""
    return f"[{tag}] {rep.name or rep.experiment} ({rep.paper_anchor}) {rep.wall_time:.1f}s{extra}"


def _exit_for(reports) -> int:
    return EXIT_OK if all(r.ok for r in reports) else EXIT_FAIL


def _run_check(name: str, flat: dict, seed, out_dir: str, plots: bool) -> dict:
    """Worker: one manifest entry, returned as a plain dict (picklable)."""
    flat = dict(flat)
    experiment = flat.pop("experiment")
    exp = E.get(experiment)
    if seed is not None and "seed" not in flat and exp.randomized:
        flat["seed"] = str(seed)
    cfg = E.resolve(experiment, flat)
    rep = E.run_experiment(cfg, Path(out_dir) / name, name=name, plots=plots)
    return {**rep.to_dict(), "timings": rep.timings}


def _report_from(d: dict) -> RunReport:
    return RunReport(d["experiment"], d["paper_anchor"], d["status"], d["metrics"], d["config_hash"],
                     d.get("wall_time", 0.0), d["name"], d["message"], list(d["artifacts"]),
                     d.get("timings", {}))


def run_suite(manifest: str | Path, out_dir: str | Path, jobs: int = 1, seed: int | None = None,
              plots: bool = True) -> tuple[dict, list[RunReport]]:
    suite, checks = read_manifest(manifest)
    if seed is None and "seed" in suite:
        seed = int(suite["seed"])
    # validate every entry before spending time on any of them
    for name, body in checks:
        flat = {k: v for k, v in body.items() if k != "experiment"}
        exp = E.get(body["experiment"])
        if seed is not None and "seed" not in flat and exp.randomized:
            flat["seed"] = str(seed)
        E.resolve(body["experiment"], flat)
    out_dir = Path(out_dir)
    if jobs > 1 and len(checks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = [pool.submit(_run_check, n, b, seed, str(out_dir), plots) for n, b in checks]
            results = [f.result() for f in futs]
    else:
        results = [_run_check(n, b, seed, str(out_dir), plots) for n, b in checks]
    reports = sorted((_report_from(d) for d in results), key=lambda r: r.name)
    summary = suite_summary(reports)
    summary["manifest"] = Path(manifest).name
    summary["seed"] = seed
    write_json(out_dir / "summary.json", summary)
    write_json(out_dir / "timings.json", {r.name: {"wall_time": r.wall_time, **r.timings} for r in reports})
    return summary, reports


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    try:
        if args.verb == "list":
            for name in sorted(E.REGISTRY):
                exp = E.REGISTRY[name]
                print(f"{name:24s} {'seeded ' if exp.randomized else '       '}{exp.anchor}")
            return EXIT_OK
        if args.verb == "show":
            sys.stdout.write(ini_text(_resolve(args.experiment, args)))
            return EXIT_OK
        if args.verb == "suite":
            out = args.out or str(Path(default_out_dir()) / Path(args.manifest).stem)
            if not Path(args.manifest).is_file():
                raise ConfigError(f"manifest {args.manifest} not found")
            summary, reports = run_suite(args.manifest, out, max(1, args.jobs), args.seed, not args.no_plots)
            for r in reports:
                print(_line(r))
            c = summary["counts"]
            print(f"{len(reports)} checks: {c['pass']} pass, {c['fail']} fail, {c['error']} error, "
                  f"{c['informative']} informative -> {out}/summary.json")
            return _exit_for(reports)
        name = f"{args.verb}.{args.target}"
        cfg = _resolve(name, args)
        out = Path(args.out or cfg.out_dir or default_out_dir()) / name
        rep = E.run_experiment(cfg, out, plots=not args.no_plots)
        print(_line(rep))
        print(f"artifacts in {out}")
        return _exit_for([rep])
    except ConfigError as exc:
        print(f"halfstokes: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
