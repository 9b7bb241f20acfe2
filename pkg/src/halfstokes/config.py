"""Experiment configuration: a typed INI format with one nesting level.

A config file has up to four sections::

    [run]
    experiment = solve.ns
    seed = 0
    out = runs/ns

    [grid]
    n = 2
    N = 64
    nt = 65

    [params]
    eps = 0.05
    widths = 0.5, 1.0

    [tolerances]
    residual = 1e-3

Values are typed by the registered experiment's defaults: ints, floats,
booleans (``true``/``false``), strings and comma-separated lists.  Keys
the experiment does not declare are rejected.
"""
from __future__ import annotations

import configparser
import hashlib
import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from .grid_field import Grid

OUT_ENV = "HALFSTOKES_OUT"
DEFAULT_OUT = "halfstokes_runs"

GRID_KEYS = ("n", "N", "Nn", "L", "Ln", "t_max", "nt")
SECTIONS = ("run", "grid", "params", "tolerances")


class ConfigError(ValueError):
    """Invalid or inconsistent configuration (a usage error)."""


def default_out_dir() -> str:
    return os.environ.get(OUT_ENV, DEFAULT_OUT)


@dataclass(frozen=True)
class GridSpec:
    n: int = 2
    N: int = 32
    Nn: int | None = None
    L: float = float(np.pi)
    Ln: float | None = None
    t_max: float = 1.0
    nt: int = 33

    def build(self) -> Grid:
        return Grid.uniform(self.n, self.N, L=self.L, Nn=self.Nn, Ln=self.Ln, t_max=self.t_max, nt=self.nt)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in GRID_KEYS}


def _coerce(key: str, raw: Any, like: Any) -> Any:
    """Convert ``raw`` (usually a string) to the type of the default ``like``."""
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if isinstance(like, bool):
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if isinstance(like, int):
            return int(text)
        if isinstance(like, float):
            return float(text)
        if isinstance(like, (list, tuple)):
            items = [s.strip() for s in text.split(",") if s.strip()]
            proto = like[0] if like else 0.0
            return [_coerce(key, s, proto) for s in items]
        if like is None:
            # optional numeric field
            return None if text.lower() in ("", "none") else (int(text) if text.lstrip("-").isdigit() else float(text))
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot read {text!r} as {type(like).__name__}") from exc
    return text


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    grid: GridSpec = field(default_factory=GridSpec)
    params: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    seed: int | None = None
    out_dir: str | None = None

    def validate(self, randomized: bool) -> "ExperimentConfig":
        for k, v in self.tolerances.items():
            if not (isinstance(v, (int, float)) and v > 0):
                raise ConfigError(f"tolerance {k} must be positive, got {v!r}")
        if randomized and self.seed is None:
            raise ConfigError(f"{self.experiment} is randomized and needs a seed")
        return self

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "grid": self.grid.to_dict(), "params": dict(self.params),
                "tolerances": dict(self.tolerances), "seed": self.seed}

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON of every input (output dir excluded)."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"), default=_jsonable)
        return hashlib.sha256(blob.encode()).hexdigest()

    def updated(self, grid: dict | None = None, params: dict | None = None,
                tolerances: dict | None = None, **kw) -> "ExperimentConfig":
        g = replace(self.grid, **grid) if grid else self.grid
        p = {**self.params, **(params or {})}
        t = {**self.tolerances, **(tolerances or {})}
        return replace(self, grid=g, params=p, tolerances=t, **kw)


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(type(o).__name__)


def split_flat(flat: dict, defaults: ExperimentConfig) -> dict:
    """Route flat keys into grid / params / tolerances (``tol_`` prefix) by the defaults."""
    grid, params, tols, run = {}, {}, {}, {}
    for key, raw in flat.items():
        if key in ("experiment", "seed", "out"):
            run[key] = raw
        elif key in GRID_KEYS:
            grid[key] = _coerce(key, raw, getattr(defaults.grid, key))
        elif key.startswith("tol_"):
            name = key[4:]
            if name not in defaults.tolerances:
                raise ConfigError(f"unknown tolerance {name!r} for {defaults.experiment}")
            tols[name] = _coerce(key, raw, float(defaults.tolerances[name]))
        elif key in defaults.params:
            params[key] = _coerce(key, raw, defaults.params[key])
        else:
            raise ConfigError(f"unknown key {key!r} for {defaults.experiment}")
    return {"grid": grid, "params": params, "tolerances": tols, "run": run}


def read_ini(path: str | Path) -> dict[str, dict[str, str]]:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keep key case (N vs n)
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return {s: dict(cp[s]) for s in cp.sections()}


def apply_sections(sections: dict[str, dict], defaults: ExperimentConfig) -> ExperimentConfig:
    """Overlay the sections of a config file on the experiment defaults."""
    bad = set(sections) - set(SECTIONS)
    if bad:
        raise ConfigError(f"unknown sections: {sorted(bad)}")
    flat: dict = {}
    flat.update(sections.get("run", {}))
    flat.update(sections.get("grid", {}))
    flat.update(sections.get("params", {}))
    flat.update({"tol_" + k: v for k, v in sections.get("tolerances", {}).items()})
    return apply_flat(flat, defaults)


def apply_flat(flat: dict, defaults: ExperimentConfig) -> ExperimentConfig:
    parts = split_flat(flat, defaults)
    run = parts["run"]
    if "experiment" in run and run["experiment"] != defaults.experiment:
        raise ConfigError(f"config is for {run['experiment']!r}, not {defaults.experiment!r}")
    seed = defaults.seed
    if "seed" in run:
        seed = _coerce("seed", run["seed"], 0)
    out = run.get("out", defaults.out_dir)
    return defaults.updated(parts["grid"], parts["params"], parts["tolerances"], seed=seed, out_dir=out)


def ini_text(cfg: ExperimentConfig) -> str:
    """``cfg`` in the INI format (lists comma-joined)."""
    import io
    fmt = lambda v: ", ".join(str(x) for x in v) if isinstance(v, (list, tuple)) else str(v)
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp["run"] = {"experiment": cfg.experiment, **({"seed": str(cfg.seed)} if cfg.seed is not None else {})}
    cp["grid"] = {k: fmt(v) for k, v in cfg.grid.to_dict().items() if v is not None}
    cp["params"] = {k: fmt(v) for k, v in cfg.params.items()}
    cp["tolerances"] = {k: fmt(v) for k, v in cfg.tolerances.items()}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def write_ini(cfg: ExperimentConfig, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(ini_text(cfg))
    return path


def read_manifest(path: str | Path) -> tuple[dict, list[tuple[str, dict]]]:
    """A suite manifest: optional ``[suite]`` section, then one section per check.

    Each check section needs ``experiment`` and may set any flat key
    (grid keys, declared params, ``tol_*`` tolerances, ``seed``).  A
    ``seed`` in ``[suite]`` is the default for every check.
    """
    sections = read_ini(path)
    suite = sections.pop("suite", {})
    checks = []
    for name, body in sections.items():
        if "experiment" not in body:
            raise ConfigError(f"check [{name}] has no experiment")
        checks.append((name, dict(body)))
    return suite, checks
