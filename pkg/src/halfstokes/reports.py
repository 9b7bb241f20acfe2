"""Run reports and their JSON / CSV emission."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

STATUSES = ("pass", "fail", "informative", "error")


def clean(o: Any) -> Any:
    """Recursively convert to plain JSON types (non-finite floats become strings)."""
    if isinstance(o, dict):
        return {str(k): clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [clean(v) for v in o]
    if isinstance(o, np.ndarray):
        return clean(o.tolist())
    if isinstance(o, (np.bool_, bool)):
        return bool(o)
    if isinstance(o, (np.integer, int)):
        return int(o)
    if isinstance(o, (np.floating, float)):
        x = float(o)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if o is None or isinstance(o, str):
        return o
    if hasattr(o, "to_dict"):
        return clean(o.to_dict())
    return str(o)


def dumps(obj: Any) -> str:
    """Canonical JSON text: sorted keys, fixed indentation, trailing newline."""
    return json.dumps(clean(obj), sort_keys=True, indent=2) + "\n"


@dataclass
class RunReport:
    experiment: str
    paper_anchor: str
    status: str
    metrics: dict
    config_hash: str
    wall_time: float = 0.0
    name: str | None = None
    message: str = ""
    artifacts: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)  # phase -> seconds, never in summaries

    def __post_init__(self) -> None:
        if self.status not in STATUSES:
            raise ValueError(f"status must be one of {STATUSES}")

    @property
    def ok(self) -> bool:
        return self.status in ("pass", "informative")

    def to_dict(self, timing: bool = True) -> dict:
        d = {"experiment": self.experiment, "name": self.name or self.experiment,
             "paper_anchor": self.paper_anchor, "status": self.status, "metrics": self.metrics,
             "config_hash": self.config_hash, "message": self.message,
             "artifacts": sorted(self.artifacts)}
        if timing:
            d["wall_time"] = self.wall_time
        return d


def write_json(path: str | Path, obj: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))
    return path


def write_csv(path: str | Path, rows: list[dict]) -> Path:
    """Rows of dicts to CSV; the header is the union of keys in first-seen order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header: list[str] = []
    for r in rows:
        for k in r:
            if k not in header:
                header.append(k)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=header, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _cell(r.get(k, "")) for k in header})
    return path


def _cell(v: Any) -> Any:
    v = clean(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, dict)):
        return json.dumps(v, sort_keys=True)
    return v


def metric_rows(metrics: dict, prefix: str = "") -> list[dict]:
    """Flatten nested scalar metrics into ``{"metric", "value"}`` rows."""
    rows = []
    for k in sorted(metrics):
        v = metrics[k]
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            rows.extend(metric_rows(v, key + "."))
        elif isinstance(v, (list, tuple)) and v and all(isinstance(x, (int, float, np.number)) for x in v):
            rows.extend({"metric": f"{key}[{i}]", "value": x} for i, x in enumerate(v))
        elif isinstance(v, (int, float, np.number, str, bool)):
            rows.append({"metric": key, "value": v})
    return rows


def suite_summary(reports: list[RunReport]) -> dict:
    """Deterministic suite summary (sorted by check name, no wall times)."""
    reps = sorted(reports, key=lambda r: r.name or r.experiment)
    counts = {s: sum(r.status == s for r in reps) for s in STATUSES}
    return {"checks": [r.to_dict(timing=False) for r in reps], "counts": counts,
            "passed": all(r.ok for r in reps)}
