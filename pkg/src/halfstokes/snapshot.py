"""Binary field snapshots and CSV slices.

Container layout: the 8-byte magic ``b"HSFIELD1"``, a little-endian uint32
header length, a UTF-8 JSON header (dims, dtype, rank, state, domain, policy,
timed, grid) and the row-major complex64 body.
"""
from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .grid_field import ExtensionPolicy, Field, Grid

MAGIC = b"HSFIELD1"


def save_field(path: str | Path, f: Field) -> Path:
    path = Path(path)
    header = {
        "dims": list(f.values.shape),
        "dtype": "complex64",
        "rank": f.rank,
        "state": f.state,
        "domain": f.domain,
        "policy": list(f.policy.parities) if f.policy is not None else None,
        "timed": f.timed,
        "grid": f.grid.to_dict(),
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    body = np.ascontiguousarray(f.values, dtype=np.complex64).tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(body)
    return path


def load_field(path: str | Path) -> Field:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path} is not a field snapshot")
    (hlen,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12:12 + hlen].decode("utf-8"))
    vals = np.frombuffer(raw[12 + hlen:], dtype=np.complex64).reshape(header["dims"])
    pol = ExtensionPolicy(tuple(header["policy"])) if header["policy"] else None
    return Field(Grid.from_dict(header["grid"]), vals, header["rank"], header["state"],
                 header["domain"], pol, header["timed"])


def write_slice_csv(path: str | Path, coords: np.ndarray, values: np.ndarray,
                    name: str = "value") -> Path:
    """Write a 1-D slice as ``coordinate, real, imag`` rows."""
    path = Path(path)
    values = np.asarray(values)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["x", f"{name}_re", f"{name}_im"])
        for x, v in zip(np.asarray(coords).ravel(), values.ravel()):
            w.writerow([repr(float(x)), repr(float(np.real(v))), repr(float(np.imag(v)))])
    return path


def field_slice(f: Field, axis: int, index: tuple[int, ...], time_index: int = 0,
                component: tuple[int, ...] = ()) -> tuple[np.ndarray, np.ndarray]:
    """Extract a 1-D line ``(coords, values)`` along a spatial axis."""
    vals = f.values[time_index] if f.timed else f.values
    vals = vals[component] if component else vals
    d = f.spatial_ndim
    sl: list = list(index)
    sl.insert(axis, slice(None))
    line = vals[tuple(sl[:d])]
    coords = f.grid.coords(f.domain)[axis].ravel()
    return coords, line
