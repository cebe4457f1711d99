"""Serialization of fields and an on-disk cache for computed kernels.

Binary layout: a 16-byte header of four little-endian int32 values
``(d, N, representation, kind)`` with representation 0 for config and 1 for
dual, kind 0 for real and 1 for complex, followed by float64 little-endian
values in row-major order (complex values interleaved as real, imaginary).
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from pathlib import Path
from typing import Callable

import numpy as np
from filelock import FileLock

from .lattice import ScalarField, TorusGrid

__all__ = [
    "write_field",
    "read_field",
    "field_to_bytes",
    "field_from_bytes",
    "write_field_csv",
    "canonical_hash",
    "KernelCache",
]

_HEADER = np.dtype("<i4")


def field_to_bytes(f: ScalarField) -> bytes:
    rep = 0 if f.representation == "config" else 1
    kind = 1 if f.is_complex else 0
    header = np.array([f.grid.d, f.grid.N, rep, kind], dtype=_HEADER).tobytes()
    vals = f.values
    if kind:
        vals = np.stack([vals.real, vals.imag], axis=-1)
    return header + np.ascontiguousarray(vals, dtype="<f8").tobytes()


def field_from_bytes(buf: bytes) -> ScalarField:
    if len(buf) < 16:
        raise ValueError("buffer too short for a field header")
    d, N, rep, kind = (int(v) for v in np.frombuffer(buf[:16], dtype=_HEADER))
    grid = TorusGrid(d, N)
    data = np.frombuffer(buf[16:], dtype="<f8")
    expected = grid.volume * (2 if kind else 1)
    if data.size != expected:
        raise ValueError(f"payload has {data.size} values, header implies {expected}")
    if kind:
        data = data.reshape(grid.shape + (2,))
        vals = data[..., 0] + 1j * data[..., 1]
    else:
        vals = data.reshape(grid.shape)
    return ScalarField(grid, vals, "config" if rep == 0 else "dual")


def write_field(f: ScalarField, path: str | os.PathLike) -> Path:
    path = Path(path)
    path.write_bytes(field_to_bytes(f))
    return path


def read_field(path: str | os.PathLike) -> ScalarField:
    return field_from_bytes(Path(path).read_bytes())


def write_field_csv(f: ScalarField, path: str | os.PathLike) -> Path:
    """Write one row per site: coordinates, then value (real and imaginary if complex)."""
    path = Path(path)
    g = f.grid
    cols = [f"x{j}" for j in range(g.d)] + (["re", "im"] if f.is_complex else ["value"])
    idx = np.indices(g.shape).reshape(g.d, -1).T
    flat = f.values.reshape(-1)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for coords, v in zip(idx, flat):
            tail = [repr(float(v.real)), repr(float(v.imag))] if f.is_complex else [repr(float(v))]
            w.writerow([int(c) for c in coords] + tail)
    return path


def canonical_hash(obj) -> str:
    """SHA-256 of the canonical JSON encoding of ``obj``."""
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()


class KernelCache:
    """Directory of cached fields keyed by ``(d, N, symbol id, params)``.

    Each entry is a ``.bin`` field plus a JSON sidecar with the key. Writers
    take a per-entry file lock, so concurrent processes compute an entry once
    and readers never see a partial file.
    """

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key(grid: TorusGrid, symbol_id: str, params: dict | None = None) -> dict:
        return {"d": grid.d, "N": grid.N, "symbol": symbol_id, "params": params or {}}

    def _paths(self, key: dict) -> tuple[Path, Path, Path]:
        h = canonical_hash(key)[:24]
        return self.root / f"{h}.bin", self.root / f"{h}.json", self.root / f"{h}.lock"

    def get(self, key: dict) -> ScalarField | None:
        bin_path, meta_path, _ = self._paths(key)
        if bin_path.exists() and meta_path.exists():
            return read_field(bin_path)
        return None

    def get_or_compute(self, key: dict, compute: Callable[[], ScalarField]) -> ScalarField:
        bin_path, meta_path, lock_path = self._paths(key)
        with FileLock(str(lock_path)):
            if bin_path.exists() and meta_path.exists():
                return read_field(bin_path)
            f = compute()
            tmp = bin_path.with_suffix(".bin.tmp")
            write_field(f, tmp)
            os.replace(tmp, bin_path)
            meta_path.write_text(json.dumps(key, sort_keys=True, default=str))
            return f
