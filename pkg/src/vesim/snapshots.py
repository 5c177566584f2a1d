"""Binary field snapshots and their JSON sidecars.

Layout: header ``magic "VESF", version u32, dim u8, rank u8, n u32, repr u8``
(little-endian), followed by float64 samples, component-major then row-major.
Spectral-repr snapshots store each complex sample as a (re, im) pair. A
sidecar ``<path>.json`` records time, viscosity, and provenance; the wall
clock appears only in the sidecar's single ``timestamp`` field so everything
else is reproducible byte for byte.
"""

from __future__ import annotations

import json
import struct
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import ContractError
from .spectral import Field, Grid, PHYSICAL, SPECTRAL

MAGIC = b"VESF"
VERSION = 1
_HEADER = struct.Struct("<4sIBBIB")
_REPR_CODE = {PHYSICAL: 0, SPECTRAL: 1}
_REPR_NAME = {0: PHYSICAL, 1: SPECTRAL}


def write_field(path, f: Field) -> None:
    path = Path(path)
    header = _HEADER.pack(MAGIC, VERSION, f.grid.dim, f.rank, f.grid.n, _REPR_CODE[f.repr])
    if f.repr == PHYSICAL:
        payload = np.ascontiguousarray(f.data, dtype="<f8").tobytes()
    else:
        flat = np.empty(f.data.shape + (2,), dtype="<f8")
        flat[..., 0] = f.data.real
        flat[..., 1] = f.data.imag
        payload = flat.tobytes()
    path.write_bytes(header + payload)


def read_field(path, grid: Grid | None = None) -> Field:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ContractError(f"{path}: truncated snapshot")
    magic, version, dim, rank, n, repr_code = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ContractError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ContractError(f"{path}: unsupported version {version}")
    if repr_code not in _REPR_NAME:
        raise ContractError(f"{path}: unknown repr code {repr_code}")
    g = grid if grid is not None else Grid(dim, n)
    if (g.dim, g.n) != (dim, n):
        raise ContractError(f"{path}: snapshot grid {dim}/{n} does not match {g}")
    repr_ = _REPR_NAME[repr_code]
    shape = (g.ncomp(rank),) + g.shape
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if repr_ == PHYSICAL:
        if body.size != np.prod(shape):
            raise ContractError(f"{path}: payload size mismatch")
        data = body.reshape(shape).astype(np.float64)
    else:
        if body.size != 2 * np.prod(shape):
            raise ContractError(f"{path}: payload size mismatch")
        pairs = body.reshape(shape + (2,))
        data = (pairs[..., 0] + 1j * pairs[..., 1]).astype(np.complex128)
    return Field(g, rank, data, repr_)


def write_sidecar(path, *, t: float, mu: float | None = None, provenance: dict | None = None) -> None:
    """Write the JSON metadata next to a snapshot; timestamp isolated to one key."""
    meta = {
        "t": t,
        "mu": mu,
        "provenance": dict(provenance or {}),
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    Path(str(path) + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_sidecar(path) -> dict:
    return json.loads(Path(str(path) + ".json").read_text())
