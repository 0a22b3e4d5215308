"""Persistence: binary coefficient snapshots, CSV emission, run manifests.

The binary format is deliberately dumb — a 16-byte header and raw
little-endian complex coefficients in FFT index order — so any language can
read it back with one struct call and one reshape.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

import numpy as np
from numpy.typing import NDArray

from .spectral import Grid

ComplexArray = NDArray[np.complexfloating]

SNAPSHOT_MAGIC = b"NLSF"
SNAPSHOT_VERSION = 1

_HEADER = struct.Struct("<4sIII")


class SnapshotFormatError(ValueError):
    """Raised when a snapshot file fails header or size validation."""


# ── binary snapshots ──────────────────────────────────────────────────────────


def write_snapshot(path: Union[str, Path], grid: Grid, coeffs: ComplexArray) -> None:
    """Write coefficient rows (count, n) as magic, version, n, count, then
    interleaved little-endian f64 (re, im) pairs ordered k = 0,…,n/2−1,−n/2,…,−1
    — the natural FFT layout, stored row after row."""
    rows = np.atleast_2d(np.asarray(coeffs, dtype=complex))
    if rows.shape[1] != grid.n:
        raise SnapshotFormatError(f"rows have {rows.shape[1]} modes, grid has {grid.n}")
    payload = np.ascontiguousarray(rows.astype("<c16"))
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, grid.n, rows.shape[0]))
        fh.write(payload.tobytes())


def read_snapshot(path: Union[str, Path]) -> tuple[int, ComplexArray]:
    """Read a snapshot back as (n, coefficient rows)."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise SnapshotFormatError("file shorter than header")
    magic, version, n, count = _HEADER.unpack_from(raw)
    if magic != SNAPSHOT_MAGIC:
        raise SnapshotFormatError(f"bad magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise SnapshotFormatError(f"unsupported version {version}")
    body = raw[_HEADER.size :]
    expect = count * n * 16
    if len(body) != expect:
        raise SnapshotFormatError(f"payload is {len(body)} bytes, expected {expect}")
    rows = np.frombuffer(body, dtype="<c16").reshape(count, n).astype(complex)
    return n, rows


# ── CSV emission ──────────────────────────────────────────────────────────────


def _cell(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def write_csv(path: Union[str, Path], header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Deterministic CSV: fixed header, %.17g floats, '\\n' newlines.

    Byte-identity across runs with the same data is part of the contract, so
    no timestamps, locale formatting, or platform newlines ever enter here.
    """
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_cell(v) for v in row))
    Path(path).write_bytes(("\n".join(lines) + "\n").encode())


def snapshot_csv(path: Union[str, Path], grid: Grid, coeffs: ComplexArray) -> None:
    """One row per stored field, columns {k}_re, {k}_im in FFT mode order."""
    rows = np.atleast_2d(np.asarray(coeffs, dtype=complex))
    header: list[str] = []
    for k in grid.k:
        header += [f"{int(k)}_re", f"{int(k)}_im"]
    write_csv(path, header, ([c for z in row for c in (z.real, z.imag)] for row in rows))


# ── manifests ─────────────────────────────────────────────────────────────────


def write_manifest(path: Union[str, Path], entries: Mapping) -> None:
    """JSON manifest with sorted keys; values must already be plain data."""
    text = json.dumps(_plain(entries), indent=2, sort_keys=True)
    Path(path).write_bytes((text + "\n").encode())


def _plain(value):
    if isinstance(value, Mapping):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    return value
