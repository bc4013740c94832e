"""Deterministic file formats for run artifacts.

Floats are written with ``repr`` (shortest round-trip form), so a rerun
with identical inputs produces byte-identical files; no timestamps or
environment details ever enter a data file.

Density matrices use a small documented binary layout:

    bytes 0..7   magic ``CAQRHO01``
    bytes 8..15  rows as little-endian uint64
    bytes 16..23 cols as little-endian uint64
    then rows*cols little-endian complex128 values, row-major
"""

import struct

import numpy as np

from .errors import ConfigError

RHO_MAGIC = b"CAQRHO01"


def fmt(value):
    """Shortest round-trip decimal form of a float."""
    return repr(float(value))


def write_csv(path, columns, rows, meta=None):
    """Write a CSV with optional ``# key=value`` comment header lines.

    ``rows`` is an iterable of tuples matching ``columns``; floats are
    formatted for exact round-trips, other values with ``str``.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for key in sorted(meta or {}):
            f.write(f"# {key}={meta[key]}\n")
        f.write(",".join(columns) + "\n")
        for row in rows:
            f.write(",".join(
                fmt(v) if isinstance(v, (float, np.floating)) else str(v)
                for v in row) + "\n")


def read_csv(path):
    """Read a CSV written by :func:`write_csv`.

    Returns (meta, columns) with ``columns`` a dict of float arrays
    keyed by header name.
    """
    meta = {}
    names = None
    data = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key.strip()] = value.strip()
                continue
            if names is None:
                names = line.split(",")
                continue
            data.append([float(v) for v in line.split(",")])
    if names is None:
        raise ConfigError(f"{path} contains no header row")
    arr = np.asarray(data, dtype=float).reshape(len(data), len(names))
    return meta, {name: arr[:, i] for i, name in enumerate(names)}


def write_grid_csv(path, grid, meta=None):
    """Write a bare numeric matrix (one row per line)."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for key in sorted(meta or {}):
            f.write(f"# {key}={meta[key]}\n")
        for row in np.asarray(grid):
            f.write(",".join(fmt(v) for v in row) + "\n")


def write_sidecar(path, entries):
    """Plain ``key=value`` metadata file with sorted keys."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for key in sorted(entries):
            f.write(f"{key}={entries[key]}\n")


def read_sidecar(path):
    out = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line and "=" in line:
                key, _, value = line.partition("=")
                out[key.strip()] = value.strip()
    return out


def write_density_matrix(path, rho):
    rho = np.ascontiguousarray(np.asarray(rho, dtype=np.complex128))
    with open(path, "wb") as f:
        f.write(RHO_MAGIC)
        f.write(struct.pack("<QQ", rho.shape[0], rho.shape[1]))
        f.write(rho.astype("<c16").tobytes(order="C"))


def read_density_matrix(path):
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != RHO_MAGIC:
            raise ConfigError(f"{path} is not a density-matrix file")
        rows, cols = struct.unpack("<QQ", f.read(16))
        data = np.frombuffer(f.read(), dtype="<c16")
    if data.size != rows * cols:
        raise ConfigError(f"{path} is truncated")
    return data.reshape(rows, cols).astype(np.complex128)


def write_density_matrix_csv(path, rho, meta=None):
    """Long-format ``i,j,re,im`` export for small matrices."""
    rho = np.asarray(rho)
    rows = ((i, j, rho[i, j].real, rho[i, j].imag)
            for i in range(rho.shape[0]) for j in range(rho.shape[1]))
    write_csv(path, ["i", "j", "re", "im"], rows, meta=meta)
