"""On-disk cache for solved kernel tables.

File layout: a magic line ``KDVKERN1``, a header line carrying kind,
lambda, L, M and the solver version as decimal text, the node values in
row-major (i, then j >= i) order as little-endian float64, and the
residual report appended as key=value text lines.  Values round-trip
bit-exactly.
"""

import hashlib
import os
from pathlib import Path

import numpy as np

from .errors import CacheFormatError, CacheMiss
from .grids import build_triangle_grid
from .kernels import (KernelTable, ResidualReport, SOLVER_VERSION,
                      _edge_second_derivative, triangle_flatten,
                      triangle_unflatten)

MAGIC = b"KDVKERN1"


def cache_key(kind, lam, L, M, solver=SOLVER_VERSION):
    return f"{kind}|{float(lam)!r}|{float(L)!r}|{int(M)}|{solver}"


def cache_path(cache_dir, kind, lam, L, M, solver=SOLVER_VERSION):
    digest = hashlib.sha1(cache_key(kind, lam, L, M, solver).encode()).hexdigest()[:16]
    return Path(cache_dir) / f"{kind}-M{M}-{digest}.kdvkern"


def cache_write(table, cache_dir):
    """Persist a solved table; returns the file path."""
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    path = cache_path(cache_dir, table.kind, table.lam, table.grid.L,
                      table.grid.M)
    header = (f"kind={table.kind} lambda={table.lam!r} L={table.grid.L!r} "
              f"M={table.grid.M} solver={SOLVER_VERSION}\n")
    flat = triangle_flatten(table.values, table.grid.M)
    tmp = path.with_suffix(".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC + b"\n")
        fh.write(header.encode("ascii"))
        fh.write(flat.astype("<f8").tobytes())
        if table.residual_report is not None:
            for line in table.residual_report.as_lines():
                fh.write((line + "\n").encode("ascii"))
    os.replace(tmp, path)
    return path


def cache_read(kind, lam, L, M, cache_dir):
    """Load a cached table; CacheMiss if absent or keyed differently."""
    path = cache_path(cache_dir, kind, lam, L, M)
    if not path.exists():
        raise CacheMiss(f"no cache entry at {path}")
    with open(path, "rb") as fh:
        blob = fh.read()

    try:
        magic, rest = blob.split(b"\n", 1)
    except ValueError:
        raise CacheFormatError(f"{path}: missing header") from None
    if magic != MAGIC:
        raise CacheFormatError(f"{path}: bad magic {magic!r}")
    try:
        header, rest = rest.split(b"\n", 1)
        fields = dict(item.split("=", 1) for item in header.decode("ascii").split())
    except (ValueError, UnicodeDecodeError):
        raise CacheFormatError(f"{path}: malformed header") from None

    expect = {"kind": kind, "lambda": repr(float(lam)), "L": repr(float(L)),
              "M": str(int(M)), "solver": SOLVER_VERSION}
    for key, want in expect.items():
        if fields.get(key) != want:
            raise CacheMiss(
                f"{path}: header {key}={fields.get(key)!r} does not match "
                f"requested {want!r}"
            )

    n = (M + 1) * (M + 2) // 2
    payload = rest[: 8 * n]
    if len(payload) < 8 * n:
        raise CacheFormatError(f"{path}: truncated payload "
                               f"({len(payload)} of {8 * n} bytes)")
    flat = np.frombuffer(payload, dtype="<f8").astype(float)
    values = triangle_unflatten(flat, M)

    report = _parse_report(rest[8 * n:].decode("ascii", errors="replace"))
    grid = build_triangle_grid(L, M)
    return KernelTable(kind=kind, grid=grid, lam=float(lam), values=values,
                       d_yy_at_L=_edge_second_derivative(values, grid),
                       residual_report=report)


def _parse_report(text):
    fields = {}
    extras = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or "=" not in line:
            continue
        key, raw = line.split("=", 1)
        try:
            value = int(raw)
        except ValueError:
            try:
                value = float(raw)
            except ValueError:
                raise CacheFormatError(f"unparseable report line {line!r}") from None
        if key.startswith("extras."):
            extras[key[len("extras."):]] = value
        else:
            fields[key] = value
    if not fields:
        return None
    required = ("h", "max_abs_value", "interior", "diag_value",
                "diag_neumann", "edge", "accept_tol")
    missing = [k for k in required if k not in fields]
    if missing:
        raise CacheFormatError(f"residual report missing keys {missing}")
    return ResidualReport(extras=extras, **{k: fields[k] for k in required})
