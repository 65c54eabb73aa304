"""Reading and writing displacement fields.

Two formats are supported.

CSV
    Header ``x,u1`` (1D) or ``x,y,u1,u2`` (2D), one row per cell centre.
    Cells of the bounding grid that have no row are outside the domain.
Binary (``.nlgf``)
    A 32 byte little-endian header followed by ``float64`` values in row
    major order with shape ``(nx, ny, d)`` (``ny = 1`` in 1D)::

        offset  type     field
        0       4 bytes  magic "NLGF"
        4       uint32   dim
        8       uint32   nx
        12      uint32   ny
        16      float64  h
        24      uint32   format version (1)
        28      uint32   flags (bit 0: NaN marks cells outside the domain)

    The grid origin is the coordinate origin.
"""
from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .errors import DomainError, SpecError
from .grid import DisplacementField, Domain

__all__ = ["read_field", "write_field", "read_csv", "write_csv", "read_binary", "write_binary"]

MAGIC = b"NLGF"
VERSION = 1
_HEADER = struct.Struct("<4sIIIdII")
FLAG_NAN_MASK = 1


def read_field(path) -> DisplacementField:
    """Dispatch on content: binary if the file starts with the magic bytes."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            head = fh.read(4)
    except OSError as exc:
        raise SpecError(f"cannot read field file {path}: {exc}") from exc
    if head == MAGIC:
        return read_binary(path)
    return read_csv(path)


def write_field(u: DisplacementField, path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        write_csv(u, path)
    else:
        write_binary(u, path)


def read_csv(path) -> DisplacementField:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise SpecError(f"empty field file {path}")
    header = [c.strip() for c in rows[0]]
    if header == ["x", "u1"]:
        dim = 1
    elif header == ["x", "y", "u1", "u2"]:
        dim = 2
    else:
        raise SpecError(f"unrecognised field header {header!r}")
    try:
        data = np.array([[float(c) for c in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise SpecError(f"malformed number in {path}: {exc}") from exc
    if data.ndim != 2 or data.shape[1] != 2 * dim or data.shape[0] == 0:
        raise SpecError(f"field file {path} has inconsistent rows")
    coords = data[:, :dim]
    if not np.all(np.isfinite(coords)):
        raise SpecError("non-finite coordinates in field file")
    axes = [np.unique(coords[:, k]) for k in range(dim)]
    steps = np.concatenate([np.diff(a) for a in axes if a.size > 1])
    if steps.size == 0:
        raise SpecError("field needs at least two cells")
    h = float(np.min(steps))
    origin = [float(a[0]) - 0.5 * h for a in axes]
    idx = []
    shape = []
    for k in range(dim):
        f = (coords[:, k] - origin[k]) / h - 0.5
        i = np.round(f).astype(int)
        if np.max(np.abs(f - i)) > 1e-6:
            raise SpecError("cell centres are not on a uniform grid")
        idx.append(i)
        shape.append(int(i.max()) + 1)
    vals = np.zeros(tuple(shape) + (dim,))
    mask = np.zeros(tuple(shape), dtype=bool)
    vals[tuple(idx)] = data[:, dim:]
    mask[tuple(idx)] = True
    if not np.all(np.isfinite(data[:, dim:])):
        raise DomainError("field values must be finite")
    dom = Domain(dim, tuple(shape), h, tuple(origin), None if mask.all() else mask)
    return DisplacementField(dom, vals)


def write_csv(u: DisplacementField, path) -> None:
    dom = u.domain
    C = dom.centers()
    cols = ["x", "u1"] if dom.dim == 1 else ["x", "y", "u1", "u2"]
    m = dom.mask
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        data = [C[k][m] for k in range(dom.dim)] + [u.values[..., j][m] for j in range(dom.dim)]
        for rec in zip(*data):
            w.writerow([repr(float(v)) for v in rec])


def read_binary(path) -> DisplacementField:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise SpecError("binary field shorter than its header")
    magic, dim, nx, ny, h, version, flags = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise SpecError("bad magic in binary field")
    if version != VERSION:
        raise SpecError(f"unsupported binary field version {version}")
    if dim not in (1, 2) or nx < 1 or ny < 1 or (dim == 1 and ny != 1):
        raise SpecError("inconsistent binary field header")
    count = nx * ny * dim
    body = raw[_HEADER.size:]
    if len(body) != 8 * count:
        raise SpecError(f"binary field body has {len(body)} bytes, expected {8 * count}")
    vals = np.frombuffer(body, dtype="<f8").astype(float)
    shape = (nx,) if dim == 1 else (nx, ny)
    vals = vals.reshape(shape + (dim,))
    mask = None
    if flags & FLAG_NAN_MASK:
        mask = np.all(np.isfinite(vals), axis=-1)
        vals = np.where(mask[..., None], vals, 0.0)
    elif not np.all(np.isfinite(vals)):
        raise DomainError("field values must be finite")
    return DisplacementField(Domain(dim, shape, float(h), (0.0,) * dim, mask), vals)


def write_binary(u: DisplacementField, path) -> None:
    dom = u.domain
    nx = dom.shape[0]
    ny = dom.shape[1] if dom.dim == 2 else 1
    flags = 0
    vals = np.array(u.values, dtype="<f8")
    if not dom.full:
        flags |= FLAG_NAN_MASK
        vals[~dom.mask] = np.nan
    header = _HEADER.pack(MAGIC, dom.dim, nx, ny, float(dom.h), VERSION, flags)
    Path(path).write_bytes(header + np.ascontiguousarray(vals).tobytes())
