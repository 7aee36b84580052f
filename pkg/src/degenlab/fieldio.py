"""Plain-text field snapshots and CSV export.

Snapshot layout::

    N m cells_1 .. cells_N extents_1 .. extents_N
    # key=value            (optional metadata lines)
    v_1 .. v_m             (one line per cell, row-major cell order)
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .grid import Field, Grid, GridError


def write_snapshot(path: str | Path, f: Field, **meta) -> None:
    g = f.grid
    header = [str(g.dim), str(f.m)] + [str(c) for c in g.cells] + [repr(e) for e in g.extents]
    meta = {"boundary": g.boundary, **meta}
    rows = np.moveaxis(f.values, 0, -1).reshape(-1, f.m)
    with open(path, "w") as fh:
        fh.write(" ".join(header) + "\n")
        for key in sorted(meta):
            fh.write(f"# {key}={meta[key]}\n")
        np.savetxt(fh, rows, fmt="%.17g")


def read_snapshot(path: str | Path) -> tuple[Field, dict[str, str]]:
    """Read a snapshot; returns the field and its metadata lines."""
    meta: dict[str, str] = {}
    with open(path) as fh:
        head = fh.readline().split()
        if len(head) < 4:
            raise GridError(f"{path}: malformed snapshot header")
        dim, m = int(head[0]), int(head[1])
        if len(head) != 2 + 2 * dim:
            raise GridError(f"{path}: header expects {2 + 2 * dim} entries, got {len(head)}")
        cells = tuple(int(c) for c in head[2 : 2 + dim])
        extents = tuple(float(e) for e in head[2 + dim :])
        body = []
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key.strip()] = value.strip()
            elif line.strip():
                body.append(line)
    data = np.loadtxt(body, ndmin=2) if body else np.empty((0, m))
    if data.shape != (int(np.prod(cells)), m):
        raise GridError(f"{path}: expected {int(np.prod(cells))} rows of {m} values, got {data.shape}")
    grid = Grid(extents, cells, meta.get("boundary", "neumann"))
    values = np.moveaxis(data.reshape(cells + (m,)), -1, 0)
    return Field(grid, values), meta


def write_csv(path: str | Path, f: Field, header_comment: str | None = None) -> None:
    """One row per cell: centre coordinates then components."""
    g = f.grid
    coords = g.coords().reshape(g.dim, -1).T
    vals = f.values.reshape(f.m, -1).T
    names = ["x", "y", "z"][: g.dim] + [f"w{i}" for i in range(f.m)]
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(names)
        for c, v in zip(coords, vals):
            writer.writerow([repr(float(x)) for x in c] + [repr(float(x)) for x in v])
