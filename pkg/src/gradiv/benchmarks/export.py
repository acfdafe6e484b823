"""Field export (legacy ASCII VTK) and CSV series."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from ..fem.space import TAYLOR_HOOD, MixedSpace

FLOAT_FMT = "{:.17g}"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT.format(float(v))
    return str(v)


def write_csv(path: str | Path, rows: Sequence[Mapping], columns: Sequence[str] | None = None) -> Path:
    """One header row, then one row per mapping; floats at 17 significant digits."""
    path = Path(path)
    if columns is None:
        columns = []
        for row in rows:
            columns += [k for k in row if k not in columns]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c, "")) for c in columns])
    return path


def read_csv(path: str | Path) -> list[dict[str, str]]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


export_series = write_csv


def plot_triangles(space: MixedSpace) -> tuple[np.ndarray, np.ndarray]:
    """Points and triangles used for output.

    Taylor-Hood fields live on the P1 refinement (each triangle split into
    four through its edge midpoints); MINI fields are written on the mesh
    itself, where the bubble vanishes at the vertices.
    """
    mesh = space.mesh
    if space.family != TAYLOR_HOOD:
        return mesh.nodes, mesh.triangles
    v = space.cell_dofs[:, :3]
    m = space.cell_dofs[:, 3:]  # midpoints of edges (0,1), (1,2), (2,0)
    sub = np.concatenate([
        np.column_stack([v[:, 0], m[:, 0], m[:, 2]]),
        np.column_stack([m[:, 0], v[:, 1], m[:, 1]]),
        np.column_stack([m[:, 2], m[:, 1], v[:, 2]]),
        np.column_stack([m[:, 0], m[:, 1], m[:, 2]]),
    ])
    return space.dof_coords, sub


def point_fields(space: MixedSpace, u: np.ndarray, p: np.ndarray | None = None) -> dict[str, np.ndarray]:
    """Velocity, speed and pressure at the output points."""
    pts, _ = plot_triangles(space)
    n = len(pts)
    u1, u2 = space.split(u)
    out = {"velocity": np.column_stack([u1[:n], u2[:n], np.zeros(n)])}
    out["speed"] = np.hypot(u1[:n], u2[:n])
    if p is not None:
        pv = np.asarray(p, float)
        if n > len(pv):  # midpoint values of the linear pressure
            e = space.mesh.edges
            pv = np.concatenate([pv, 0.5 * (pv[e[:, 0]] + pv[e[:, 1]])])
        out["pressure"] = pv
    return out


def cell_divergence(space: MixedSpace, u: np.ndarray) -> np.ndarray:
    """∇·u at the centroid of every output cell."""
    from ..fem.functions import Evaluator
    from ..fem.quadrature import QuadratureRule

    if space.family == TAYLOR_HOOD:
        # centroids of the four sub-triangles in reference coordinates, in plot_triangles order
        pts = np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3], [1 / 3, 1 / 3]])
    else:
        pts = np.array([[1 / 3, 1 / 3]])
    rule = QuadratureRule(pts, np.full(len(pts), 0.5 / len(pts)), 0)
    div = Evaluator(space, rule).velocity(u).div  # (nt, k)
    return div.T.reshape(-1)


def export_fields(path: str | Path, space: MixedSpace, u: np.ndarray, p: np.ndarray | None = None,
                  title: str = "gradiv fields") -> Path:
    """Legacy ASCII VTK unstructured grid with point and cell data."""
    path = Path(path)
    pts, tris = plot_triangles(space)
    fields = point_fields(space, u, p)
    div = cell_divergence(space, u)
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {len(pts)} double"]
    lines += [f"{_fmt(x)} {_fmt(y)} 0" for x, y in pts]
    lines.append(f"CELLS {len(tris)} {4 * len(tris)}")
    lines += [f"3 {a} {b} {c}" for a, b, c in tris]
    lines.append(f"CELL_TYPES {len(tris)}")
    lines += ["5"] * len(tris)
    lines.append(f"POINT_DATA {len(pts)}")
    lines.append("VECTORS velocity double")
    lines += [" ".join(_fmt(c) for c in row) for row in fields["velocity"]]
    for name in ("speed", "pressure"):
        if name in fields:
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [_fmt(v) for v in fields[name]]
    lines.append(f"CELL_DATA {len(tris)}")
    lines += ["SCALARS divergence double 1", "LOOKUP_TABLE default"]
    lines += [_fmt(v) for v in div]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_vtk(path: str | Path) -> dict:
    """Parse a file written by :func:`export_fields`."""
    tokens = Path(path).read_text().split("\n")
    out: dict = {"point_data": {}, "cell_data": {}}
    i = 4
    section = None

    def numbers(start, count, width):
        rows = [tokens[start + k].split() for k in range(count)]
        return np.array(rows, dtype=float).reshape(count, width)

    while i < len(tokens):
        line = tokens[i].strip()
        if not line:
            i += 1
            continue
        head = line.split()
        if head[0] == "POINTS":
            n = int(head[1])
            out["points"] = numbers(i + 1, n, 3)[:, :2]
            i += n + 1
        elif head[0] == "CELLS":
            n = int(head[1])
            out["cells"] = numbers(i + 1, n, 4)[:, 1:].astype(np.int64)
            i += n + 1
        elif head[0] == "CELL_TYPES":
            i += int(head[1]) + 1
        elif head[0] in ("POINT_DATA", "CELL_DATA"):
            section = "point_data" if head[0] == "POINT_DATA" else "cell_data"
            count = int(head[1])
            i += 1
        elif head[0] == "VECTORS":
            out[section][head[1]] = numbers(i + 1, count, 3)
            i += count + 1
        elif head[0] == "SCALARS":
            out[section][head[1]] = numbers(i + 2, count, 1).ravel()
            i += count + 2
        else:
            raise ValueError(f"unexpected VTK line {i + 1}: {line!r}")
    return out


def write_table(path: str | Path, rows: Iterable[Mapping]) -> Path:
    return write_csv(path, list(rows))
