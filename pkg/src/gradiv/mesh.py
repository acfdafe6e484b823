"""Triangle meshes with tagged boundary edges.

Generators for the unit square and the step channel, an ASCII reader/writer
for externally produced meshes (the cylinder channel), and invariant checks.

File format (whitespace separated)::

    nv nt nb
    x y            # nv lines
    i j k          # nt lines, 0-based, counterclockwise
    i j tag        # nb lines, 0-based

Tags: 0 generic Dirichlet, 1 wall, 2 inlet, 3 outlet, 4 cylinder.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

GENERIC = 0
WALL = 1
INLET = 2
OUTLET = 3
CYLINDER = 4

TAG_NAMES = {GENERIC: "generic", WALL: "wall", INLET: "inlet", OUTLET: "outlet", CYLINDER: "cylinder"}


class MeshFormatError(ValueError):
    """Malformed mesh file; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MeshValidationError(ValueError):
    def __init__(self, violations: list[str]):
        self.violations = violations
        super().__init__("; ".join(violations))


@dataclass(frozen=True, eq=False)
class Mesh:
    nodes: np.ndarray            # (nv, 2) float
    triangles: np.ndarray        # (nt, 3) int, counterclockwise
    boundary_edges: np.ndarray   # (nb, 2) int
    boundary_tags: np.ndarray    # (nb,) int

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def area(self) -> float:
        return float(self.signed_areas.sum())

    @cached_property
    def h_max(self) -> float:
        """Largest triangle diameter (longest edge)."""
        if self.n_triangles == 0:
            return 0.0
        p = self.nodes[self.triangles]
        lengths = np.stack([np.linalg.norm(p[:, (k + 1) % 3] - p[:, k], axis=1) for k in range(3)])
        return float(lengths.max())

    @cached_property
    def _edge_data(self):
        # local edge k of a triangle joins local vertices (k, k+1 mod 3)
        t = self.triangles
        pairs = np.stack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]], axis=1).reshape(-1, 2)
        pairs = np.sort(pairs, axis=1)
        edges, inverse, counts = np.unique(pairs, axis=0, return_inverse=True, return_counts=True)
        return edges, inverse.reshape(-1, 3), counts

    @property
    def edges(self) -> np.ndarray:
        """Unique edges as sorted node pairs, lexicographically ordered."""
        return self._edge_data[0]

    @property
    def triangle_edges(self) -> np.ndarray:
        """(nt, 3) edge index of local edge k = (v_k, v_{k+1})."""
        return self._edge_data[1]

    @property
    def edge_triangle_counts(self) -> np.ndarray:
        return self._edge_data[2]

    @cached_property
    def boundary_edge_index(self) -> np.ndarray:
        """Index into ``edges`` for every tagged boundary edge."""
        lookup = {tuple(e): k for k, e in enumerate(self.edges.tolist())}
        return np.array([lookup[tuple(sorted(e))] for e in self.boundary_edges.tolist()], dtype=int)

    def nodes_with_tag(self, tag: int) -> np.ndarray:
        return np.unique(self.boundary_edges[self.boundary_tags == tag])

    def boundary_nodes(self) -> np.ndarray:
        return np.unique(self.boundary_edges)


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def __str__(self) -> str:
        return "mesh ok" if self.ok else "\n".join(self.violations)


def validate(mesh: Mesh) -> ValidationReport:
    """Check every mesh invariant; collects violations instead of raising."""
    report = ValidationReport()
    v = report.violations
    nv, nt = len(mesh.nodes), len(mesh.triangles)
    if nt == 0:
        v.append("no triangles")
        return report
    if mesh.nodes.ndim != 2 or mesh.nodes.shape[1] != 2:
        v.append("nodes must be an (nv, 2) array")
        return report
    if mesh.triangles.min() < 0 or mesh.triangles.max() >= nv:
        v.append("triangle references a node index out of range")
        return report
    if len(mesh.boundary_edges) and (mesh.boundary_edges.min() < 0 or mesh.boundary_edges.max() >= nv):
        v.append("boundary edge references a node index out of range")
        return report

    for k in np.flatnonzero(mesh.signed_areas <= 0.0):
        v.append(f"negative area, triangle {k}")

    edges, counts = mesh.edges, mesh.edge_triangle_counts
    for k in np.flatnonzero(counts > 2):
        v.append(f"edge shared by {counts[k]} triangles: {tuple(edges[k])}")

    if len(mesh.boundary_tags) != len(mesh.boundary_edges):
        v.append("boundary tag count differs from boundary edge count")
    bad_tags = set(np.unique(mesh.boundary_tags).tolist()) - set(TAG_NAMES)
    if bad_tags:
        v.append(f"unknown boundary tags {sorted(bad_tags)}")

    lookup = {tuple(e): k for k, e in enumerate(edges.tolist())}
    seen: set[tuple[int, int]] = set()
    for i, (a, b) in enumerate(mesh.boundary_edges.tolist()):
        key = (min(a, b), max(a, b))
        if key in seen:
            v.append(f"boundary edge {i} {key} listed twice")
        seen.add(key)
        k = lookup.get(key)
        if k is None:
            v.append(f"dangling boundary edge {i} {key}: not an edge of any triangle")
        elif counts[k] != 1:
            v.append(f"boundary edge {i} {key} belongs to {counts[k]} triangles")
    for k in np.flatnonzero(counts == 1):
        if tuple(edges[k]) not in seen:
            v.append(f"untagged boundary edge {tuple(edges[k])}")
    return report


def _make_mesh(nodes, triangles, boundary_edges, boundary_tags) -> Mesh:
    return Mesh(
        np.ascontiguousarray(nodes, dtype=float),
        np.ascontiguousarray(triangles, dtype=np.int64).reshape(-1, 3),
        np.ascontiguousarray(boundary_edges, dtype=np.int64).reshape(-1, 2),
        np.ascontiguousarray(boundary_tags, dtype=np.int64).reshape(-1),
    )


def _tensor_grid(xs: np.ndarray, ys: np.ndarray, keep_cell=None):
    """Triangulate a tensor grid, alternating the diagonal between neighbouring cells.

    Returns nodes and counterclockwise triangles with unused nodes removed.
    """
    nx, ny = len(xs), len(ys)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange(nx * ny).reshape(ny, nx)
    tris = []
    for j in range(ny - 1):
        for i in range(nx - 1):
            if keep_cell is not None and not keep_cell(i, j):
                continue
            a, b, c, d = idx[j, i], idx[j, i + 1], idx[j + 1, i + 1], idx[j + 1, i]
            if (i + j) % 2 == 0:
                tris += [(a, b, c), (a, c, d)]
            else:
                tris += [(a, b, d), (b, c, d)]
    tris = np.array(tris, dtype=np.int64)
    used = np.unique(tris)
    renum = -np.ones(len(nodes), dtype=np.int64)
    renum[used] = np.arange(len(used))
    return nodes[used], renum[tris]


def _topological_boundary(nodes: np.ndarray, triangles: np.ndarray, tagger) -> tuple[np.ndarray, np.ndarray]:
    pairs = np.stack([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]], axis=1).reshape(-1, 2)
    key = np.sort(pairs, axis=1)
    _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inv = inv.reshape(-1)
    bnd = pairs[counts[inv] == 1]  # keeps counterclockwise orientation
    mid = 0.5 * (nodes[bnd[:, 0]] + nodes[bnd[:, 1]])
    tags = np.array([tagger(x, y) for x, y in mid], dtype=np.int64)
    return bnd, tags


def generate_unit_square(m: int) -> Mesh:
    """Structured m-by-m triangulation of [0, 1]^2, all boundary edges generic."""
    if m < 1:
        raise ValueError("m must be >= 1")
    xs = np.linspace(0.0, 1.0, m + 1)
    nodes, tris = _tensor_grid(xs, xs)
    bnd, tags = _topological_boundary(nodes, tris, lambda x, y: GENERIC)
    return _make_mesh(nodes, tris, bnd, tags)


STEP_LENGTH, STEP_HEIGHT = 40.0, 10.0
STEP_X0, STEP_X1, STEP_TOP = 5.0, 6.0, 1.0


def generate_step_channel(resolution: int) -> Mesh:
    """40 x 10 channel with a unit step on the bottom wall at 5 <= x <= 6.

    Grid spacing is 1/resolution in y and on 0 <= x <= 10, and 2/resolution
    downstream of x = 10.
    """
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    r = resolution
    xs = np.concatenate([np.linspace(0.0, 10.0, 10 * r + 1), np.linspace(10.0, STEP_LENGTH, 15 * r + 1)[1:]])
    ys = np.linspace(0.0, STEP_HEIGHT, 10 * r + 1)

    def keep(i, j):
        xc = 0.5 * (xs[i] + xs[i + 1])
        yc = 0.5 * (ys[j] + ys[j + 1])
        return not (STEP_X0 < xc < STEP_X1 and yc < STEP_TOP)

    nodes, tris = _tensor_grid(xs, ys, keep)

    def tagger(x, y):
        if x < 1e-12:
            return INLET
        if x > STEP_LENGTH - 1e-12:
            return OUTLET
        return WALL

    bnd, tags = _topological_boundary(nodes, tris, tagger)
    return _make_mesh(nodes, tris, bnd, tags)


def write_mesh(mesh: Mesh, path: str | Path) -> None:
    lines = [f"{mesh.n_nodes} {mesh.n_triangles} {len(mesh.boundary_edges)}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.nodes.tolist()]
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    lines += [f"{i} {j} {t}" for (i, j), t in zip(mesh.boundary_edges.tolist(), mesh.boundary_tags.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def load_mesh(path: str | Path, check: bool = True) -> Mesh:
    """Read a mesh file; raises MeshFormatError or MeshValidationError."""
    raw = Path(path).read_text().splitlines()
    rows = [(n + 1, line.split()) for n, line in enumerate(raw) if line.strip() and not line.lstrip().startswith("#")]
    if not rows:
        raise MeshFormatError("empty file", 1)

    def ints(lineno, tok, n):
        if len(tok) != n:
            raise MeshFormatError(f"expected {n} integers, got {len(tok)} fields", lineno)
        try:
            return [int(t) for t in tok]
        except ValueError:
            raise MeshFormatError(f"expected integers, got {' '.join(tok)!r}", lineno) from None

    lineno, tok = rows[0]
    nv, nt, nb = ints(lineno, tok, 3)
    if min(nv, nt, nb) < 0:
        raise MeshFormatError("negative count", lineno)
    if len(rows) < 1 + nv + nt + nb:
        last = rows[-1][0]
        raise MeshFormatError(f"expected {nv + nt + nb} data lines after the header, found {len(rows) - 1}", last + 1)
    if len(rows) > 1 + nv + nt + nb:
        raise MeshFormatError("trailing data after the last boundary edge", rows[1 + nv + nt + nb][0])

    nodes = np.empty((nv, 2))
    for k in range(nv):
        lineno, tok = rows[1 + k]
        if len(tok) != 2:
            raise MeshFormatError(f"expected 2 coordinates, got {len(tok)} fields", lineno)
        try:
            nodes[k] = [float(t) for t in tok]
        except ValueError:
            raise MeshFormatError(f"bad coordinate {' '.join(tok)!r}", lineno) from None
    tris = np.array([ints(*rows[1 + nv + k], 3) for k in range(nt)], dtype=np.int64).reshape(-1, 3)
    bnd = np.array([ints(*rows[1 + nv + nt + k], 3) for k in range(nb)], dtype=np.int64).reshape(-1, 3)
    mesh = _make_mesh(nodes, tris, bnd[:, :2], bnd[:, 2])
    if check:
        report = validate(mesh)
        if not report.ok:
            raise MeshValidationError(report.violations)
    return mesh
