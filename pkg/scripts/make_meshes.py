"""Generate the committed benchmark meshes.

Run once from the repository root:

    python scripts/make_meshes.py

Requires the ``triangle`` package (only for the cylinder meshes; the
package itself never imports it).  Output goes to ``src/gradiv/data``.
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np
import triangle

from gradiv.mesh import CYLINDER, INLET, OUTLET, WALL, Mesh, generate_step_channel, validate, write_mesh

LENGTH, HEIGHT = 2.2, 0.41
CENTER, RADIUS = np.array([0.2, 0.2]), 0.05

# (circle vertices, size at the cylinder, growth rate, far-field size)
CYLINDER_LEVELS = {
    "coarse": (64, 0.006, 0.25, 0.035),
    "fine": (128, 0.003, 0.18, 0.018),
}
STEP_LEVELS = {"coarse": 2, "fine": 4}


def _size(p, h_cyl, growth, h_far):
    d = np.linalg.norm(np.atleast_2d(p) - CENTER, axis=1) - RADIUS
    return np.minimum(h_far, h_cyl + growth * np.maximum(d, 0.0))


def _march(a, b, size):
    """Points from a to b (a included, b excluded) spaced by the local size."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    length = np.linalg.norm(b - a)
    s, pts = 0.0, []
    while s < length - 1e-12:
        pts.append(a + (b - a) * s / length)
        s += float(size(pts[-1])[0])
    # spread the vertices evenly in arc length so the last gap is not a sliver
    n = len(pts)
    return [a + (b - a) * k / n for k in range(n)]


def cylinder_mesh(n_circle: int, h_cyl: float, growth: float, h_far: float) -> Mesh:
    if n_circle % 4:
        raise ValueError("n_circle must be divisible by 4 so the circle has vertices at theta = 0 and pi")
    size = lambda p: _size(p, h_cyl, growth, h_far)  # noqa: E731
    corners = [(0.0, 0.0), (LENGTH, 0.0), (LENGTH, HEIGHT), (0.0, HEIGHT)]
    side_tags = [WALL, OUTLET, WALL, INLET]
    verts, segs, marks = [], [], []
    for k in range(4):
        pts = _march(corners[k], corners[(k + 1) % 4], size)
        start = len(verts)
        verts += pts
        for i in range(len(pts)):
            segs.append((start + i, start + i + 1))
            marks.append(side_tags[k])
    segs[-1] = (segs[-1][0], 0)
    start = len(verts)
    theta = 2.0 * np.pi * np.arange(n_circle) / n_circle
    verts += list(CENTER + RADIUS * np.column_stack([np.cos(theta), np.sin(theta)]))
    segs += [(start + i, start + (i + 1) % n_circle) for i in range(n_circle)]
    marks += [CYLINDER] * n_circle

    pslg = dict(vertices=np.array(verts), segments=np.array(segs),
                segment_markers=np.array(marks)[:, None], holes=np.array([CENTER]))
    out = triangle.triangulate(pslg, f"pq30Ya{0.5 * h_far ** 2}")
    for _ in range(6):
        cent = out["vertices"][out["triangles"]].mean(axis=1)
        target = 0.45 * size(cent) ** 2
        area = _areas(out["vertices"], out["triangles"])
        if np.all(area <= target * 1.05):
            break
        out = triangle.triangulate(dict(out, triangle_max_area=target), "rpq30Ya")

    nodes, tris = out["vertices"], out["triangles"]
    flip = _areas(nodes, tris, signed=True) < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    edges = out["segments"]
    tags = out["segment_markers"].ravel()
    keep = tags > 0
    return Mesh(np.ascontiguousarray(nodes, float), np.ascontiguousarray(tris, np.int64),
                np.ascontiguousarray(edges[keep], np.int64), np.ascontiguousarray(tags[keep], np.int64))


def _areas(nodes, tris, signed=False):
    p = nodes[tris]
    a = 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
               - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    return a if signed else np.abs(a)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "src" / "gradiv" / "data"))
    args = ap.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, params in CYLINDER_LEVELS.items():
        mesh = cylinder_mesh(*params)
        report = validate(mesh)
        if not report:
            raise SystemExit(f"cylinder {name}: {report.violations}")
        write_mesh(mesh, out / f"cylinder_{name}.mesh")
        print(f"cylinder_{name}: {mesh.n_nodes} nodes, {mesh.n_triangles} triangles")
    for name, r in STEP_LEVELS.items():
        mesh = generate_step_channel(r)
        write_mesh(mesh, out / f"step_{name}.mesh")
        print(f"step_{name}: {mesh.n_nodes} nodes, {mesh.n_triangles} triangles")


if __name__ == "__main__":
    main()
