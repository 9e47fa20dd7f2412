"""Procedural primitive meshes: boxes, composite furniture, icospheres.

The furniture builders produce watertight multi-part meshes in the large
object regime with thin graspable features (plates, bars, legs). Parts are
kept slightly separated so rays never cross coincident faces.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .mesh import TriangleMesh

_BOX_FACES = np.array([
    [0, 2, 1], [0, 3, 2],   # z-
    [4, 5, 6], [4, 6, 7],   # z+
    [0, 1, 5], [0, 5, 4],   # y-
    [2, 3, 7], [2, 7, 6],   # y+
    [0, 4, 7], [0, 7, 3],   # x-
    [1, 2, 6], [1, 6, 5],   # x+
], dtype=np.int64)

GAP = 0.002        # clearance between abutting parts
GRID_EDGE = 0.06   # target facet size for subdivided box surfaces


def box_arrays(extents, center=(0.0, 0.0, 0.0), max_edge: float | None = GRID_EDGE):
    """Vertices and outward-wound faces of an axis-aligned box.

    Faces are gridded so no edge exceeds max_edge (pass None for the plain
    12-triangle box); grids share exact border coordinates, so assemble()
    recovers a watertight mesh after vertex merging.
    """
    h = 0.5 * np.asarray(extents, dtype=float)
    c = np.asarray(center, dtype=float)
    if max_edge is None:
        signs = np.array([[-1, -1, -1], [1, -1, -1], [1, 1, -1], [-1, 1, -1],
                          [-1, -1, 1], [1, -1, 1], [1, 1, 1], [-1, 1, 1]], dtype=float)
        return c + signs * h, _BOX_FACES.copy()
    ticks = [np.linspace(-h[k], h[k], max(1, int(np.ceil(2 * h[k] / max_edge))) + 1)
             for k in range(3)]
    verts = []
    faces = []
    # Face layout: (fixed axis, side, in-plane axes a/b chosen so that
    # cross(ea, eb) * side points outward).
    for axis in range(3):
        a, b = (axis + 1) % 3, (axis + 2) % 3
        for side in (-1.0, 1.0):
            ta = ticks[a] if side > 0 else ticks[a][::-1]
            tb = ticks[b]
            na, nb = len(ta), len(tb)
            base = len(verts)
            for va in ta:
                for vb in tb:
                    p = np.zeros(3)
                    p[axis] = side * h[axis]
                    p[a] = va
                    p[b] = vb
                    verts.append(p)
            for i in range(na - 1):
                for j in range(nb - 1):
                    q = base + i * nb + j
                    faces.append([q, q + nb, q + nb + 1])
                    faces.append([q, q + nb + 1, q + 1])
    return c + np.asarray(verts), np.asarray(faces, dtype=np.int64)


def assemble(parts, source="assembled") -> TriangleMesh:
    """Concatenate (vertices, faces) parts, merging exactly-equal vertices."""
    verts = []
    faces = []
    offset = 0
    for v, f in parts:
        verts.append(v)
        faces.append(f + offset)
        offset += len(v)
    all_verts = np.vstack(verts)
    unique, inverse = np.unique(all_verts, axis=0, return_inverse=True)
    return TriangleMesh.build(unique, inverse[np.vstack(faces)], source=source)


def box_mesh(extents, center=(0.0, 0.0, 0.0), source="box",
             max_edge: float | None = GRID_EDGE) -> TriangleMesh:
    return assemble([box_arrays(extents, center, max_edge)], source=source)


def icosphere(radius: float = 0.5, subdivisions: int = 3, center=(0, 0, 0)) -> TriangleMesh:
    """Subdivided icosahedron with vertices on the sphere."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=float)
    verts /= np.linalg.norm(verts[0])
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    for _ in range(subdivisions):
        verts_list = list(verts)
        cache: dict[tuple[int, int], int] = {}

        def midpoint(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                m = verts_list[a] + verts_list[b]
                verts_list.append(m / np.linalg.norm(m))
                cache[key] = len(verts_list) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]])
        verts = np.asarray(verts_list)
        faces = np.asarray(new_faces, dtype=np.int64)
    verts = np.asarray(center, dtype=float) + radius * verts
    return TriangleMesh.build(verts, faces, source=f"icosphere_{subdivisions}")


# ---------------------------------------------------------------------------
# Furniture corpus: plates, frames, stools, tube chairs, shelves

def plate(length=1.0, width=0.7, thickness=0.03, name="plate") -> TriangleMesh:
    return box_mesh([length, width, thickness], source=name)


def frame(outer_x=1.0, outer_y=0.8, bar=0.05, thickness=0.05, name="frame") -> TriangleMesh:
    """Rectangular picture frame of four bars lying in the xy plane."""
    parts = []
    half_y = (outer_y - bar) / 2.0
    span_x = outer_x
    parts.append(box_arrays([span_x, bar, thickness], [0, -half_y, 0]))
    parts.append(box_arrays([span_x, bar, thickness], [0, half_y, 0]))
    inner = outer_y - 2 * bar - 2 * GAP
    half_x = (outer_x - bar) / 2.0
    parts.append(box_arrays([bar, inner, thickness], [-half_x, 0, 0]))
    parts.append(box_arrays([bar, inner, thickness], [half_x, 0, 0]))
    return assemble(parts, source=name)


def stool(seat_x=0.45, seat_y=0.45, seat_t=0.035, height=0.478, leg=0.035,
          name="stool") -> TriangleMesh:
    parts = []
    seat_z = height - seat_t / 2.0
    parts.append(box_arrays([seat_x, seat_y, seat_t], [0, 0, seat_z]))
    leg_h = height - seat_t - GAP
    inset = leg / 2.0 + 0.02
    for sx in (-1, 1):
        for sy in (-1, 1):
            cx = sx * (seat_x / 2.0 - inset)
            cy = sy * (seat_y / 2.0 - inset)
            parts.append(box_arrays([leg, leg, leg_h], [cx, cy, leg_h / 2.0]))
    return assemble(parts, source=name)


def tube_chair(seat=0.4, seat_t=0.03, seat_h=0.42, back_h=0.8, bar=0.03,
               name="tube_chair") -> TriangleMesh:
    parts = []
    parts.append(box_arrays([seat, seat, seat_t], [0, 0, seat_h - seat_t / 2.0]))
    leg_h = seat_h - seat_t - GAP
    inset = bar / 2.0 + 0.015
    for sx in (-1, 1):
        for sy in (-1, 1):
            cx = sx * (seat / 2.0 - inset)
            cy = sy * (seat / 2.0 - inset)
            parts.append(box_arrays([bar, bar, leg_h], [cx, cy, leg_h / 2.0]))
    back_len = back_h - seat_h - GAP
    parts.append(box_arrays([seat, bar, back_len],
                            [0, seat / 2.0 - bar / 2.0, seat_h + GAP + back_len / 2.0]))
    return assemble(parts, source=name)


def table(top_x=0.8, top_y=0.5, top_t=0.04, height=0.4, leg=0.04, name="table") -> TriangleMesh:
    parts = []
    parts.append(box_arrays([top_x, top_y, top_t], [0, 0, height - top_t / 2.0]))
    leg_h = height - top_t - GAP
    inset = leg / 2.0 + 0.02
    for sx in (-1, 1):
        for sy in (-1, 1):
            cx = sx * (top_x / 2.0 - inset)
            cy = sy * (top_y / 2.0 - inset)
            parts.append(box_arrays([leg, leg, leg_h], [cx, cy, leg_h / 2.0]))
    return assemble(parts, source=name)


def shelf(width=0.7, depth=0.3, plate_t=0.03, wall_t=0.03, height=0.38,
          name="shelf") -> TriangleMesh:
    parts = []
    parts.append(box_arrays([width, depth, plate_t], [0, 0, plate_t / 2.0]))
    parts.append(box_arrays([width, depth, plate_t], [0, 0, height - plate_t / 2.0]))
    wall_h = height - 2 * plate_t - 2 * GAP
    for sx in (-1, 1):
        parts.append(box_arrays([wall_t, depth, wall_h],
                                [sx * (width - wall_t) / 2.0, 0, height / 2.0]))
    return assemble(parts, source=name)


def ladder(rail=0.05, height=1.0, spread=0.4, rungs=3, rung_t=0.04,
           name="ladder") -> TriangleMesh:
    parts = []
    for sx in (-1, 1):
        parts.append(box_arrays([rail, rail, height], [sx * spread / 2.0, 0, height / 2.0]))
    span = spread - rail - 2 * GAP
    for k in range(rungs):
        z = height * (k + 1) / (rungs + 1)
        parts.append(box_arrays([span, rung_t, rung_t], [0, 0, z]))
    return assemble(parts, source=name)


def primitive_corpus() -> dict[str, TriangleMesh]:
    """Ten furniture-like meshes with graspable thin features."""
    return {
        "plate_thin": plate(1.0, 0.7, 0.03, name="plate_thin"),
        "plate_square": plate(1.0, 1.0, 0.05, name="plate_square"),
        "frame_rect": frame(1.0, 0.8, 0.05, 0.05, name="frame_rect"),
        "frame_square": frame(0.9, 0.9, 0.06, 0.04, name="frame_square"),
        "stool_low": stool(name="stool_low"),
        "stool_tall": stool(seat_x=0.4, seat_y=0.4, seat_t=0.03, height=0.63, leg=0.03,
                            name="stool_tall"),
        "tube_chair": tube_chair(name="tube_chair"),
        "table_small": table(name="table_small"),
        "shelf_two": shelf(name="shelf_two"),
        "ladder_frame": ladder(name="ladder_frame"),
    }


def write_obj(mesh: TriangleMesh, path) -> Path:
    """Write an OBJ file with enough digits for an exact round trip."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for v in mesh.vertices:
        lines.append(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}")
    for f in mesh.faces:
        lines.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")
    path.write_text("\n".join(lines) + "\n")
    return path


def write_corpus(out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    return [write_obj(mesh, out_dir / f"{name}.obj")
            for name, mesh in primitive_corpus().items()]
