"""OBJ and STL mesh ingestion."""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import EmptyMeshError, UnsupportedFormatError
from .mesh import TriangleMesh


def load_mesh(path) -> TriangleMesh:
    """Load an OBJ or STL file into a TriangleMesh.

    Zero-area faces are dropped and counted in mesh.report. Lengths are
    taken as meters. Polygonal OBJ faces are fan-triangulated.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    suffix = path.suffix.lower()
    if suffix == ".obj":
        verts, faces = _parse_obj(path)
    elif suffix == ".stl":
        verts, faces = _parse_stl(path)
    else:
        raise UnsupportedFormatError(f"unsupported mesh format: {path.name}")
    if len(faces) == 0:
        raise EmptyMeshError(f"{path.name}: no faces found")
    return TriangleMesh.build(verts, faces, source=str(path))


def _parse_obj(path: Path):
    verts: list[list[float]] = []
    faces: list[list[int]] = []
    with open(path, "r", errors="replace") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v" and len(parts) >= 4:
                verts.append([float(parts[1]), float(parts[2]), float(parts[3])])
            elif parts[0] == "f" and len(parts) >= 4:
                idx = []
                for tok in parts[1:]:
                    raw = int(tok.split("/")[0])
                    idx.append(raw - 1 if raw > 0 else len(verts) + raw)
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
    return np.asarray(verts, dtype=float).reshape(-1, 3), np.asarray(faces, dtype=np.int64).reshape(-1, 3)


def _parse_stl(path: Path):
    data = path.read_bytes()
    if len(data) >= 5 and data[:5].lower() == b"solid" and b"facet" in data[:1024].lower():
        return _parse_stl_ascii(data)
    return _parse_stl_binary(data, path.name)


def _parse_stl_binary(data: bytes, name: str):
    if len(data) < 84:
        raise UnsupportedFormatError(f"{name}: truncated binary STL")
    (count,) = struct.unpack_from("<I", data, 80)
    expected = 84 + count * 50
    if len(data) < expected:
        raise UnsupportedFormatError(f"{name}: binary STL shorter than facet count implies")
    rec = np.dtype([("normal", "<f4", 3), ("verts", "<f4", (3, 3)), ("attr", "<u2")])
    body = np.frombuffer(data, dtype=rec, count=count, offset=84)
    tri = body["verts"].astype(float).reshape(-1, 3)
    return _dedup_vertices(tri)


def _parse_stl_ascii(data: bytes):
    coords: list[list[float]] = []
    for line in data.decode(errors="replace").splitlines():
        parts = line.split()
        if len(parts) == 4 and parts[0] == "vertex":
            coords.append([float(parts[1]), float(parts[2]), float(parts[3])])
    tri = np.asarray(coords, dtype=float).reshape(-1, 3)
    return _dedup_vertices(tri)


def _dedup_vertices(tri_vertices: np.ndarray):
    """Collapse exactly-repeated vertices so shared edges are recoverable."""
    verts, inverse = np.unique(tri_vertices, axis=0, return_inverse=True)
    faces = inverse.reshape(-1, 3)
    return verts, faces.astype(np.int64)
