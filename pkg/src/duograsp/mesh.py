"""Triangle mesh type and the geometric queries the pipeline needs.

All operations are pure functions over immutable mesh data; RNG state is
always passed in explicitly so concurrent use stays deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import DegenerateMeshError, EmptyMeshError, ValidationError
from .geometry import (Aabb, OrientedBox, Transform, orthonormal_basis, ray_triangles,
                       rotation_about_axis, rotation_between, rng_from, triangles_overlap_box,
                       unit)

MIN_FACE_AREA = 1e-12
RAY_MIN_DIST = 1e-9
GRAVITY = np.array([0.0, 0.0, -1.0])

# Fixed jittered directions for the parity inside/outside vote; chosen away
# from coordinate planes so axis-aligned geometry cannot produce grazing hits.
_PARITY_DIRS = np.array([
    [0.8017837257372732, 0.5345224838248488, -0.2672612419124244],
    [-0.3713906763541037, 0.5570860145311556, 0.7427813527082074],
    [0.4558423058385518, -0.5698028822981898, 0.6837634587578276],
])


@dataclass(frozen=True)
class LoadReport:
    """Bookkeeping from mesh construction."""

    source: str
    raw_faces: int
    dropped: int


@dataclass
class TriangleMesh:
    """Indexed triangle surface with per-face outward normals, in meters."""

    vertices: np.ndarray
    faces: np.ndarray
    face_normals: np.ndarray
    report: LoadReport | None = None

    @classmethod
    def build(cls, vertices, faces, source: str = "arrays") -> "TriangleMesh":
        """Construct from raw arrays, dropping faces with area <= 1e-12 m^2."""
        vertices = np.asarray(vertices, dtype=float).reshape(-1, 3)
        faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(vertices)):
            raise ValidationError("mesh vertices contain non-finite values")
        raw = len(faces)
        if raw and (faces.min() < 0 or faces.max() >= len(vertices)):
            raise ValidationError("face index out of range")
        tri = vertices[faces]
        cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        area2 = np.linalg.norm(cross, axis=1)
        keep = area2 > 2.0 * MIN_FACE_AREA
        faces = faces[keep]
        if len(faces) == 0:
            raise EmptyMeshError(f"{source}: no valid faces after filtering")
        normals = cross[keep] / area2[keep][:, None]
        report = LoadReport(source=source, raw_faces=raw, dropped=int(raw - keep.sum()))
        return cls(vertices, faces, normals, report)

    def validate(self) -> None:
        if not np.all(np.isfinite(self.vertices)):
            raise ValidationError("non-finite vertices")
        if self.faces.min() < 0 or self.faces.max() >= len(self.vertices):
            raise ValidationError("face index out of range")
        if np.any(self.face_areas <= MIN_FACE_AREA):
            raise ValidationError("degenerate face present")
        norms = np.linalg.norm(self.face_normals, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-9:
            raise ValidationError("face normals not unit length")

    # -- cached derived data -------------------------------------------------

    @cached_property
    def triangles(self) -> np.ndarray:
        return self.vertices[self.faces]

    @cached_property
    def face_areas(self) -> np.ndarray:
        tri = self.triangles
        return 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)

    @cached_property
    def surface_area(self) -> float:
        return float(self.face_areas.sum())

    @cached_property
    def aabb(self) -> Aabb:
        return Aabb.from_points(self.vertices)

    @cached_property
    def face_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        tri = self.triangles
        return tri.min(axis=1), tri.max(axis=1)

    @cached_property
    def is_watertight(self) -> bool:
        """True when every undirected edge is shared by exactly two faces."""
        f = self.faces
        edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        edges = np.sort(edges, axis=1)
        _, counts = np.unique(edges, axis=0, return_counts=True)
        return bool(np.all(counts == 2))

    @cached_property
    def center_of_mass(self) -> np.ndarray:
        """Volume centroid for watertight meshes, vertex mean otherwise."""
        if self.is_watertight:
            tri = self.triangles
            vol6 = np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2]))
            total = vol6.sum()
            if abs(total) > 1e-12:
                centroids = tri.sum(axis=1) / 4.0
                return (vol6[:, None] * centroids).sum(axis=0) / total
        return self.vertices.mean(axis=0)

    def transformed(self, t: Transform) -> "TriangleMesh":
        return TriangleMesh(t.apply(self.vertices), self.faces,
                            self.face_normals @ t.rotation.T, self.report)


class SurfaceSamples(NamedTuple):
    points: np.ndarray
    normals: np.ndarray
    face_indices: np.ndarray


@dataclass(frozen=True)
class RayHit:
    distance: float
    point: np.ndarray
    face_index: int
    normal: np.ndarray


@dataclass(frozen=True)
class StablePoseResult:
    """Resting pose of the object in the table frame (table plane z=0)."""

    transform: Transform
    fallback: bool
    support_normal: np.ndarray


# ---------------------------------------------------------------------------

def rescale_to_range(mesh: TriangleMesh, scale_range: Sequence[float], seed: int,
                     target: float | None = None) -> tuple[TriangleMesh, float]:
    """Uniformly rescale about the Aabb center so the max extent lands in range.

    The target extent is drawn uniformly from [low, high] using the seed;
    pass target explicitly to force a specific extent.
    """
    low, high = float(scale_range[0]), float(scale_range[1])
    if not (0.0 < low < high):
        raise ValueError("scale range must satisfy 0 < low < high")
    if len(mesh.faces) == 0:
        raise EmptyMeshError("cannot rescale an empty mesh")
    extent = mesh.aabb.max_extent
    if extent < 1e-9:
        raise DegenerateMeshError(f"max extent {extent:g} below 1e-9 m")
    if target is None:
        target = float(rng_from(seed).uniform(low, high))
    scale = target / extent
    center = mesh.aabb.center
    verts = center + scale * (mesh.vertices - center)
    return TriangleMesh.build(verts, mesh.faces, source=mesh.report.source
                              if mesh.report else "rescaled"), scale


def sample_on_faces(mesh: TriangleMesh, face_indices: np.ndarray, n: int,
                    rng: np.random.Generator) -> SurfaceSamples:
    """Area-weighted sample of n points restricted to the given faces."""
    areas = mesh.face_areas[face_indices]
    total = areas.sum()
    if total <= 0:
        raise EmptyMeshError("no sampleable area in face subset")
    chosen = rng.choice(len(face_indices), size=n, p=areas / total)
    fidx = np.asarray(face_indices)[chosen]
    tri = mesh.triangles[fidx]
    u = rng.uniform(size=n)
    v = rng.uniform(size=n)
    flip = u + v > 1.0
    u[flip] = 1.0 - u[flip]
    v[flip] = 1.0 - v[flip]
    pts = tri[:, 0] + u[:, None] * (tri[:, 1] - tri[:, 0]) + v[:, None] * (tri[:, 2] - tri[:, 0])
    return SurfaceSamples(pts, mesh.face_normals[fidx], fidx)


def area_weighted_surface_sample(mesh: TriangleMesh, n: int, seed: int) -> SurfaceSamples:
    """Sample n surface points with face probability proportional to area."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return sample_on_faces(mesh, np.arange(len(mesh.faces)), n, rng_from(seed))


def ray_intersections(mesh: TriangleMesh, origin, direction,
                      face_indices: np.ndarray | None = None) -> list[RayHit]:
    """All ray/mesh hits beyond 1e-9, ascending by distance.

    Coincident hits (shared edges or vertices crossed by the ray, or exactly
    overlapping faces) are reported once.
    """
    direction = np.asarray(direction, dtype=float)
    if abs(np.linalg.norm(direction) - 1.0) > 1e-6:
        raise ValueError("direction must be unit length")
    if face_indices is None:
        tri = mesh.triangles
        fmap = None
    else:
        tri = mesh.triangles[face_indices]
        fmap = np.asarray(face_indices)
    t, pts, idx = ray_triangles(np.asarray(origin, dtype=float), direction, tri,
                                min_dist=RAY_MIN_DIST)
    if fmap is not None:
        idx = fmap[idx]
    order = np.lexsort((idx, t))
    hits: list[RayHit] = []
    last_t = -np.inf
    for k in order:
        if t[k] - last_t <= 1e-9:
            continue
        last_t = t[k]
        hits.append(RayHit(float(t[k]), pts[k], int(idx[k]), mesh.face_normals[idx[k]]))
    return hits


def faces_near_point(mesh: TriangleMesh, point: np.ndarray, radius: float) -> np.ndarray:
    """Indices of faces whose bounds intersect a ball-bounding box."""
    lo, hi = mesh.face_bounds
    p = np.asarray(point, dtype=float)
    mask = np.all(lo <= p + radius, axis=1) & np.all(hi >= p - radius, axis=1)
    return np.nonzero(mask)[0]


def first_intersection(mesh: TriangleMesh, origin, direction,
                       max_dist: float) -> RayHit | None:
    """First ray hit, provided it lies within max_dist of the origin.

    Uses a ball prefilter around the origin: any true first hit closer than
    max_dist necessarily lies inside the filtered face set, so the result is
    exact; hits beyond max_dist are reported as None.
    """
    cand = faces_near_point(mesh, origin, max_dist * 1.0001 + 1e-6)
    if len(cand) == 0:
        return None
    hits = ray_intersections(mesh, origin, direction, face_indices=cand)
    if not hits or hits[0].distance > max_dist:
        return None
    return hits[0]


def faces_overlapping_aabb(mesh: TriangleMesh, box: Aabb) -> np.ndarray:
    """Indices of faces whose triangles actually intersect the box (SAT)."""
    lo, hi = mesh.face_bounds
    rough = np.all(lo <= box.hi, axis=1) & np.all(hi >= box.lo, axis=1)
    cand = np.nonzero(rough)[0]
    if len(cand) == 0:
        return cand
    tri = mesh.triangles[cand] - box.center
    keep = triangles_overlap_box(tri, 0.5 * box.extents)
    return cand[keep]


def point_inside(mesh: TriangleMesh, point) -> bool:
    """Ray-parity containment with a 3-direction majority vote."""
    votes = 0
    for d in _PARITY_DIRS:
        if len(ray_intersections(mesh, point, d)) % 2 == 1:
            votes += 1
    return votes >= 2


def collides(mesh: TriangleMesh, body: Sequence[OrientedBox], pose: Transform) -> bool:
    """True iff any posed box intersects the surface or sits inside the mesh."""
    if len(body) == 0:
        raise ValueError("collision body must contain at least one box")
    lo, hi = mesh.face_bounds
    rot_pose, t_pose = pose.rotation, pose.translation
    centers = []
    for box in body:
        center = rot_pose @ box.center + t_pose
        rot = rot_pose @ box.rotation
        reach = np.abs(rot) @ box.half_extents
        rough = np.nonzero(np.all(lo <= center + reach, axis=1)
                           & np.all(hi >= center - reach, axis=1))[0]
        if len(rough):
            tri = (mesh.triangles[rough] - center) @ rot
            if bool(triangles_overlap_box(tri, box.half_extents).any()):
                return True
        centers.append(center)
    # Containment branch: a box fully inside the mesh touches no triangle.
    aabb = mesh.aabb
    return any(point_inside(mesh, c) for c in centers
               if np.all(c >= aabb.lo) and np.all(c <= aabb.hi))


# ---------------------------------------------------------------------------
# Stable resting pose

def _merged_hull_facets(hull: ConvexHull):
    """Group coplanar hull simplices into polygonal facets.

    Returns a list of (outward normal, vertex ids, area) sorted by plane key
    for determinism. Grouping keys are plane equations rounded to 1e-6.
    """
    groups: dict[tuple, list[int]] = {}
    for si, eq in enumerate(hull.equations):
        key = tuple(np.round(eq, 6))
        groups.setdefault(key, []).append(si)
    facets = []
    for key in sorted(groups):
        simplices = groups[key]
        normal = unit(np.mean(hull.equations[simplices][:, :3], axis=0))
        vids = np.unique(hull.simplices[simplices].ravel())
        area = 0.0
        for si in simplices:
            a, b, c = hull.points[hull.simplices[si]]
            area += 0.5 * np.linalg.norm(np.cross(b - a, c - a))
        facets.append((normal, vids, area))
    return facets


def _com_over_facet(com: np.ndarray, normal: np.ndarray, pts: np.ndarray) -> bool:
    """Does the CoM projection along the facet normal land inside the facet?"""
    basis = orthonormal_basis(normal)
    uv = (pts - pts[0]) @ basis[:, :2]
    if len(uv) < 3:
        return False
    try:
        poly = ConvexHull(uv)
    except QhullError:
        return False
    ring = uv[poly.vertices]  # counter-clockwise
    c2 = (com - pts[0]) @ basis[:, :2]
    nxt = np.roll(ring, -1, axis=0)
    edge = nxt - ring
    rel = c2 - ring
    cross = edge[:, 0] * rel[:, 1] - edge[:, 1] * rel[:, 0]
    return bool(np.all(cross >= -1e-9))


def stable_pose(mesh: TriangleMesh, rng: np.random.Generator | None = None) -> StablePoseResult:
    """Resting pose on the convex hull, preferring the object +Z pointing up.

    Candidate poses rest the object on hull facets whose center-of-mass
    projection falls inside the supporting facet; among those the winner
    minimizes dot(R @ +Z, gravity). Yaw about world Z is drawn from rng
    (zero when rng is None). The object is translated so its lowest vertex
    touches z = 0 and the CoM sits over the origin. When no facet passes the
    projection test the largest facet is used and the result is flagged.
    """
    ez = np.array([0.0, 0.0, 1.0])
    com = mesh.center_of_mass
    try:
        hull = ConvexHull(mesh.vertices)
        facets = _merged_hull_facets(hull)
    except (QhullError, ValueError):
        facets = []

    best = None          # (score, order index, normal)
    best_fallback = None  # (-area, order index, normal)
    for k, (normal, vids, area) in enumerate(facets):
        rot = rotation_between(normal, -ez)
        score = float(np.dot(rot @ ez, GRAVITY))
        if best_fallback is None or -area < best_fallback[0]:
            best_fallback = (-area, k, normal)
        if _com_over_facet(com, normal, mesh.vertices[vids]):
            if best is None or score < best[0]:
                best = (score, k, normal)

    if best is not None:
        normal = best[2]
        fallback = False
    elif best_fallback is not None:
        normal = best_fallback[2]
        fallback = True
    else:
        # Degenerate hull: keep the object upright as-is.
        normal = -ez.copy()
        fallback = True

    rot = rotation_between(normal, -ez)
    yaw = float(rng.uniform(0.0, 2.0 * np.pi)) if rng is not None else 0.0
    rot = rotation_about_axis(ez, yaw) @ rot
    rotated = mesh.vertices @ rot.T
    com_rot = rot @ com
    translation = np.array([-com_rot[0], -com_rot[1], -rotated[:, 2].min()])
    return StablePoseResult(Transform(rot, translation), fallback, normal)
