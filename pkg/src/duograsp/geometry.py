"""Rigid transforms, bounding volumes, and low-level intersection tests.

Everything operates on float64 numpy arrays in meters. Rotations are 3x3
matrices with columns giving the frame axes expressed in the parent frame.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

ROTATION_TOL = 1e-9


def unit(v: np.ndarray) -> np.ndarray:
    """Return v normalized to unit length."""
    n = np.linalg.norm(v)
    if n < 1e-15:
        raise ValueError("cannot normalize near-zero vector")
    return np.asarray(v, dtype=float) / n


def skew(p: np.ndarray) -> np.ndarray:
    """Cross-product matrix: skew(p) @ q == cross(p, q)."""
    x, y, z = p
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rotation_about_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation about a unit axis."""
    k = skew(unit(axis))
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def rotation_between(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Smallest rotation carrying unit vector a onto unit vector b."""
    a = unit(a)
    b = unit(b)
    v = np.cross(a, b)
    c = float(np.dot(a, b))
    if c < -1.0 + 1e-12:
        # Antiparallel: rotate pi about any axis perpendicular to a.
        helper = np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        return rotation_about_axis(np.cross(a, helper), np.pi)
    k = skew(v)
    return np.eye(3) + k + k @ k / (1.0 + c)


def rotation_angle(ra: np.ndarray, rb: np.ndarray) -> float:
    """Geodesic angle between two rotation matrices."""
    tr = np.trace(ra.T @ rb)
    return float(np.arccos(np.clip((tr - 1.0) / 2.0, -1.0, 1.0)))


def orthonormal_basis(axis: np.ndarray) -> np.ndarray:
    """Right-handed basis whose third column is the given unit axis."""
    w = unit(axis)
    helper = np.array([0.0, 0.0, 1.0]) if abs(w[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    u = unit(np.cross(helper, w))
    v = np.cross(w, u)
    return np.column_stack([u, v, w])


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation via QR of a Gaussian matrix."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def directions_in_cone(axis: np.ndarray, half_angle: float, n: int,
                       rng: np.random.Generator) -> np.ndarray:
    """Sample n unit directions uniformly (by solid angle) within a cone.

    The cone has the given half-angle about the unit axis.
    """
    cos_t = rng.uniform(np.cos(half_angle), 1.0, size=n)
    phi = rng.uniform(0.0, 2.0 * np.pi, size=n)
    sin_t = np.sqrt(np.maximum(0.0, 1.0 - cos_t ** 2))
    local = np.column_stack([sin_t * np.cos(phi), sin_t * np.sin(phi), cos_t])
    return local @ orthonormal_basis(axis).T


def rng_from(master_seed: int, *key: int) -> np.random.Generator:
    """Derive an independent RNG stream from a master seed and an integer key.

    Derivation uses SeedSequence spawn keys, so streams are reproducible and
    statistically independent regardless of scheduling or worker count.
    """
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(key))
    return np.random.default_rng(ss)


@dataclass
class Transform:
    """Rigid transform: rotation (3x3, columns = child axes) + translation.

    Serialized as a 4x4 row-major homogeneous matrix with last row (0,0,0,1).
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=float).reshape(3)

    @classmethod
    def identity(cls) -> "Transform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "Transform":
        m = np.asarray(m, dtype=float).reshape(4, 4)
        if not np.allclose(m[3], [0.0, 0.0, 0.0, 1.0], atol=1e-12):
            raise ValidationError("homogeneous matrix last row must be (0,0,0,1)")
        t = cls(m[:3, :3].copy(), m[:3, 3].copy())
        t.validate()
        return t

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def compose(self, other: "Transform") -> "Transform":
        """T_a<-c = T_a<-b.compose(T_b<-c)."""
        return Transform(self.rotation @ other.rotation,
                         self.rotation @ other.translation + self.translation)

    def inverse(self) -> "Transform":
        rt = self.rotation.T
        return Transform(rt, -rt @ self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Apply to one point (3,) or a stack of points (n,3)."""
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation

    def validate(self, tol: float = ROTATION_TOL) -> None:
        r = self.rotation
        if not np.all(np.isfinite(r)) or not np.all(np.isfinite(self.translation)):
            raise ValidationError("transform has non-finite entries")
        if np.max(np.abs(r.T @ r - np.eye(3))) > tol:
            raise ValidationError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > tol:
            raise ValidationError("rotation determinant is not +1")


@dataclass(frozen=True)
class Aabb:
    """Axis-aligned box given by min/max corners."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=float).reshape(3))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=float).reshape(3))
        if np.any(self.lo > self.hi + 1e-15):
            raise ValidationError("Aabb min corner exceeds max corner")

    @classmethod
    def from_points(cls, points: np.ndarray) -> "Aabb":
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        return cls(points.min(axis=0), points.max(axis=0))

    @property
    def extents(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def max_extent(self) -> float:
        return float(np.max(self.extents))

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.extents))

    def contains(self, points: np.ndarray, tol: float = 0.0) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        ok = np.all((p >= self.lo - tol) & (p <= self.hi + tol), axis=1)
        return ok if ok.size > 1 else ok[0] if np.ndim(points) == 1 else ok

    def overlaps(self, other: "Aabb") -> bool:
        return bool(np.all(self.lo <= other.hi) and np.all(other.lo <= self.hi))


@dataclass(frozen=True)
class OrientedBox:
    """Oriented box: half extents plus a pose (rotation columns = box axes)."""

    half_extents: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "half_extents",
                           np.asarray(self.half_extents, dtype=float).reshape(3))
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float).reshape(3, 3))
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(3))
        if np.any(self.half_extents <= 0):
            raise ValidationError("oriented box half extents must be positive")

    def posed(self, transform: Transform) -> "OrientedBox":
        """Express this box in the parent frame of the given pose."""
        return OrientedBox(self.half_extents,
                           transform.rotation @ self.rotation,
                           transform.apply(self.center))

    @property
    def corners(self) -> np.ndarray:
        signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)],
                         dtype=float)
        return self.center + (signs * self.half_extents) @ self.rotation.T

    @property
    def circumradius(self) -> float:
        return float(np.linalg.norm(self.half_extents))

    def aabb(self) -> Aabb:
        # Extent of the rotated box along each world axis.
        r = np.abs(self.rotation) @ self.half_extents
        return Aabb(self.center - r, self.center + r)

    def contains(self, points: np.ndarray, tol: float = 0.0) -> np.ndarray:
        """Inclusive containment test for (n,3) points."""
        local = (np.atleast_2d(points) - self.center) @ self.rotation
        return np.all(np.abs(local) <= self.half_extents + tol, axis=1)


# ---------------------------------------------------------------------------
# Ray / triangle intersection (Moller-Trumbore, vectorized over triangles)

def ray_triangles(origin: np.ndarray, direction: np.ndarray, tri: np.ndarray,
                  min_dist: float = 1e-9):
    """Intersect one ray with a stack of triangles.

    tri has shape (m,3,3). Returns (t, hit_points, local_indices) for hits
    with t > min_dist, unsorted. Hits closer than min_dist are suppressed,
    equivalent to offsetting the ray origin by min_dist along the ray.
    """
    origin = np.asarray(origin, dtype=float)
    direction = np.asarray(direction, dtype=float)
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    p = np.cross(direction, e2)
    det = np.einsum("ij,ij->i", e1, p)
    ok = np.abs(det) > 1e-14
    inv = np.where(ok, det, 1.0)
    inv = 1.0 / inv
    tvec = origin - tri[:, 0]
    u = np.einsum("ij,ij->i", tvec, p) * inv
    q = np.cross(tvec, e1)
    v = np.dot(q, direction) * inv
    t = np.einsum("ij,ij->i", e2, q) * inv
    ok &= (u >= -1e-12) & (v >= -1e-12) & (u + v <= 1.0 + 1e-12) & (t > min_dist)
    idx = np.nonzero(ok)[0]
    tt = t[idx]
    pts = origin + np.outer(tt, direction)
    return tt, pts, idx


# ---------------------------------------------------------------------------
# Triangle vs axis-aligned box (Akenine-Moller SAT), vectorized

def triangles_overlap_box(tri: np.ndarray, half: np.ndarray) -> np.ndarray:
    """SAT overlap of triangles (m,3,3) against a box centered at the origin.

    Triangles must already be expressed in the box frame. Boundary contact
    counts as overlap.
    """
    half = np.asarray(half, dtype=float)
    out = np.zeros(len(tri), dtype=bool)

    # Box face axes: plain AABB bounds test, which kills most triangles.
    alive = (np.all(tri.min(axis=1) <= half, axis=1)
             & np.all(tri.max(axis=1) >= -half, axis=1))
    if not alive.any():
        return out
    t = tri[alive]
    v0, v1, v2 = t[:, 0], t[:, 1], t[:, 2]
    e0 = v1 - v0
    e1 = v2 - v1
    e2 = v0 - v2

    # Triangle plane.
    nx = e0[:, 1] * e2[:, 2] - e0[:, 2] * e2[:, 1]
    ny = e0[:, 2] * e2[:, 0] - e0[:, 0] * e2[:, 2]
    nz = e0[:, 0] * e2[:, 1] - e0[:, 1] * e2[:, 0]
    d = nx * v0[:, 0] + ny * v0[:, 1] + nz * v0[:, 2]
    r = half[0] * np.abs(nx) + half[1] * np.abs(ny) + half[2] * np.abs(nz)
    sep = np.abs(d) > r

    # Nine cross-product axes e_k x f_j. For unit e_k the cross has a zero
    # k-th component, leaving a 2D projection onto the (a, b) plane.
    for f in (e0, e1, e2):
        for k in range(3):
            a, b = (k + 1) % 3, (k + 2) % 3
            ax_a = -f[:, b]
            ax_b = f[:, a]
            p0 = v0[:, a] * ax_a + v0[:, b] * ax_b
            p1 = v1[:, a] * ax_a + v1[:, b] * ax_b
            p2 = v2[:, a] * ax_a + v2[:, b] * ax_b
            r = half[a] * np.abs(ax_a) + half[b] * np.abs(ax_b)
            lo = np.minimum(np.minimum(p0, p1), p2)
            hi = np.maximum(np.maximum(p0, p1), p2)
            sep |= (lo > r) | (hi < -r)

    out[np.nonzero(alive)[0]] = ~sep
    return out


# ---------------------------------------------------------------------------
# Oriented box vs oriented box (Gottschalk SAT), vectorized over pairs

def obb_pairs_overlap(ca, ra, ha, cb, rb, hb) -> np.ndarray:
    """SAT overlap for n box pairs.

    ca/cb: (n,3) centers; ra/rb: (n,3,3) rotations (columns = axes);
    ha/hb: (3,) or (n,3) half extents. Returns (n,) bool. The test is
    slightly conservative: contact within ~1e-12 counts as overlap.
    """
    ca = np.atleast_2d(ca)
    cb = np.atleast_2d(cb)
    n = len(ca)
    ha = np.broadcast_to(np.asarray(ha, dtype=float), (n, 3))
    hb = np.broadcast_to(np.asarray(hb, dtype=float), (n, 3))
    c = np.einsum("nji,njk->nik", ra, rb)          # B axes in A frame
    absc = np.abs(c) + 1e-12
    t = np.einsum("nji,nj->ni", ra, cb - ca)       # B center in A frame
    sep = np.zeros(n, dtype=bool)

    # A's face axes.
    for i in range(3):
        sep |= np.abs(t[:, i]) > ha[:, i] + np.einsum("j,nj->n", np.ones(3), hb * absc[:, i, :])
    # B's face axes.
    for j in range(3):
        sep |= np.abs(np.einsum("ni,ni->n", t, c[:, :, j])) > \
            hb[:, j] + np.einsum("ni,ni->n", ha, absc[:, :, j])
    # Cross axes A_i x B_j.
    for i in range(3):
        i1, i2 = (i + 1) % 3, (i + 2) % 3
        for j in range(3):
            j1, j2 = (j + 1) % 3, (j + 2) % 3
            lhs = np.abs(t[:, i2] * c[:, i1, j] - t[:, i1] * c[:, i2, j])
            rhs = (ha[:, i1] * absc[:, i2, j] + ha[:, i2] * absc[:, i1, j]
                   + hb[:, j1] * absc[:, i, j2] + hb[:, j2] * absc[:, i, j1])
            sep |= lhs > rhs
    return ~sep


def obb_overlap(box_a: OrientedBox, box_b: OrientedBox) -> bool:
    """Convenience single-pair oriented box overlap test."""
    return bool(obb_pairs_overlap(box_a.center[None], box_a.rotation[None],
                                  box_a.half_extents, box_b.center[None],
                                  box_b.rotation[None], box_b.half_extents)[0])
