"""Synthetic depth-camera scenes and training-sample export.

A scene places the object in a stable pose on a table plane at z=0, renders
z-depth images from two near-antipodal hemisphere cameras by ray-cast
rasterization, back-projects them into a merged table-frame cloud, and
re-expresses per-pair gripper-volume crops in a canonical object frame whose
origin sits at the observed object centroid.

Camera convention: +Z forward optical axis, +X right, +Y down in the image;
pixel (u,v) indexes (column, row) with the ray through the pixel center.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .antipodal import GripperModel
from .errors import BadThresholdsError, NonUnitNormalError, ValidationError
from .geometry import OrientedBox, Transform, rng_from, unit
from .mesh import StablePoseResult, TriangleMesh, stable_pose
from .pairs import ObjectRecord

DEFAULT_INTRINSICS = dict(width=640, height=480, fx=550.0, fy=550.0, cx=320.0, cy=240.0)
RADIUS_RANGE = (1.5, 2.0)
ELEVATION_RANGE_DEG = (20.0, 70.0)
ANTIPODAL_JITTER_DEG = 15.0
TABLE_HALF_SIZE = 2.0
OBJECT_Z_CUTOFF = 0.005   # points above the support plane by more than this count as object
MIN_CROP_POINTS = 32


@dataclass(frozen=True)
class CameraModel:
    """Pinhole depth camera with its pose in the table frame."""

    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    pose: Transform

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValidationError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValidationError("principal point must lie inside the image")


def look_at(eye: np.ndarray, target: np.ndarray, up=(0.0, 0.0, 1.0)) -> Transform:
    """Camera pose with +Z forward through the target."""
    eye = np.asarray(eye, dtype=float)
    z = unit(np.asarray(target, dtype=float) - eye)
    x = unit(np.cross(z, np.asarray(up, dtype=float)))
    y = np.cross(z, x)
    return Transform(np.column_stack([x, y, z]), eye)


def place_on_table(mesh: TriangleMesh, seed: int) -> StablePoseResult:
    """Stable resting pose with a seeded uniform yaw; table frame = world."""
    return stable_pose(mesh, rng=rng_from(seed, 0))


def sample_camera_pair(seed: int, intrinsics: dict | None = None,
                       center=(0.0, 0.0, 0.0)) -> tuple[CameraModel, CameraModel]:
    """Two hemisphere cameras aimed at the table center, roughly antipodal.

    Camera 1: radius U[1.5,2.0] m, elevation U[20,70] deg, azimuth U[0,360).
    Camera 2: azimuth + 180 deg and elevation each jittered by U[-15,15] deg,
    with an independently drawn radius.
    """
    rng = rng_from(seed, 1)
    intr = dict(DEFAULT_INTRINSICS if intrinsics is None else intrinsics)
    center = np.asarray(center, dtype=float)

    def eye_at(radius, elev_deg, azim_deg):
        e = math.radians(elev_deg)
        a = math.radians(azim_deg)
        return center + radius * np.array([math.cos(e) * math.cos(a),
                                           math.cos(e) * math.sin(a),
                                           math.sin(e)])

    r1 = rng.uniform(*RADIUS_RANGE)
    elev1 = rng.uniform(*ELEVATION_RANGE_DEG)
    azim1 = rng.uniform(0.0, 360.0)
    r2 = rng.uniform(*RADIUS_RANGE)
    azim2 = azim1 + 180.0 + rng.uniform(-ANTIPODAL_JITTER_DEG, ANTIPODAL_JITTER_DEG)
    elev2 = elev1 + rng.uniform(-ANTIPODAL_JITTER_DEG, ANTIPODAL_JITTER_DEG)
    cam1 = CameraModel(**intr, pose=look_at(eye_at(r1, elev1, azim1), center))
    cam2 = CameraModel(**intr, pose=look_at(eye_at(r2, elev2, azim2), center))
    return cam1, cam2


# ---------------------------------------------------------------------------
# Depth rendering

def render_depth(mesh: TriangleMesh, table_from_object: Transform,
                 cam: CameraModel) -> np.ndarray:
    """Ray-cast z-depth image of a posed mesh; background pixels are 0.

    Implemented as a perspective-correct z-buffer rasterization, which
    produces the exact first-hit ray/triangle intersection depth for the ray
    through each pixel center.
    """
    depth = np.zeros((cam.height, cam.width))
    world = table_from_object.apply(mesh.vertices)
    verts_cam = cam.pose.inverse().apply(world)
    _rasterize(depth, verts_cam[mesh.faces], cam)
    return depth


def render_scene_depth(meshes_posed: list[tuple[TriangleMesh, Transform]],
                       cam: CameraModel) -> np.ndarray:
    """Depth of several posed meshes merged by nearest hit."""
    depth = np.zeros((cam.height, cam.width))
    inv = cam.pose.inverse()
    for mesh, pose in meshes_posed:
        verts_cam = inv.apply(pose.apply(mesh.vertices))
        _rasterize(depth, verts_cam[mesh.faces], cam)
    return depth


def _rasterize(depth: np.ndarray, tri_cam: np.ndarray, cam: CameraModel,
               near: float = 1e-4) -> None:
    h, w = depth.shape
    z = tri_cam[:, :, 2]
    keep = np.all(z > near, axis=1)
    tri_cam = tri_cam[keep]
    z = z[keep]
    if len(tri_cam) == 0:
        return
    u = cam.fx * tri_cam[:, :, 0] / z + cam.cx
    v = cam.fy * tri_cam[:, :, 1] / z + cam.cy
    inv_z = 1.0 / z
    u_lo = np.clip(np.ceil(u.min(axis=1) - 0.5), 0, w - 1).astype(int)
    u_hi = np.clip(np.floor(u.max(axis=1) + 0.5), 0, w - 1).astype(int)
    v_lo = np.clip(np.ceil(v.min(axis=1) - 0.5), 0, h - 1).astype(int)
    v_hi = np.clip(np.floor(v.max(axis=1) + 0.5), 0, h - 1).astype(int)
    onscreen = (u.max(axis=1) >= 0) & (u.min(axis=1) <= w - 1) & \
               (v.max(axis=1) >= 0) & (v.min(axis=1) <= h - 1)
    for k in np.nonzero(onscreen)[0]:
        ua, ub, uc = u[k]
        va, vb, vc = v[k]
        denom = (ub - ua) * (vc - va) - (uc - ua) * (vb - va)
        if abs(denom) < 1e-12:
            continue
        gu, gv = np.meshgrid(np.arange(u_lo[k], u_hi[k] + 1),
                             np.arange(v_lo[k], v_hi[k] + 1))
        # Barycentric coordinates in screen space.
        w1 = ((gu - ua) * (vc - va) - (uc - ua) * (gv - va)) / denom
        w2 = ((ub - ua) * (gv - va) - (gu - ua) * (vb - va)) / denom
        w0 = 1.0 - w1 - w2
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        if not inside.any():
            continue
        # 1/z interpolates affinely in screen space, so this is the exact
        # depth of the ray/triangle-plane intersection at the pixel center.
        zi = 1.0 / (w0 * inv_z[k, 0] + w1 * inv_z[k, 1] + w2 * inv_z[k, 2])
        tile = depth[v_lo[k]:v_hi[k] + 1, u_lo[k]:u_hi[k] + 1]
        write = inside & ((tile == 0.0) | (zi < tile))
        tile[write] = zi[write]


def backproject(depth: np.ndarray, cam: CameraModel) -> np.ndarray:
    """Depth image to a table-frame point cloud; zero-depth pixels skipped."""
    v_idx, u_idx = np.nonzero(depth > 0)
    d = depth[v_idx, u_idx]
    pts_cam = np.column_stack([(u_idx - cam.cx) * d / cam.fx,
                               (v_idx - cam.cy) * d / cam.fy,
                               d])
    return cam.pose.apply(pts_cam)


def project(points_table: np.ndarray, cam: CameraModel) -> np.ndarray:
    """Table-frame points to pixel coordinates (u, v); used for round trips."""
    p = cam.pose.inverse().apply(points_table)
    return np.column_stack([cam.fx * p[:, 0] / p[:, 2] + cam.cx,
                            cam.fy * p[:, 1] / p[:, 2] + cam.cy])


# ---------------------------------------------------------------------------
# Canonical object frame

def estimate_object_frame(n_z, t) -> Transform:
    """Canonical frame from a support-plane normal and a centroid estimate.

    Builds R = [n_x, n_y, n_z] with n_x = (n_z2, -n_z1, 0)/sqrt(n_z1^2+n_z2^2)
    and n_y = n_z x n_x, then returns the inverse of [R, t; 0, 1]. A vertical
    normal (n_z1 = n_z2 = 0) degenerates to n_x = (1,0,0).
    """
    n_z = np.asarray(n_z, dtype=float).reshape(3)
    t = np.asarray(t, dtype=float).reshape(3)
    if abs(np.linalg.norm(n_z) - 1.0) > 1e-6:
        raise NonUnitNormalError(f"|n_z| = {np.linalg.norm(n_z):.9f}")
    s = math.hypot(n_z[0], n_z[1])
    if s < 1e-8:
        n_x = np.array([1.0, 0.0, 0.0])
    else:
        n_x = np.array([n_z[1], -n_z[0], 0.0]) / s
    n_y = np.cross(n_z, n_x)
    return Transform(np.column_stack([n_x, n_y, n_z]), t).inverse()


def to_object_frame(cloud: np.ndarray, object_from_cam: Transform) -> np.ndarray:
    """Apply the canonical transform to every point of a camera-frame cloud."""
    return object_from_cam.apply(cloud)


def crop_gripper_volume(cloud: np.ndarray, grasp_pose: Transform,
                        closing_region: OrientedBox) -> np.ndarray:
    """Indices of cloud points inside the posed closing-region box."""
    posed = closing_region.posed(grasp_pose)
    return np.nonzero(posed.contains(np.asarray(cloud, dtype=float)))[0]


def classify_bin(q_score: float, thresholds=(0.85, 0.92)) -> int:
    """3-class label: q < t1 -> 0, t1 <= q < t2 -> 1, q >= t2 -> 2."""
    t1, t2 = thresholds
    if not (0.0 < t1 < t2 <= 1.0):
        raise BadThresholdsError(f"thresholds {thresholds} must satisfy 0 < t1 < t2 <= 1")
    if q_score < t1:
        return 0
    if q_score < t2:
        return 1
    return 2


# ---------------------------------------------------------------------------
# Scene assembly

def table_mesh(half_size: float = TABLE_HALF_SIZE, cells: int = 16) -> TriangleMesh:
    """Table plane z=0 as a subdivided grid.

    Subdivision keeps the renderer's whole-triangle near-plane cull local:
    cells straddling the camera plane sit far outside the frustum.
    """
    ticks = np.linspace(-half_size, half_size, cells + 1)
    gx, gy = np.meshgrid(ticks, ticks, indexing="ij")
    verts = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)])
    faces = []
    for i in range(cells):
        for j in range(cells):
            a = i * (cells + 1) + j
            b = a + cells + 1
            faces.append([a, b, a + 1])
            faces.append([a + 1, b, b + 1])
    return TriangleMesh.build(verts, faces, source="table")


@dataclass
class SceneSample:
    """One rendered scene tied back to an object record."""

    object_id: str
    scene_index: int
    table_from_object: Transform
    cameras: tuple[CameraModel, CameraModel]
    cloud: np.ndarray               # merged, table frame
    canon_from_table: Transform     # canonical object frame (centroid origin)
    fallback_pose: bool


def build_scene(mesh: TriangleMesh, object_id: str, scene_index: int, seed: int,
                intrinsics: dict | None = None, include_table: bool = True) -> SceneSample:
    """Render one two-camera scene of a mesh standing on the table plane.

    The canonical frame comes from estimate_object_frame with the support
    normal expressed in the table frame, (0,0,1), and the mean of the cloud
    points more than 5 mm above the plane as the centroid estimate.
    """
    placed = place_on_table(mesh, seed)
    cams = sample_camera_pair(seed, intrinsics)
    posed = [(mesh, placed.transform)]
    if include_table:
        posed.append((table_mesh(), Transform.identity()))
    clouds = [backproject(render_scene_depth(posed, cam), cam) for cam in cams]
    cloud = np.vstack(clouds)
    object_pts = cloud[cloud[:, 2] > OBJECT_Z_CUTOFF]
    centroid = object_pts.mean(axis=0) if len(object_pts) else cloud.mean(axis=0)
    canon_from_table = estimate_object_frame(np.array([0.0, 0.0, 1.0]), centroid)
    return SceneSample(object_id, scene_index, placed.transform, cams, cloud,
                       canon_from_table, placed.fallback)


@dataclass
class PairCrop:
    """Object-frame inner points of one grasp pair inside one scene."""

    pair_index: int
    points: np.ndarray        # (k,3) canonical object frame
    gripper_index: np.ndarray  # (k,) 0 for grasp a, 1 for grasp b
    label_class: int
    q_score: float


def pair_crops(scene: SceneSample, record: ObjectRecord, gripper: GripperModel,
               thresholds=(0.85, 0.92)) -> tuple[list[PairCrop], int]:
    """Crop the scene cloud with both closing regions of every pair.

    Pairs whose combined crop holds fewer than MIN_CROP_POINTS points are
    skipped; returns (crops, skipped_count). Requires finalized q_score.
    """
    tree = cKDTree(scene.cloud)
    radius = gripper.closing_region.circumradius * 1.0001
    crops = []
    skipped = 0
    for k, pair in enumerate(record.pairs):
        if pair.label.q_score is None:
            raise ValidationError("export requires finalized q_score; run finalize first")
        parts = []
        for slot, grasp_idx in enumerate((pair.a, pair.b)):
            pose_table = scene.table_from_object.compose(record.grasps[grasp_idx].pose)
            cand = np.asarray(tree.query_ball_point(pose_table.translation, radius), dtype=int)
            if len(cand) == 0:
                continue
            local = crop_gripper_volume(scene.cloud[cand], pose_table, gripper.closing_region)
            if len(local):
                parts.append((cand[local], slot))
        total = sum(len(ix) for ix, _ in parts)
        if total < MIN_CROP_POINTS:
            skipped += 1
            continue
        idx = np.concatenate([ix for ix, _ in parts])
        slot = np.concatenate([np.full(len(ix), s, dtype=np.int32) for ix, s in parts])
        pts = scene.canon_from_table.apply(scene.cloud[idx])
        crops.append(PairCrop(k, pts, slot, classify_bin(float(pair.label.q_score), thresholds),
                              float(pair.label.q_score)))
    return crops, skipped


def resample_crop(crop: PairCrop, n_points: int, rng: np.random.Generator) -> np.ndarray:
    """Exactly n_points rows of (x, y, z, gripper_index).

    More points than n: uniform subsample without replacement; fewer: sample
    with replacement.
    """
    k = len(crop.points)
    if k >= n_points:
        pick = rng.choice(k, size=n_points, replace=False)
    else:
        pick = rng.choice(k, size=n_points, replace=True)
    return np.column_stack([crop.points[pick], crop.gripper_index[pick].astype(float)])


# ---------------------------------------------------------------------------
# Scene and export file formats

def write_ply(path: Path, points: np.ndarray) -> None:
    """ASCII PLY with double precision coordinates (lossless round trip)."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    lines = ["ply", "format ascii 1.0", f"element vertex {len(points)}",
             "property double x", "property double y", "property double z", "end_header"]
    for p in points:
        lines.append(f"{p[0]:.17g} {p[1]:.17g} {p[2]:.17g}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def read_ply(path: Path) -> np.ndarray:
    lines = Path(path).read_text().splitlines()
    try:
        end = lines.index("end_header")
        n = next(int(l.split()[-1]) for l in lines[:end] if l.startswith("element vertex"))
    except (ValueError, StopIteration) as err:
        raise ValidationError(f"{path}: malformed PLY header") from err
    pts = [tuple(map(float, l.split())) for l in lines[end + 1:end + 1 + n]]
    return np.asarray(pts, dtype=float).reshape(-1, 3)


def export_training_samples(scenes: list[SceneSample], records_by_id: dict[str, ObjectRecord],
                            gripper: GripperModel, out_dir, n_points: int = 2048,
                            thresholds=(0.85, 0.92), seed: int = 0) -> dict:
    """Write one binary record per (scene, pair) plus a linking manifest.

    Each .bin file holds an (n_points, 4) row-major little-endian float32
    array of canonical object-frame coordinates plus a gripper-index channel,
    described by a JSON sidecar. Returns the export manifest.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    skipped_total = 0
    for scene in scenes:
        record = records_by_id[scene.object_id]
        crops, skipped = pair_crops(scene, record, gripper, thresholds)
        skipped_total += skipped
        for crop in crops:
            rng = rng_from(seed, scene.scene_index, crop.pair_index, 2)
            arr = resample_crop(crop, n_points, rng).astype("<f4")
            stem = f"{scene.object_id}_scene{scene.scene_index:04d}_pair{crop.pair_index:05d}"
            (out_dir / f"{stem}.bin").write_bytes(arr.tobytes(order="C"))
            pair = record.pairs[crop.pair_index]
            header = {
                "dtype": "<f4", "shape": [n_points, 4], "order": "C",
                "columns": ["x", "y", "z", "gripper"],
                "object": scene.object_id, "scene_index": scene.scene_index,
                "pair_index": crop.pair_index, "a": pair.a, "b": pair.b,
                "class": crop.label_class, "q_score": crop.q_score,
                "crop_points": int(len(crop.points)),
            }
            (out_dir / f"{stem}.json").write_text(json.dumps(header, indent=1) + "\n")
            entries.append({"file": f"{stem}.bin", "object": scene.object_id,
                            "scene_index": scene.scene_index, "pair_index": crop.pair_index,
                            "class": crop.label_class, "q_score": crop.q_score})
    manifest = {"schema_version": "da2gen-export-1", "n_points": n_points,
                "thresholds": list(thresholds), "skipped_pairs": skipped_total,
                "records": entries}
    (out_dir / "export_manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    return manifest
