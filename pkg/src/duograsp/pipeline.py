"""Batch orchestration: config, per-object processing, and pipeline stages.

Every RNG stream derives from (master seed, object index, stage), so results
are byte-identical for any worker count. Objects are processed in sorted
mesh-path order and all derived artifacts are written atomically.
"""
from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dataset_io
from .antipodal import GripperModel, SampleParams, default_gripper, generate_grasps
from .errors import ConfigError, EmptyDatasetError, ValidationError
from .geometry import Transform
from .mesh import TriangleMesh, rescale_to_range
from .meshio import load_mesh
from .metrics import DEFAULT_WEIGHTS
from .pairs import (GenerationParams, ObjectRecord, dataset_stats, enumerate_pairs,
                    finalize_scores, label_pairs, prune_and_bin)
from .scene import (DEFAULT_INTRINSICS, CameraModel, SceneSample, build_scene,
                    export_training_samples, read_ply, write_ply)

STAGE_SCALE = 0
STAGE_GRASPS = 1
STAGE_SCENE = 2
STAGE_EXPORT = 3

SCENE_SCHEMA_VERSION = "da2gen-scene-1"


def derive_seed(master_seed: int, *key: int) -> int:
    """Stable 64-bit stage seed from the master seed and an integer key."""
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(key))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass
class PipelineConfig:
    meshes: list[str] = field(default_factory=list)
    mesh_dir: str | None = None
    output_dir: str = "out"
    scale_range: tuple[float, float] = (0.6, 1.0)
    gamma: float = 0.4
    blocks_per_axis: int = 3
    overlap: float = 0.1
    grasp_target: int = 150
    mu: float = 0.4
    epsilon: float = 1e-3
    weights: tuple[float, float, float] = DEFAULT_WEIGHTS
    thresholds: tuple[float, float] = (0.85, 0.92)
    seed: int = 0
    workers: int = 1
    camera: dict = field(default_factory=lambda: dict(DEFAULT_INTRINSICS))
    scenes_per_object: int = 2
    points_per_pair: int = 2048

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as err:
            raise ConfigError(f"config is not valid JSON: {err}") from err
        return cls.from_dict(doc)

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config field(s): {sorted(unknown)}")
        cfg = cls(**doc)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not self.meshes and not self.mesh_dir:
            raise ConfigError("meshes: provide a mesh list or mesh_dir")
        lo, hi = self.scale_range
        if not (0 < lo < hi):
            raise ConfigError("scale_range: must satisfy 0 < low < high")
        if self.gamma <= 0:
            raise ConfigError("gamma: must be positive")
        if self.blocks_per_axis < 1:
            raise ConfigError("blocks_per_axis: must be >= 1")
        if not (0 <= self.overlap < 0.5):
            raise ConfigError("overlap: must lie in [0, 0.5)")
        if self.grasp_target < 2:
            raise ConfigError("grasp_target: must be >= 2")
        if self.epsilon <= 0:
            raise ConfigError("epsilon: must be positive")
        if self.mu <= 0:
            raise ConfigError("mu: must be positive")
        w = self.weights
        if len(w) != 3 or any(x < 0 for x in w) or abs(sum(w) - 1.0) > 1e-12:
            raise ConfigError("weights: three nonnegative values summing to 1")
        t1, t2 = self.thresholds
        if not (0 < t1 < t2 <= 1):
            raise ConfigError("thresholds: must satisfy 0 < t1 < t2 <= 1")
        if self.workers < 1:
            raise ConfigError("workers: must be >= 1")
        if self.scenes_per_object < 0:
            raise ConfigError("scenes_per_object: must be >= 0")
        if self.points_per_pair < 1:
            raise ConfigError("points_per_pair: must be >= 1")
        needed = {"width", "height", "fx", "fy", "cx", "cy"}
        if set(self.camera) != needed:
            raise ConfigError(f"camera: needs exactly the keys {sorted(needed)}")

    def mesh_paths(self) -> list[Path]:
        paths = [Path(p) for p in self.meshes]
        if self.mesh_dir:
            base = Path(self.mesh_dir)
            if not base.is_dir():
                raise ConfigError(f"mesh_dir: {base} is not a directory")
            paths.extend(p for p in base.iterdir() if p.suffix.lower() in (".obj", ".stl"))
        paths = sorted(set(paths))
        if not paths:
            raise ConfigError("meshes: no mesh files found")
        return paths


def scaled_copy(mesh: TriangleMesh, scale: float) -> TriangleMesh:
    """Re-apply a recorded uniform scale about the Aabb center."""
    center = mesh.aabb.center
    verts = center + scale * (mesh.vertices - center)
    return TriangleMesh.build(verts, mesh.faces,
                              source=mesh.report.source if mesh.report else "scaled")


# ---------------------------------------------------------------------------

def process_object(mesh_path: Path, cfg: PipelineConfig, obj_index: int,
                   gripper: GripperModel | None = None) -> tuple[ObjectRecord, dict]:
    """Generate, pair, label, and prune one object. Returns (record, log info)."""
    gripper = gripper if gripper is not None else default_gripper()
    t0 = time.perf_counter()
    mesh = load_mesh(mesh_path)
    mesh, scale = rescale_to_range(mesh, cfg.scale_range,
                                   derive_seed(cfg.seed, obj_index, STAGE_SCALE))
    rho = mesh.aabb.diagonal / 2.0
    params = SampleParams(gamma=cfg.gamma,
                          seed=derive_seed(cfg.seed, obj_index, STAGE_GRASPS))
    result = generate_grasps(mesh, cfg.grasp_target, params, gripper,
                             blocks_per_axis=cfg.blocks_per_axis,
                             overlap_fraction=cfg.overlap)
    grasps = result.grasps
    pairs = []
    if len(grasps) >= 2:
        pair_idx = enumerate_pairs(grasps, gripper)
        pairs = label_pairs(grasps, pair_idx, rho, mu=cfg.mu, epsilon=cfg.epsilon)
        pairs = prune_and_bin(pairs, cfg.epsilon)
    record = ObjectRecord(
        mesh_path=str(mesh_path), scale=scale, rho=rho,
        params=GenerationParams(gamma=cfg.gamma, i=cfg.blocks_per_axis, overlap=cfg.overlap,
                                mu=cfg.mu, epsilon=cfg.epsilon, seed=cfg.seed,
                                gripper_width=gripper.max_width),
        grasps=grasps, pairs=pairs, generator_version=dataset_io.GENERATOR_VERSION)
    info = {"object": Path(mesh_path).stem, "grasps": len(grasps), "pairs": len(pairs),
            "grasp_shortfall": result.shortfall, "duplicates_removed": result.duplicates,
            "dropped_faces": mesh.report.dropped if mesh.report else 0,
            "seconds": round(time.perf_counter() - t0, 3)}
    return record, info


def run_generate(cfg: PipelineConfig, log=lambda **kw: None) -> list[ObjectRecord]:
    paths = cfg.mesh_paths()
    gripper = default_gripper()

    def work(idx: int) -> tuple[ObjectRecord, dict]:
        record, info = process_object(paths[idx], cfg, idx, gripper)
        return record, info

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(work, range(len(paths))))
    else:
        results = [work(i) for i in range(len(paths))]

    records = []
    for record, info in results:
        log(event="object_done", **info)
        records.append(record)
    dataset_io.write_dataset(records, cfg.output_dir, weights=cfg.weights)
    log(event="generate_done", objects=len(records),
        pairs=sum(len(r.pairs) for r in records))
    return records


def run_finalize(cfg: PipelineConfig, log=lambda **kw: None) -> float:
    records, _ = dataset_io.read_dataset(cfg.output_dir, validate=False)
    max_sigma = finalize_scores(records, cfg.weights)
    dataset_io.write_dataset(records, cfg.output_dir, weights=cfg.weights,
                             max_sigma=max_sigma)
    log(event="finalize_done", max_sigma=max_sigma, objects=len(records))
    return max_sigma


# ---------------------------------------------------------------------------
# Scenes

def _camera_to_dict(cam: CameraModel) -> dict:
    return {"width": cam.width, "height": cam.height, "fx": cam.fx, "fy": cam.fy,
            "cx": cam.cx, "cy": cam.cy, "pose": cam.pose.matrix.ravel().tolist()}


def _camera_from_dict(doc: dict) -> CameraModel:
    return CameraModel(width=int(doc["width"]), height=int(doc["height"]),
                       fx=float(doc["fx"]), fy=float(doc["fy"]),
                       cx=float(doc["cx"]), cy=float(doc["cy"]),
                       pose=Transform.from_matrix(np.asarray(doc["pose"]).reshape(4, 4)))


def scene_dir(cfg: PipelineConfig, object_id: str) -> Path:
    return Path(cfg.output_dir) / "scenes" / object_id


def run_render(cfg: PipelineConfig, log=lambda **kw: None) -> int:
    records, manifest = dataset_io.read_dataset(cfg.output_dir, validate=False)
    ids = [entry["id"] for entry in manifest["objects"]]
    total = 0
    for obj_index, (oid, record) in enumerate(zip(ids, records)):
        if not record.pairs:
            log(event="render_skipped", object=oid, reason="no pairs")
            continue
        t0 = time.perf_counter()
        mesh = scaled_copy(load_mesh(record.mesh_path), record.scale)
        out = scene_dir(cfg, oid)
        for s in range(cfg.scenes_per_object):
            seed = derive_seed(cfg.seed, obj_index, STAGE_SCENE, s)
            scene = build_scene(mesh, oid, s, seed, intrinsics=cfg.camera)
            write_ply(out / f"scene_{s:04d}.ply", scene.cloud)
            doc = {
                "schema_version": SCENE_SCHEMA_VERSION,
                "object": oid,
                "scene_index": s,
                "table_from_object": scene.table_from_object.matrix.ravel().tolist(),
                "canon_from_table": scene.canon_from_table.matrix.ravel().tolist(),
                "cameras": [_camera_to_dict(c) for c in scene.cameras],
                "fallback_pose": scene.fallback_pose,
                "cloud_ply": f"scene_{s:04d}.ply",
                "seed": seed,
            }
            dataset_io.atomic_write_text(out / f"scene_{s:04d}.json",
                                         dataset_io.dumps(doc) + "\n")
            total += 1
        log(event="object_rendered", object=oid, scenes=cfg.scenes_per_object,
            seconds=round(time.perf_counter() - t0, 3))
    log(event="render_done", scenes=total)
    return total


def load_scene(cfg: PipelineConfig, object_id: str, scene_index: int) -> SceneSample:
    base = scene_dir(cfg, object_id)
    path = base / f"scene_{scene_index:04d}.json"
    doc = json.loads(path.read_text())
    if doc.get("schema_version") != SCENE_SCHEMA_VERSION:
        raise ValidationError(f"{path}: unknown scene schema {doc.get('schema_version')!r}")
    cloud = read_ply(base / doc["cloud_ply"])
    cams = tuple(_camera_from_dict(c) for c in doc["cameras"])
    return SceneSample(
        object_id=object_id, scene_index=scene_index,
        table_from_object=Transform.from_matrix(np.asarray(doc["table_from_object"]).reshape(4, 4)),
        cameras=cams, cloud=cloud,
        canon_from_table=Transform.from_matrix(np.asarray(doc["canon_from_table"]).reshape(4, 4)),
        fallback_pose=bool(doc["fallback_pose"]))


def run_export(cfg: PipelineConfig, log=lambda **kw: None) -> int:
    records, manifest = dataset_io.read_dataset(cfg.output_dir, validate=False)
    ids = [entry["id"] for entry in manifest["objects"]]
    gripper = default_gripper()
    written = 0
    for obj_index, (oid, record) in enumerate(zip(ids, records)):
        scenes = []
        for s in range(cfg.scenes_per_object):
            if (scene_dir(cfg, oid) / f"scene_{s:04d}.json").exists():
                scenes.append(load_scene(cfg, oid, s))
        if not scenes:
            continue
        out = Path(cfg.output_dir) / "exports" / oid
        export_manifest = export_training_samples(
            scenes, {oid: record}, gripper, out, n_points=cfg.points_per_pair,
            thresholds=cfg.thresholds, seed=derive_seed(cfg.seed, obj_index, STAGE_EXPORT))
        written += len(export_manifest["records"])
        log(event="object_exported", object=oid, records=len(export_manifest["records"]),
            skipped=export_manifest["skipped_pairs"])
    log(event="export_done", records=written)
    return written


def run_stats(cfg: PipelineConfig, log=lambda **kw: None, n_bins: int = 20):
    records, _ = dataset_io.read_dataset(cfg.output_dir, validate=False)
    report = dataset_stats(records, n_bins=n_bins)
    out = Path(cfg.output_dir) / "stats"
    out.mkdir(parents=True, exist_ok=True)
    (out / "histograms.csv").write_text(report.to_csv())
    (out / "tertile_counts.csv").write_text(report.tertiles_csv())
    log(event="stats_done", pairs=report.n_pairs,
        metrics=sorted(report.histograms))
    return report


def run_validate(cfg: PipelineConfig, log=lambda **kw: None) -> int:
    records, manifest = dataset_io.read_dataset(cfg.output_dir, validate=True)
    if not any(record.pairs for record in records):
        raise EmptyDatasetError("dataset holds no pairs")
    log(event="validate_done", objects=len(records),
        pairs=sum(len(r.pairs) for r in records))
    return len(records)
