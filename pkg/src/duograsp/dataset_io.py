"""Versioned JSON dataset serialization.

One JSON document per object plus a manifest. Floats are written as
17-significant-digit decimals so a read/write round trip preserves exact
bit patterns; files are written atomically (temp file + rename) and key
order is fixed, so equal inputs produce byte-identical files.
"""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .antipodal import Grasp
from .errors import SchemaVersionMismatchError, ValidationError
from .geometry import Transform
from .metrics import DEFAULT_WEIGHTS, DexterityLabel
from .pairs import GenerationParams, GraspPair, ObjectRecord

SCHEMA_VERSION = "da2gen-1"
MANIFEST_SCHEMA_VERSION = "da2gen-manifest-1"
GENERATOR_VERSION = f"duograsp {__version__}"


# ---------------------------------------------------------------------------
# Deterministic JSON emission with lossless floats

def _emit(value, out: list[str]) -> None:
    if value is None:
        out.append("null")
    elif isinstance(value, bool):
        out.append("true" if value else "false")
    elif isinstance(value, (int, np.integer)):
        out.append(str(int(value)))
    elif isinstance(value, (float, np.floating)):
        v = float(value)
        if not np.isfinite(v):
            raise ValidationError("cannot serialize non-finite float")
        out.append(format(v, ".17g"))
    elif isinstance(value, str):
        out.append(json.dumps(value))
    elif isinstance(value, dict):
        out.append("{")
        for k, (key, item) in enumerate(value.items()):
            if k:
                out.append(",")
            out.append(json.dumps(key))
            out.append(":")
            _emit(item, out)
        out.append("}")
    elif isinstance(value, (list, tuple, np.ndarray)):
        out.append("[")
        seq = value.tolist() if isinstance(value, np.ndarray) else value
        for k, item in enumerate(seq):
            if k:
                out.append(",")
            _emit(item, out)
        out.append("]")
    else:
        raise TypeError(f"cannot serialize {type(value)!r}")


def dumps(value) -> str:
    out: list[str] = []
    _emit(value, out)
    return "".join(out)


def atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# Object records

def record_to_dict(record: ObjectRecord) -> dict:
    p = record.params
    return {
        "schema_version": SCHEMA_VERSION,
        "mesh": {"path": record.mesh_path, "scale": record.scale, "rho": record.rho},
        "params": {"gamma": p.gamma, "i": p.i, "overlap": p.overlap, "mu": p.mu,
                   "epsilon": p.epsilon, "seed": p.seed, "gripper_width": p.gripper_width},
        "grasps": [{
            "pose": g.pose.matrix.ravel(),
            "contacts": [g.contacts[0], g.contacts[1]],
            "normals": [g.contact_normals[0], g.contact_normals[1]],
        } for g in record.grasps],
        "pairs": [{
            "a": pair.a, "b": pair.b, "bin": pair.bin,
            "metrics": {"omega": pair.label.omega, "sigma_min": pair.label.sigma_min,
                        "theta_g": pair.label.theta_g, "q_for": pair.label.q_for,
                        "q_dex": pair.label.q_dex, "q_tor": pair.label.q_tor,
                        "q_score": pair.label.q_score},
        } for pair in record.pairs],
    }


def record_from_dict(doc: dict, generator_version: str = "") -> ObjectRecord:
    if not isinstance(doc, dict) or "schema_version" not in doc:
        raise ValidationError("object document lacks schema_version")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise SchemaVersionMismatchError(
            f"expected {SCHEMA_VERSION!r}, found {doc['schema_version']!r}")
    try:
        mesh = doc["mesh"]
        pdoc = doc["params"]
        params = GenerationParams(gamma=float(pdoc["gamma"]), i=int(pdoc["i"]),
                                  overlap=float(pdoc["overlap"]), mu=float(pdoc["mu"]),
                                  epsilon=float(pdoc["epsilon"]), seed=int(pdoc["seed"]),
                                  gripper_width=float(pdoc["gripper_width"]))
        grasps = []
        for g in doc["grasps"]:
            pose = Transform.from_matrix(np.asarray(g["pose"], dtype=float).reshape(4, 4))
            grasps.append(Grasp(pose, np.asarray(g["contacts"], dtype=float),
                                np.asarray(g["normals"], dtype=float)))
        pairs = []
        for item in doc["pairs"]:
            m = item["metrics"]
            label = DexterityLabel(
                omega=float(m["omega"]), sigma_min=float(m["sigma_min"]),
                theta_g=float(m["theta_g"]), epsilon_ok=True,
                q_for=float(m["q_for"]), q_tor=float(m["q_tor"]),
                q_dex=None if m["q_dex"] is None else float(m["q_dex"]),
                q_score=None if m["q_score"] is None else float(m["q_score"]))
            pairs.append(GraspPair(int(item["a"]), int(item["b"]), label, bin=item["bin"]))
    except (KeyError, TypeError, IndexError) as err:
        raise ValidationError(f"malformed object document: {err!r}") from err
    return ObjectRecord(mesh_path=str(mesh["path"]), scale=float(mesh["scale"]),
                        rho=float(mesh["rho"]), params=params, grasps=grasps,
                        pairs=pairs, generator_version=generator_version)


def object_id_for(record: ObjectRecord, taken: set[str]) -> str:
    stem = Path(record.mesh_path).stem or "object"
    oid = stem
    k = 1
    while oid in taken:
        oid = f"{stem}_{k}"
        k += 1
    taken.add(oid)
    return oid


def write_dataset(records: list[ObjectRecord], out_dir, weights=DEFAULT_WEIGHTS,
                  max_sigma: float | None = None) -> dict:
    """Write per-object JSON files plus the manifest; returns the manifest."""
    out_dir = Path(out_dir)
    taken: set[str] = set()
    objects = []
    for record in records:
        oid = object_id_for(record, taken)
        rel = f"objects/{oid}.json"
        atomic_write_text(out_dir / rel, dumps(record_to_dict(record)) + "\n")
        objects.append({"id": oid, "file": rel, "pairs": len(record.pairs),
                        "grasps": len(record.grasps)})
    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "generator_version": GENERATOR_VERSION,
        "weights": list(weights),
        "max_sigma": max_sigma,
        "objects": objects,
    }
    atomic_write_text(out_dir / "manifest.json", dumps(manifest) + "\n")
    return manifest


def read_manifest(out_dir) -> dict:
    path = Path(out_dir) / "manifest.json"
    if not path.exists():
        raise FileNotFoundError(str(path))
    manifest = json.loads(path.read_text())
    if manifest.get("schema_version") != MANIFEST_SCHEMA_VERSION:
        raise SchemaVersionMismatchError(
            f"manifest: expected {MANIFEST_SCHEMA_VERSION!r}, "
            f"found {manifest.get('schema_version')!r}")
    return manifest


def read_dataset(out_dir, validate: bool = True) -> tuple[list[ObjectRecord], dict]:
    """Load a dataset directory, optionally validating every invariant."""
    out_dir = Path(out_dir)
    manifest = read_manifest(out_dir)
    weights = tuple(manifest.get("weights", DEFAULT_WEIGHTS))
    records = []
    for entry in manifest["objects"]:
        doc = json.loads((out_dir / entry["file"]).read_text())
        try:
            record = record_from_dict(doc, manifest["generator_version"])
            if validate:
                record.validate(weights)
        except (ValidationError, SchemaVersionMismatchError) as err:
            raise type(err)(f"{entry['file']}: {err}") from err
        records.append(record)
    return records, manifest
