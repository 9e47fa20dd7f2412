"""Pair enumeration, force-closure pruning, tertile binning, and scoring."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .antipodal import Grasp, GripperModel, default_gripper
from .errors import EmptyDatasetError, ValidationError
from .geometry import obb_pairs_overlap
from .metrics import (DEFAULT_EPSILON, DEFAULT_MU, DEFAULT_WEIGHTS, DexterityLabel,
                      GRAVITY_DIRECTION, combined_score, label_contacts)

MAX_PAIRS_PER_OBJECT = 2001
MAX_PAIRS_PER_BIN = 667
BIN_NAMES = ("low", "mid", "high")


@dataclass
class GraspPair:
    """Unordered pair of grasp indices with its dexterity label."""

    a: int
    b: int
    label: DexterityLabel
    bin: str | None = None

    def __post_init__(self):
        if not self.a < self.b:
            raise ValidationError("grasp pair indices must satisfy a < b")


@dataclass
class GenerationParams:
    """Knobs recorded alongside each object for reproducibility."""

    gamma: float = 0.4
    i: int = 3
    overlap: float = 0.1
    mu: float = DEFAULT_MU
    epsilon: float = DEFAULT_EPSILON
    seed: int = 0
    gripper_width: float = 0.085


@dataclass
class ObjectRecord:
    """Everything generated for one mesh."""

    mesh_path: str
    scale: float
    rho: float
    params: GenerationParams
    grasps: list[Grasp]
    pairs: list[GraspPair]
    generator_version: str = ""

    def validate(self, weights=DEFAULT_WEIGHTS) -> None:
        if len(self.pairs) > MAX_PAIRS_PER_OBJECT:
            raise ValidationError(f"{len(self.pairs)} pairs exceed the {MAX_PAIRS_PER_OBJECT} cap")
        counts = {name: 0 for name in BIN_NAMES}
        for k, pair in enumerate(self.pairs):
            if pair.bin not in BIN_NAMES:
                raise ValidationError(f"pair {k}: unknown bin {pair.bin!r}")
            counts[pair.bin] += 1
            if not (0 <= pair.a < pair.b < len(self.grasps)):
                raise ValidationError(f"pair {k}: indices ({pair.a},{pair.b}) out of range")
            try:
                pair.label.validate(weights)
            except ValidationError as err:
                raise ValidationError(f"pair {k} ({pair.a},{pair.b}): {err}") from err
            if not pair.label.epsilon_ok:
                raise ValidationError(f"pair {k}: retained pair failed force closure")
            if pair.label.sigma_min ** 2 < self.params.epsilon - 1e-9:
                raise ValidationError(f"pair {k}: sigma_min inconsistent with epsilon")
        for name, count in counts.items():
            if count > MAX_PAIRS_PER_BIN:
                raise ValidationError(f"bin {name} holds {count} > {MAX_PAIRS_PER_BIN} pairs")
        for k, grasp in enumerate(self.grasps):
            try:
                grasp.validate(self.params.gripper_width)
            except ValidationError as err:
                raise ValidationError(f"grasp {k}: {err}") from err


# ---------------------------------------------------------------------------

def enumerate_pairs(grasps: list[Grasp], gripper: GripperModel | None = None) -> list[tuple[int, int]]:
    """All unordered index pairs whose two posed gripper bodies do not collide."""
    if len(grasps) < 2:
        raise ValueError("need at least 2 grasps to form pairs")
    gripper = gripper if gripper is not None else default_gripper()
    boxes = [[box.posed(g.pose) for box in gripper.body] for g in grasps]
    origins = np.array([g.pose.translation for g in grasps])
    # Bounding-sphere reach of the posed body around the grasp origin.
    reach = max(np.linalg.norm(box.center) + box.circumradius for box in gripper.body)

    idx = np.array(list(combinations(range(len(grasps)), 2)), dtype=int)
    dists = np.linalg.norm(origins[idx[:, 0]] - origins[idx[:, 1]], axis=1)
    near = idx[dists <= 2.0 * reach]
    colliding = set()
    if len(near):
        centers = np.array([[b.center for b in body] for body in boxes])
        rots = np.array([[b.rotation for b in body] for body in boxes])
        halves = [box.half_extents for box in gripper.body]
        overlap_any = np.zeros(len(near), dtype=bool)
        for i in range(len(gripper.body)):
            for j in range(len(gripper.body)):
                hit = obb_pairs_overlap(centers[near[:, 0], i], rots[near[:, 0], i], halves[i],
                                        centers[near[:, 1], j], rots[near[:, 1], j], halves[j])
                overlap_any |= hit
        colliding = {tuple(pair) for pair in near[overlap_any]}
    return [tuple(pair) for pair in idx if tuple(pair) not in colliding]


def label_pairs(grasps: list[Grasp], pair_indices: list[tuple[int, int]], rho: float,
                mu: float = DEFAULT_MU, gravity=GRAVITY_DIRECTION,
                epsilon: float = DEFAULT_EPSILON) -> list[GraspPair]:
    """Batch-label pairs; cone axes are the inward contact normals."""
    if not pair_indices:
        return []
    points = np.empty((len(pair_indices), 4, 3))
    axes = np.empty((len(pair_indices), 4, 3))
    for k, (a, b) in enumerate(pair_indices):
        points[k, :2] = grasps[a].contacts
        points[k, 2:] = grasps[b].contacts
        axes[k, :2] = -grasps[a].contact_normals
        axes[k, 2:] = -grasps[b].contact_normals
    labels = label_contacts(points, axes, rho, mu, gravity, epsilon)
    return [GraspPair(a, b, label) for (a, b), label in zip(pair_indices, labels)]


def prune_and_bin(pairs: list[GraspPair], epsilon: float = DEFAULT_EPSILON,
                  per_bin_cap: int = MAX_PAIRS_PER_BIN) -> list[GraspPair]:
    """Force-closure prune, then omega-tertile split keeping the best of each.

    Survivors are sorted by omega ascending (stable, so equal-omega pairs
    keep input order) and split into three contiguous parts whose sizes
    differ by at most one, earlier parts absorbing remainders. Each part
    keeps its per_bin_cap smallest-omega pairs, tagged low/mid/high. The
    epsilon argument documents the threshold the epsilon_ok flags were
    computed with; pruning itself drops every pair whose flag is false.
    """
    survivors = [p for p in pairs if p.label.epsilon_ok]
    survivors.sort(key=lambda p: p.label.omega)
    n = len(survivors)
    base, rem = divmod(n, 3)
    sizes = [base + (1 if k < rem else 0) for k in range(3)]
    out: list[GraspPair] = []
    start = 0
    for name, size in zip(BIN_NAMES, sizes):
        part = survivors[start:start + size]
        start += size
        for pair in part[:per_bin_cap]:
            pair.bin = name
            out.append(pair)
    return out


def finalize_scores(records: list[ObjectRecord], weights=DEFAULT_WEIGHTS) -> float:
    """Dataset-wide max-sigma pass filling q_dex and q_score on every pair.

    Returns the global max sigma. Idempotent: rerunning rewrites the same
    values because sigma_min never changes.
    """
    sigmas = [pair.label.sigma_min for rec in records for pair in rec.pairs]
    if not sigmas:
        raise EmptyDatasetError("no pairs to finalize")
    max_sigma = max(sigmas)
    if max_sigma <= 0:
        raise EmptyDatasetError("all sigma_min values are zero")
    for rec in records:
        for pair in rec.pairs:
            lab = pair.label
            lab.q_dex = lab.sigma_min / max_sigma
            lab.q_score = combined_score(lab.q_for, lab.q_dex, lab.q_tor, weights)
    return max_sigma


# ---------------------------------------------------------------------------

@dataclass
class StatsReport:
    """Histograms over [0,1] for each score plus tertile-bin counts."""

    edges: np.ndarray
    histograms: dict[str, np.ndarray]
    bin_counts: dict[str, int]
    n_pairs: int

    def to_csv(self) -> str:
        lines = ["metric,bin_lo,bin_hi,count"]
        for metric in sorted(self.histograms):
            counts = self.histograms[metric]
            for k, count in enumerate(counts):
                lines.append(f"{metric},{self.edges[k]:.6f},{self.edges[k + 1]:.6f},{int(count)}")
        return "\n".join(lines) + "\n"

    def tertiles_csv(self) -> str:
        lines = ["bin,count"]
        for name in BIN_NAMES:
            lines.append(f"{name},{self.bin_counts[name]}")
        return "\n".join(lines) + "\n"


def dataset_stats(records: list[ObjectRecord], n_bins: int = 20) -> StatsReport:
    """Score histograms for plotting; metrics not yet finalized are skipped."""
    pairs = [pair for rec in records for pair in rec.pairs]
    if not pairs:
        raise EmptyDatasetError("no pairs to summarize")
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    values = {
        "q_for": [p.label.q_for for p in pairs],
        "q_tor": [p.label.q_tor for p in pairs],
        "q_dex": [p.label.q_dex for p in pairs if p.label.q_dex is not None],
        "q_score": [p.label.q_score for p in pairs if p.label.q_score is not None],
    }
    histograms = {}
    for metric, vals in values.items():
        if vals:
            histograms[metric], _ = np.histogram(np.clip(vals, 0.0, 1.0), bins=edges)
    bin_counts = {name: sum(1 for p in pairs if p.bin == name) for name in BIN_NAMES}
    return StatsReport(edges, histograms, bin_counts, len(pairs))
