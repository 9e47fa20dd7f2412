"""Grasp-matrix dexterity measures for four-contact dual-arm grasps.

A grasp pair is reduced to four point contacts. The 6x12 grasp matrix G maps
stacked contact forces to the net object wrench; positions are normalized by
a radius rho so force and torque rows are commensurate. Three measures are
derived from G:

  omega      stability: ||G c||_2 for the stacked friction-cone axes c.
             Small omega means contact forces can stay deep in the cones.
  sigma_min  smallest singular value of G, the distance from grasp
             singularity; larger is more dexterous.
  theta_g    angle between the force ellipsoid's major axis (eigenvector of
             G G^T for its smallest eigenvalue) and the gravity wrench.

Normalized scores: q_for = clamp(1 - omega/4, 0, 1), q_tor = cos(theta_g),
q_dex = sigma_min / (dataset-wide max sigma_min), combined into
q_score = alpha*q_for + beta*q_dex + gamma_w*q_tor.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BadWeightsError, ValidationError

DEFAULT_MU = 0.4
DEFAULT_EPSILON = 1e-3
DEFAULT_WEIGHTS = (0.4, 0.5, 0.1)
GRAVITY_DIRECTION = np.array([0.0, 0.0, -1.0])
_EIG_TIE_TOL = 1e-12


@dataclass(frozen=True)
class ContactSet:
    """Four contact points with inward friction-cone axes.

    Point order is (left_1, left_2, right_1, right_2). rho is the
    normalization radius dividing positions inside the grasp matrix.
    """

    points: np.ndarray      # (4,3) object frame, meters
    cone_axes: np.ndarray   # (4,3) inward unit vectors
    mu: float = DEFAULT_MU
    rho: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "points", np.asarray(self.points, dtype=float).reshape(4, 3))
        object.__setattr__(self, "cone_axes", np.asarray(self.cone_axes, dtype=float).reshape(4, 3))
        if self.rho <= 0:
            raise ValidationError("rho must be positive")
        norms = np.linalg.norm(self.cone_axes, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-9:
            raise ValidationError("cone axes must be unit length")


@dataclass(frozen=True)
class GraspMatrix:
    """6x12 grasp matrix [B_1 B_2 B_3 B_4], B_i = [I_3; skew(p_i/rho)^T]."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float).reshape(6, 12)
        object.__setattr__(self, "matrix", m)
        if not np.all(np.isfinite(m)):
            raise ValidationError("grasp matrix has non-finite entries")

    @property
    def gram(self) -> np.ndarray:
        return self.matrix @ self.matrix.T


@dataclass
class DexterityLabel:
    """Per-pair dexterity values and their normalized scores.

    q_dex and q_score stay None until the dataset-wide max-sigma pass runs.
    """

    omega: float
    sigma_min: float
    theta_g: float
    epsilon_ok: bool
    q_for: float
    q_tor: float
    q_dex: float | None = None
    q_score: float | None = None
    degenerate_ellipsoid: bool = False

    def validate(self, weights=DEFAULT_WEIGHTS) -> None:
        if self.omega < 0 or self.sigma_min < 0:
            raise ValidationError("omega and sigma_min must be nonnegative")
        if not (0.0 <= self.theta_g <= math.pi / 2 + 1e-12):
            raise ValidationError("theta_g out of [0, pi/2]")
        if self.q_for != _q_for(self.omega):
            raise ValidationError("q_for != clamp(1 - omega/4, 0, 1)")
        if self.q_tor != math.cos(self.theta_g):
            raise ValidationError("q_tor != cos(theta_g)")
        if self.q_score is not None:
            if self.q_dex is None:
                raise ValidationError("q_score present without q_dex")
            a, b, g = weights
            expected = a * self.q_for + b * self.q_dex + g * self.q_tor
            if abs(self.q_score - expected) > 1e-12:
                raise ValidationError("q_score != weighted sum of q_for/q_dex/q_tor")


def _q_for(omega: float) -> float:
    return min(1.0, max(0.0, 1.0 - omega / 4.0))


# ---------------------------------------------------------------------------
# Batched kernels. Single-pair operations below are thin wrappers.

def grasp_matrices(points: np.ndarray, rho) -> np.ndarray:
    """Grasp matrices for (n,4,3) contact points -> (n,6,12)."""
    points = np.asarray(points, dtype=float)
    squeeze = points.ndim == 2
    pts = points.reshape(-1, 4, 3)
    rho_arr = np.broadcast_to(np.asarray(rho, dtype=float), (len(pts),))
    p = pts / rho_arr[:, None, None]
    n = len(p)
    g = np.zeros((n, 6, 12))
    for i in range(4):
        cols = slice(3 * i, 3 * i + 3)
        g[:, 0:3, cols] = np.eye(3)
        x, y, z = p[:, i, 0], p[:, i, 1], p[:, i, 2]
        # skew(p)^T rows
        g[:, 3, cols.start + 1] = z
        g[:, 3, cols.start + 2] = -y
        g[:, 4, cols.start + 0] = -z
        g[:, 4, cols.start + 2] = x
        g[:, 5, cols.start + 0] = y
        g[:, 5, cols.start + 1] = -x
    return g[0] if squeeze else g


def omega_values(g: np.ndarray, cone_axes: np.ndarray) -> np.ndarray:
    """||G c||_2 for stacked matrices (n,6,12) and axes (n,4,3)."""
    c = np.asarray(cone_axes, dtype=float).reshape(len(g), 12)
    return np.linalg.norm(np.einsum("nij,nj->ni", g, c), axis=1)


def min_eig_gram(g: np.ndarray) -> np.ndarray:
    gram = np.einsum("nij,nkj->nik", g, g)
    return np.linalg.eigvalsh(gram)[:, 0]


def min_singular_values(g: np.ndarray) -> np.ndarray:
    return np.linalg.svd(g, compute_uv=False)[:, -1]


def _major_axis(gram: np.ndarray) -> tuple[np.ndarray, bool]:
    """Unit eigenvector for the smallest eigenvalue of one 6x6 Gram matrix.

    Eigenvalue ties within 1e-12 are broken deterministically by picking, in
    the tied eigenspace, the direction that maximizes |v_1|, then |v_2|, and
    so on: the lexicographically largest absolute component vector. Returns
    (vector, isotropic_flag); the flag is set when all six eigenvalues tie.
    """
    vals, vecs = np.linalg.eigh(gram)
    tied = np.nonzero(vals - vals[0] <= _EIG_TIE_TOL)[0]
    if len(tied) == 6:
        return vecs[:, 0], True
    if len(tied) == 1:
        return vecs[:, 0], False
    basis = vecs[:, tied]  # orthonormal columns spanning the tied eigenspace
    for k in range(6):
        proj = basis @ basis[k, :]
        norm = np.linalg.norm(proj)
        if norm > 1e-9:
            return proj / norm, False
    return vecs[:, 0], False


def ellipsoid_angles(g: np.ndarray, gravity_wrench: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """theta_g per stacked grasp matrix, with isotropic-degeneracy flags.

    theta_g = arccos(|v_major . g_hat|) in [0, pi/2]; a fully isotropic
    ellipsoid (all eigenvalues tied) yields pi/2 with its flag set.
    """
    gw = np.asarray(gravity_wrench, dtype=float).reshape(6)
    nrm = np.linalg.norm(gw)
    if nrm < 1e-15:
        raise ValueError("gravity wrench must be nonzero")
    ghat = gw / nrm
    gram = np.einsum("nij,nkj->nik", g, g)
    thetas = np.empty(len(g))
    degen = np.zeros(len(g), dtype=bool)
    for k in range(len(g)):
        v, iso = _major_axis(gram[k])
        if iso:
            thetas[k] = math.pi / 2
            degen[k] = True
        else:
            thetas[k] = math.acos(min(1.0, abs(float(np.dot(v, ghat)))))
    return thetas, degen


# ---------------------------------------------------------------------------
# Spec-level single operations

def build_grasp_matrix(contacts: ContactSet) -> GraspMatrix:
    """Assemble the 6x12 grasp matrix with positions divided by rho."""
    return GraspMatrix(grasp_matrices(contacts.points, contacts.rho))


def stability_omega(g: GraspMatrix, contacts: ContactSet) -> float:
    """omega = ||G c||_2 over the stacked 12-vector of cone axes."""
    return float(np.linalg.norm(g.matrix @ contacts.cone_axes.reshape(12)))


def force_closure_feasible(g: GraspMatrix, epsilon: float) -> bool:
    """Relaxed force closure: min eigenvalue of G G^T >= epsilon."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return bool(np.linalg.eigvalsh(g.gram)[0] >= epsilon)


def min_singular_value(g: GraspMatrix) -> float:
    """Smallest singular value of G."""
    return float(np.linalg.svd(g.matrix, compute_uv=False)[-1])


def force_ellipsoid_angle(g: GraspMatrix, gravity_wrench) -> tuple[float, bool]:
    """Angle between the force-ellipsoid major axis and the gravity wrench.

    Returns (theta_g, degenerate). The sign of the eigenvector is irrelevant
    because the absolute dot product is used.
    """
    thetas, degen = ellipsoid_angles(g.matrix[None], gravity_wrench)
    return float(thetas[0]), bool(degen[0])


def combined_score(q_for: float, q_dex: float, q_tor: float,
                   weights=DEFAULT_WEIGHTS) -> float:
    """Weighted combination of the three normalized measures."""
    a, b, gw = (float(w) for w in weights)
    if a < 0 or b < 0 or gw < 0 or abs(a + b + gw - 1.0) > 1e-12:
        raise BadWeightsError(f"weights {weights} must be nonnegative and sum to 1")
    return a * q_for + b * q_dex + gw * q_tor


def label_contacts(points: np.ndarray, cone_axes: np.ndarray, rho: float,
                   mu: float = DEFAULT_MU, gravity=GRAVITY_DIRECTION,
                   epsilon: float = DEFAULT_EPSILON) -> list[DexterityLabel]:
    """Label many 4-contact sets at once; q_dex/q_score stay unset."""
    points = np.asarray(points, dtype=float).reshape(-1, 4, 3)
    cone_axes = np.asarray(cone_axes, dtype=float).reshape(-1, 4, 3)
    g = grasp_matrices(points, rho)
    omegas = omega_values(g, cone_axes)
    sigmas = min_singular_values(g)
    mineigs = min_eig_gram(g)
    gravity = np.asarray(gravity, dtype=float).reshape(3)
    wrench = np.concatenate([gravity, np.zeros(3)])
    thetas, degen = ellipsoid_angles(g, wrench)
    labels = []
    for k in range(len(points)):
        theta = float(thetas[k])
        labels.append(DexterityLabel(
            omega=float(omegas[k]),
            sigma_min=float(sigmas[k]),
            theta_g=theta,
            epsilon_ok=bool(mineigs[k] >= epsilon),
            q_for=_q_for(float(omegas[k])),
            q_tor=math.cos(theta),
            degenerate_ellipsoid=bool(degen[k]),
        ))
    return labels


def label_pair(grasp_a, grasp_b, rho: float, mu: float = DEFAULT_MU,
               gravity=GRAVITY_DIRECTION, epsilon: float = DEFAULT_EPSILON) -> DexterityLabel:
    """Label one grasp pair; cone axes are the inward contact normals."""
    points = np.vstack([grasp_a.contacts, grasp_b.contacts])
    axes = -np.vstack([grasp_a.contact_normals, grasp_b.contact_normals])
    return label_contacts(points[None], axes[None], rho, mu, gravity, epsilon)[0]
