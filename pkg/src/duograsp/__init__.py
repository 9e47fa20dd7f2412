"""Dual-arm parallel-jaw grasp pair dataset generation.

Batch pipeline for large object meshes: block antipodal sampling of
collision-free grasps, grasp-matrix dexterity labeling, tertile pruning,
synthetic depth-camera scene rendering, and training-sample export.
"""

__version__ = "0.1.0"

from .antipodal import (Block, GenerateResult, Grasp, GripperModel, SampleParams,
                        block_decomposition, default_gripper, generate_grasps,
                        grasp_pose_from_contacts, sample_antipodal_in_block)
from .geometry import Aabb, OrientedBox, Transform
from .mesh import (StablePoseResult, TriangleMesh, area_weighted_surface_sample, collides,
                   point_inside, ray_intersections, rescale_to_range, stable_pose)
from .meshio import load_mesh
from .metrics import (ContactSet, DexterityLabel, GraspMatrix, build_grasp_matrix,
                      combined_score, force_closure_feasible, force_ellipsoid_angle,
                      label_pair, min_singular_value, stability_omega)
from .pairs import (GenerationParams, GraspPair, ObjectRecord, StatsReport, dataset_stats,
                    enumerate_pairs, finalize_scores, label_pairs, prune_and_bin)

__all__ = [name for name in dir() if not name.startswith("_")]
