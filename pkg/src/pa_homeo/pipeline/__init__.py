"""BV 写像を区分アフィン同相写像で近似する段階的パイプライン"""

from .assemble import Assembly, assemble_homeo, conformize, extend_flat
from .classify import Category, SquareClassification, classify_dyadic, polar_defect
from .isolate import isolate_singular_support, jump_cover
from .ledger import Check, Ledger, first_failure, require
from .metrics import RowMetrics, crack_opening, l1_distance, measure_metrics, sample_injectivity
from .perturb import EdgeCheck, PerturbedMesh, affine_defect_variation, perturb_vertices
from .sequence import COLUMNS, ConvergenceReport, ConvergenceRow, RowRun, run_row, run_sequence
from .skeleton import SkeletonMap, build_boundary_map, crossing_separation, skeleton_sigma

__all__ = [
    "COLUMNS",
    "Assembly",
    "Category",
    "Check",
    "ConvergenceReport",
    "ConvergenceRow",
    "EdgeCheck",
    "Ledger",
    "PerturbedMesh",
    "RowMetrics",
    "RowRun",
    "SkeletonMap",
    "SquareClassification",
    "affine_defect_variation",
    "assemble_homeo",
    "build_boundary_map",
    "classify_dyadic",
    "conformize",
    "crack_opening",
    "crossing_separation",
    "extend_flat",
    "first_failure",
    "isolate_singular_support",
    "jump_cover",
    "l1_distance",
    "measure_metrics",
    "perturb_vertices",
    "polar_defect",
    "require",
    "run_row",
    "run_sequence",
    "sample_injectivity",
    "skeleton_sigma",
]
