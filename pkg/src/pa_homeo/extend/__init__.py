"""境界写像の同相拡張と上界の検証"""

from .affine import affine_corner_extension
from .bench import bench_corpus, random_star_boundary, run_bench
from .boundary import BoundaryData
from .componentwise import extend_componentwise
from .degenerate import extend_degenerate, l1_deviation
from .fibers import fiber_extension
from .hp import extend_hp, hp_ratio
from .io import parse_boundary_text, read_boundary, write_boundary, write_report_csv
from .report import RATIO_BOUND, REPORT_COLUMNS, Extension, ExtensionReport
from .widths import WidthProfile, straight_width_integral, width_integral, width_profile

__all__ = [
    "RATIO_BOUND",
    "REPORT_COLUMNS",
    "BoundaryData",
    "Extension",
    "ExtensionReport",
    "WidthProfile",
    "affine_corner_extension",
    "bench_corpus",
    "extend_componentwise",
    "extend_degenerate",
    "extend_hp",
    "fiber_extension",
    "hp_ratio",
    "l1_deviation",
    "parse_boundary_text",
    "random_star_boundary",
    "read_boundary",
    "run_bench",
    "straight_width_integral",
    "width_integral",
    "width_profile",
    "write_boundary",
    "write_report_csv",
]
