"""グリッドの生成・検証・許容性判定"""

from .admissibility import (
    DEFAULT_RADII,
    AdmissibilityReport,
    DensityEvidence,
    check_admissible,
    limits_along,
    sample_admissible_straight_grid,
)
from .grids import GridValidation, NonStraightGrid, StraightGrid, generate_straight_grid, validate_nonstraight_grid
from .io import parse_grid_text, read_grid, write_grid

__all__ = [
    "DEFAULT_RADII",
    "AdmissibilityReport",
    "DensityEvidence",
    "GridValidation",
    "NonStraightGrid",
    "StraightGrid",
    "check_admissible",
    "generate_straight_grid",
    "limits_along",
    "parse_grid_text",
    "read_grid",
    "sample_admissible_straight_grid",
    "validate_nonstraight_grid",
    "write_grid",
]
