"""グリッド上の幾何的代表と、非直線グリッドから単射な区分線形写像までの構成"""

from .arrival import (
    ArrivalGrid,
    CrowdedArrivalCell,
    PLApprox,
    PLCurve,
    build_injective_pl_approx,
    choose_arrival_grid,
    line_crossings,
    refine_arrival,
)
from .paths import GeneralizedSegment, RepetitionCheck, rect_sides, repetition_bound
from .providers import (
    PROVIDERS,
    HApprox,
    certify_h,
    family_certificate,
    generic_provider,
    identity_blend_provider,
    provider_for,
    rep_provider,
)
from .rectangles import SmallRectangle, rect_side_variations, select_small_tv_rectangle
from .representative import TAU_REP, ArcRep, CurveRep, GeomRep, build_geom_rep, split_curve, write_geom_rep
from .spiral import SpiralReplacement, spiral_replacement
from .transfer import ArcPath, Bypass, Transfer, transfer_nonstraight_to_straight

__all__ = [
    "PROVIDERS",
    "TAU_REP",
    "ArcPath",
    "ArcRep",
    "ArrivalGrid",
    "Bypass",
    "CrowdedArrivalCell",
    "CurveRep",
    "GeneralizedSegment",
    "GeomRep",
    "HApprox",
    "PLApprox",
    "PLCurve",
    "RepetitionCheck",
    "SmallRectangle",
    "SpiralReplacement",
    "Transfer",
    "build_geom_rep",
    "build_injective_pl_approx",
    "certify_h",
    "choose_arrival_grid",
    "family_certificate",
    "generic_provider",
    "identity_blend_provider",
    "line_crossings",
    "provider_for",
    "rect_side_variations",
    "refine_arrival",
    "rect_sides",
    "rep_provider",
    "repetition_bound",
    "select_small_tv_rectangle",
    "spiral_replacement",
    "split_curve",
    "transfer_nonstraight_to_straight",
    "write_geom_rep",
]
