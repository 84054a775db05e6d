"""解析的テスト写像カタログと測度オラクル"""

from .catalogue import CATALOGUE, TestMap, describe_catalogue, make_catalogue_map, square_polygon
from .measures import MeasureReport, Rect, density_ratio, density_ratios, measure_query, measure_report, measure_union
from .onedbv import Jump1D, OneDBV, line_variation, restrict_to_polyline

__all__ = [
    "CATALOGUE",
    "Jump1D",
    "MeasureReport",
    "OneDBV",
    "Rect",
    "TestMap",
    "density_ratio",
    "density_ratios",
    "describe_catalogue",
    "line_variation",
    "make_catalogue_map",
    "measure_query",
    "measure_report",
    "measure_union",
    "restrict_to_polyline",
    "square_polygon",
]
