"""平面幾何カーネル"""

from .geodesic import GeodesicPath, GeodesicSolver, geodesic_distance
from .pa_map import PAHomeo, certify_homeomorphism, pa_directional_variation, pa_total_variation
from .primitives import (
    Intersection,
    Point2,
    Polyline,
    Segment,
    SimplePolygon,
    is_injective_polyline,
    segment_intersection,
)
from .triangulation import Triangulation, triangulate_simple_polygon

__all__ = [
    "GeodesicPath",
    "GeodesicSolver",
    "Intersection",
    "PAHomeo",
    "Point2",
    "Polyline",
    "Segment",
    "SimplePolygon",
    "Triangulation",
    "certify_homeomorphism",
    "geodesic_distance",
    "is_injective_polyline",
    "pa_directional_variation",
    "pa_total_variation",
    "segment_intersection",
    "triangulate_simple_polygon",
]
