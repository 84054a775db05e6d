"""
平面幾何カーネルのテスト
"""

import numpy as np
import pytest

from pa_homeo.core.errors import GeometryError, ValidationError
from pa_homeo.geom.geodesic import geodesic_distance, visibility_geodesic_distance
from pa_homeo.geom.io import mesh_svg, parse_snapshot, snapshot_lines
from pa_homeo.geom.pa_map import PAHomeo, certify_homeomorphism, pa_directional_variation, pa_total_variation
from pa_homeo.geom.polygon import chebyshev_center, clip_convex, is_convex, polygon_area
from pa_homeo.geom import predicates
from pa_homeo.geom.predicates import orient_sign, set_tau_geom
from pa_homeo.geom.primitives import (
    Polyline,
    Segment,
    SimplePolygon,
    as_point,
    is_injective_polyline,
    segment_intersection,
)
from pa_homeo.geom.triangulation import Triangulation, boundary_loops, triangulate_simple_polygon

L_SHAPE = [(0.0, 0.0), (2.0, 0.0), (2.0, 1.0), (1.0, 1.0), (1.0, 2.0), (0.0, 2.0)]


def _random_star_polygon(rng, m):
    """原点から見た星形の単純多角形 (反時計回り)"""
    # 隣り合う角の差は π より小さい
    angles = (np.arange(m) + rng.uniform(0.1, 0.9, size=m)) * (2.0 * np.pi / m)
    radii = rng.uniform(0.3, 1.0, size=m)
    return np.column_stack([radii * np.cos(angles), radii * np.sin(angles)])


def _points_inside_star(rng, verts, count):
    k = rng.integers(0, len(verts), size=count)
    w = rng.dirichlet(np.ones(3), size=count)
    return w[:, 1:2] * verts[k] + w[:, 2:3] * verts[(k + 1) % len(verts)]


def _segment(a, b):
    return Segment(as_point(a), as_point(b))


class TestPredicates:
    """向き判定と線分交差"""

    def test_orientation_signs(self):
        assert orient_sign((0, 0), (1, 0), (0, 1)) == 1
        assert orient_sign((0, 0), (0, 1), (1, 0)) == -1
        assert orient_sign((0, 0), (1, 1), (2, 2)) == 0

    def test_nearly_collinear_uses_exact_arithmetic(self):
        assert orient_sign((0.0, 0.0), (1.0, 1.0), (2.0, 2.0 + 1e-15)) == 1

    def test_tolerance_only_changes_the_fallback(self, monkeypatch):
        monkeypatch.setattr(predicates, "TAU_GEOM", predicates.TAU_GEOM)
        set_tau_geom(1.0)
        assert predicates.TAU_GEOM == 1.0
        assert orient_sign((0.0, 0.0), (1e-3, 0.0), (0.0, 1e-3)) == 1
        assert orient_sign((0, 0), (1, 1), (2, 2)) == 0
        with pytest.raises(ValueError):
            set_tau_geom(0.0)

    def test_crossing_diagonals(self):
        hit = segment_intersection(_segment((0, 0), (2, 2)), _segment((0, 2), (2, 0)))
        assert hit.kind == "point"
        assert tuple(hit.points[0]) == pytest.approx((1.0, 1.0))

    def test_collinear_overlap_is_a_segment(self):
        hit = segment_intersection(_segment((0, 0), (2, 0)), _segment((1, 0), (3, 0)))
        assert hit.kind == "segment"
        assert [tuple(p) for p in hit.points] == [(1.0, 0.0), (2.0, 0.0)]

    def test_intersection_is_symmetric(self):
        s1, s2 = _segment((0, 0), (1, 1)), _segment((1, 0), (0, 1))
        assert segment_intersection(s1, s2) == segment_intersection(s2, s1)

    def test_disjoint_segments(self):
        assert segment_intersection(_segment((0, 0), (1, 0)), _segment((0, 1), (1, 1))).is_empty

    def test_zero_length_segment_rejected(self):
        with pytest.raises(GeometryError):
            _segment((1, 1), (1, 1))


class TestPolylines:
    """折れ線と単純多角形"""

    def test_repeated_vertex_rejected(self):
        with pytest.raises(GeometryError):
            Polyline.from_points([(0, 0), (0, 0), (1, 0)])

    def test_length_and_arclength_points(self):
        line = Polyline.from_points([(0, 0), (3, 0), (3, 4)])
        assert line.length == pytest.approx(7.0)
        assert line.point_at(3.0 / 7.0) == pytest.approx([3.0, 0.0])
        assert line.parameter_of((3.0, 2.0)) == pytest.approx(5.0 / 7.0)

    def test_subpath_keeps_inner_vertices(self):
        line = Polyline.from_points([(0, 0), (1, 0), (1, 1)])
        part = line.subpath(0.25, 0.75)
        assert part.array().tolist() == [[0.5, 0.0], [1.0, 0.0], [1.0, 0.5]]

    def test_bowtie_is_not_injective(self):
        bowtie = Polyline.from_points([(0, 0), (1, 1), (1, 0), (0, 1)])
        ok, pair = is_injective_polyline(bowtie, closed=True)
        assert not ok
        assert pair is not None

    def test_square_loop_is_injective(self):
        loop = Polyline.from_points([(0, 0), (1, 0), (1, 1), (0, 1)])
        assert is_injective_polyline(loop, closed=True) == (True, None)

    def test_clockwise_polygon_rejected_unless_oriented(self):
        cw = [(0, 0), (0, 1), (1, 1), (1, 0)]
        with pytest.raises(GeometryError):
            SimplePolygon.from_points(cw)
        assert SimplePolygon.from_points(cw, orient=True).area == pytest.approx(1.0)


class TestPolygonTools:
    """クリッピングと核"""

    def test_clip_two_squares(self):
        a = np.array([[0, 0], [2, 0], [2, 2], [0, 2]], dtype=float)
        b = a + 1.0
        assert polygon_area(clip_convex(a, b)) == pytest.approx(1.0)

    def test_convexity(self):
        assert is_convex(np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float))
        assert not is_convex(np.array(L_SHAPE))

    def test_kernel_of_l_shape(self):
        center, radius = chebyshev_center(np.array(L_SHAPE))
        assert center is not None
        assert radius > 0
        assert np.all(center <= 1.0 + 1e-9)


class TestTriangulation:
    """制約付き三角形分割と測地距離"""

    def test_l_shape_is_covered(self):
        tri = triangulate_simple_polygon(SimplePolygon.from_points(L_SHAPE))
        assert tri.area == pytest.approx(3.0)
        assert np.all(tri.areas() > 0)
        assert len(boundary_loops(tri.triangles)) == 1

    def test_interior_points_are_inserted(self):
        square = SimplePolygon.from_points([(0, 0), (1, 0), (1, 1), (0, 1)])
        tri = triangulate_simple_polygon(square, [(0.5, 0.5), (0.25, 0.3)])
        assert tri.n_vertices == 6
        assert tri.boundary.tolist() == [True] * 4 + [False] * 2
        assert tri.area == pytest.approx(1.0)

    def test_geodesic_bends_at_reflex_corner(self):
        poly = SimplePolygon.from_points(L_SHAPE)
        path = geodesic_distance(poly, (1.8, 0.5), (0.5, 1.8))
        expected = 2.0 * np.sqrt(0.89)
        assert path.length == pytest.approx(expected)
        assert visibility_geodesic_distance(poly, (1.8, 0.5), (0.5, 1.8)) == pytest.approx(expected)
        assert any(np.allclose(p, (1.0, 1.0)) for p in path.points)

    def test_geodesic_is_straight_when_visible(self):
        poly = SimplePolygon.from_points(L_SHAPE)
        assert geodesic_distance(poly, (0.2, 0.2), (1.8, 0.8)).length == pytest.approx(np.hypot(1.6, 0.6))

    @pytest.mark.slow
    def test_funnel_matches_visibility_graph(self):
        rng = np.random.default_rng(2024)
        for _ in range(50):
            verts = _random_star_polygon(rng, int(rng.integers(5, 21)))
            poly = SimplePolygon.from_points(verts)
            a, b = _points_inside_star(rng, verts, 2)
            assert geodesic_distance(poly, a, b).length == pytest.approx(
                visibility_geodesic_distance(poly, a, b), abs=1e-9
            )


class TestPAHomeo:
    """区分アフィン写像の変動と単射性"""

    def test_identity_variation(self, identity_homeo):
        assert pa_total_variation(identity_homeo) == pytest.approx(4.0 * np.sqrt(2.0))
        assert pa_directional_variation(identity_homeo, (1.0, 0.0)) == pytest.approx(4.0)

    def test_shear_variation(self, unit_square_mesh):
        g = PAHomeo.from_function(unit_square_mesh, lambda p: np.column_stack([p[:, 0] + 0.5 * p[:, 1], p[:, 1]]))
        assert pa_total_variation(g) == pytest.approx(6.0)
        assert pa_total_variation(g, [0]) == pytest.approx(3.0)

    def test_non_unit_direction_rejected(self, identity_homeo):
        with pytest.raises(GeometryError):
            pa_directional_variation(identity_homeo, (1.0, 1.0))

    def test_identity_is_certified(self, identity_homeo):
        assert certify_homeomorphism(identity_homeo)

    def test_reflection_is_rejected(self, unit_square_mesh):
        g = PAHomeo.from_function(unit_square_mesh, lambda p: p * np.array([-1.0, 1.0]))
        cert = certify_homeomorphism(g)
        assert not cert
        assert "orient" in cert.reason

    def test_refine_keeps_the_map(self, unit_square_mesh):
        g = PAHomeo(unit_square_mesh, np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], dtype=float) * 0.5)
        fine = g.refine()
        pts = np.array([[0.1, -0.3], [-0.7, 0.2], [0.9, 0.9]])
        assert fine.domain.n_triangles == 8
        assert fine.evaluate(pts) == pytest.approx(g.evaluate(pts))

    def test_evaluate_outside_raises(self, identity_homeo):
        with pytest.raises(GeometryError):
            identity_homeo.evaluate(np.array([[2.0, 0.0]]))

    def test_stale_jacobians_rejected(self, unit_square_mesh):
        with pytest.raises(GeometryError):
            PAHomeo(unit_square_mesh, unit_square_mesh.vertices, np.zeros((2, 2, 2)))


class TestSnapshots:
    """テキスト表現と SVG"""

    def test_snapshot_restores_images(self, unit_square_mesh):
        g = PAHomeo(unit_square_mesh, unit_square_mesh.vertices * 0.75)
        back = parse_snapshot("\n".join(snapshot_lines(g)))
        assert isinstance(back, PAHomeo)
        assert back.images == pytest.approx(g.images)

    def test_snapshot_without_images_is_a_triangulation(self, unit_square_mesh):
        back = parse_snapshot("\n".join(snapshot_lines(unit_square_mesh)))
        assert isinstance(back, Triangulation)

    def test_unknown_record_reports_line(self):
        with pytest.raises(ValidationError) as info:
            parse_snapshot("V 0 0\nQ 1 2\n")
        assert info.value.line == 2

    def test_svg_has_one_polygon_per_triangle(self, unit_square_mesh):
        text = mesh_svg(unit_square_mesh.vertices, unit_square_mesh.triangles, values=[1.0, 2.0])
        assert text.count("<polygon") == 2
        assert text.startswith("<svg")
