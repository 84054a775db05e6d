"""
テスト写像カタログと測度オラクルのテスト
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pa_homeo.core.errors import GeometryError, ValidationError
from pa_homeo.mapcat.catalogue import CATALOGUE, SQUARE, describe_catalogue, make_catalogue_map
from pa_homeo.mapcat.measures import Rect, density_ratios, distance_to_jumps, measure_query, measure_report, measure_union
from pa_homeo.mapcat.onedbv import line_variation, restrict_to_polyline

# 既定の亀裂: d = 0.2、|y| ≤ 0.4 で全開、0.4〜0.5 で線形に閉じる
FRACTURE_SING = 0.2 * (0.8 + 0.1)


class TestCatalogue:
    """カタログの構成と検証"""

    @pytest.mark.parametrize("kind", sorted(CATALOGUE))
    def test_every_map_is_identity_on_the_boundary(self, kind):
        f = make_catalogue_map(kind)
        edge = np.linspace(-1.0, 1.0, 17)
        pts = np.vstack([
            np.column_stack([edge, -np.ones_like(edge)]),
            np.column_stack([np.ones_like(edge), edge]),
        ])
        assert f.evaluate(pts) == pytest.approx(pts)
        assert sum(c.area for c in f.cells) == pytest.approx(4.0)

    def test_unknown_kind(self):
        with pytest.raises(ValidationError):
            make_catalogue_map("spiral")

    def test_unknown_parameter(self):
        with pytest.raises(ValidationError):
            make_catalogue_map("fracture", {"width": 0.1})

    def test_opening_out_of_range(self):
        with pytest.raises(ValidationError):
            make_catalogue_map("fracture", {"d": 1.5, "reach": 0.5})

    def test_folding_affine_blend_rejected(self):
        with pytest.raises(ValidationError):
            make_catalogue_map("affine", {"a11": -1.0})

    def test_description_lists_every_kind(self):
        lines = describe_catalogue()
        assert [line.split(":")[0] for line in lines] == list(CATALOGUE)

    def test_fracture_opens_a_crack(self, fracture_map):
        plus = fracture_map.evaluate(np.array([[1e-9, 0.0]]))[0]
        minus = fracture_map.evaluate(np.array([[-1e-9, 0.0]]))[0]
        assert plus[0] - minus[0] == pytest.approx(0.2, abs=1e-6)

    def test_fracture_polar_decomposition(self, fracture_map):
        u, v = fracture_map.polar_at((0.0, 0.1))
        assert np.abs(u) == pytest.approx([1.0, 0.0])
        assert v == pytest.approx([1.0, 0.0])
        assert u[0] * v[0] > 0

    def test_polar_off_the_jump_set(self, fracture_map):
        with pytest.raises(GeometryError):
            fracture_map.polar_at((0.3, 0.0))

    def test_rank_one_core_gradient(self, rank_one_map):
        A = rank_one_map.gradient_at((0.1, 0.2))
        assert A == pytest.approx(np.array([[1.0, 0.0], [0.0, 0.0]]))


class TestMeasures:
    """閉形式の測度"""

    def test_identity_total_variation(self, identity_map):
        assert identity_map.measure(SQUARE, "total") == pytest.approx(4.0 * np.sqrt(2.0))
        assert identity_map.measure(SQUARE, "sing") == 0.0
        assert identity_map.measure(SQUARE, "directional", (0.0, 1.0)) == pytest.approx(4.0)

    def test_query_on_a_rectangle(self, identity_map):
        rect = Rect(-0.5, 0.5, -0.25, 0.25)
        assert measure_query(identity_map, rect, "directional", (1.0, 0.0)) == pytest.approx(0.5)
        assert measure_query(identity_map, rect) == pytest.approx(0.5 * np.sqrt(2.0))
        assert measure_report(identity_map, rect).mstrict == pytest.approx(1.0)

    def test_fracture_singular_part(self, fracture_map):
        assert fracture_map.measure(SQUARE, "sing") == pytest.approx(FRACTURE_SING)
        report = measure_report(fracture_map, SQUARE)
        assert report.total == pytest.approx(report.ac + report.sing)

    def test_jump_on_a_shared_edge_is_counted_once(self, fracture_map):
        halves = [(-1.0, 0.0, -1.0, 1.0), (0.0, 1.0, -1.0, 1.0)]
        assert measure_union(fracture_map, halves, "sing") == pytest.approx(FRACTURE_SING)
        assert measure_union(fracture_map, halves, "total") == pytest.approx(fracture_map.measure(SQUARE, "total"))

    def test_rect_additivity_over_a_split(self):
        f = make_catalogue_map("shear_blend")
        rect = Rect(-0.8, 0.6, -0.4, 0.9)
        parts = rect.split(0.1, 0.2)
        assert measure_union(f, parts, "total") == pytest.approx(f.measure(rect, "total"))

    @settings(max_examples=25, deadline=None)
    @given(
        x=st.floats(-0.9, 0.5),
        y=st.floats(-0.9, 0.5),
        w=st.floats(0.05, 0.4),
        h=st.floats(0.05, 0.4),
    )
    def test_monotone_in_the_region(self, x, y, w, h):
        f = make_catalogue_map("fracture")
        inner = (x, x + w, y, y + h)
        outer = (x - 0.05, x + w + 0.05, y - 0.05, y + h + 0.05)
        assert f.measure(inner, "total") <= f.measure(outer, "total") + 1e-12

    def test_unknown_measure_kind(self, identity_map):
        with pytest.raises(ValidationError):
            identity_map.measure(SQUARE, "weak")

    def test_directional_needs_unit_vector(self, identity_map):
        with pytest.raises(GeometryError):
            identity_map.measure(SQUARE, "directional", (2.0, 0.0))

    def test_density_ratio_of_the_identity(self, identity_map):
        r = 0.1
        ratios = density_ratios(identity_map, np.array([[0.0, 0.0], [0.5, -0.3]]), r)
        assert ratios == pytest.approx(4.0 * r * np.sqrt(2.0))

    def test_density_does_not_vanish_on_the_crack(self, fracture_map):
        on = density_ratios(fracture_map, np.array([[0.0, 0.0]]), 1e-3)[0]
        off = density_ratios(fracture_map, np.array([[0.3, 0.7]]), 1e-3)[0]
        assert on > 0.1
        assert off < 0.01

    def test_distance_to_jumps(self, fracture_map):
        d = distance_to_jumps(fracture_map, np.array([[0.3, 0.0], [0.0, 0.8]]))
        assert d == pytest.approx([0.3, 0.3])


class TestRestrictions:
    """折れ線への制限"""

    def test_line_across_the_crack(self, fracture_map):
        D = restrict_to_polyline(fracture_map, [(-0.5, 0.0), (0.5, 0.0)])
        assert D.total_variation == pytest.approx(1.0)
        assert len(D.jumps) == 1
        assert D.jumps[0].t == pytest.approx(0.5)
        assert D.jumps[0].size == pytest.approx(0.2)

    def test_one_sided_limits_at_the_crack(self, fracture_map):
        D = restrict_to_polyline(fracture_map, [(-0.5, 0.0), (0.5, 0.0)])
        left, right = D.one_sided(0.5)
        assert left == pytest.approx([-0.1, 0.0])
        assert right == pytest.approx([0.1, 0.0])

    def test_variation_function_is_monotone(self, fracture_map):
        D = restrict_to_polyline(fracture_map, [(-0.9, -0.2), (0.4, 0.3), (0.9, 0.9)])
        values = D.variation(np.linspace(0.0, 1.0, 41))
        assert np.all(np.diff(values) >= -1e-12)
        assert values[-1] == pytest.approx(D.total_variation)

    def test_identity_line_variation_is_length(self, identity_map):
        assert line_variation(identity_map, (-1.0, -1.0), (1.0, 1.0)) == pytest.approx(2.0 * np.sqrt(2.0))

    def test_segment_along_the_crack_is_rejected(self, fracture_map):
        with pytest.raises(ValidationError, match="grid on jump set"):
            restrict_to_polyline(fracture_map, [(0.0, -0.3), (0.0, 0.3)])

    def test_slice_takes_inner_limits(self, fracture_map):
        D = restrict_to_polyline(fracture_map, [(-0.5, 0.0), (0.5, 0.0)])
        right_half = D.slice(0.5, 1.0)
        assert right_half.total_variation == pytest.approx(0.4)
