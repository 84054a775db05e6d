"""
幾何的代表・らせん・長方形・到着グリッドのテスト
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pa_homeo.core.errors import GeometryError, StageFailure, ValidationError
from pa_homeo.geom.primitives import Polyline, is_injective_polyline, segment_intersection
from pa_homeo.grid.grids import StraightGrid
from pa_homeo.mapcat.catalogue import make_catalogue_map
from pa_homeo.mapcat.measures import Rect
from pa_homeo.rep.arrival import (
    ArrivalGrid,
    CrowdedArrivalCell,
    arrival_coords,
    build_injective_pl_approx,
    choose_arrival_grid,
    refine_arrival,
)
from pa_homeo.rep.paths import GeneralizedSegment, repetition_bound
from pa_homeo.rep.providers import (
    certify_h,
    generic_provider,
    identity_blend_provider,
    provider_for,
    rep_provider,
)
from pa_homeo.rep.rectangles import select_small_tv_rectangle
from pa_homeo.rep.representative import IMAGE_PARAM_TOL, build_geom_rep, thin_breaks
from pa_homeo.rep.spiral import BASE_SPIRAL, SPIRALS, quadrant_of, rotate_cw, spiral_replacement, start_quadrant

AXIS_RAYS = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)]
DIAGONAL_RAYS = [tuple(v / np.sqrt(2.0)) for v in np.array([[1, 1], [-1, 1], [-1, -1], [1, -1]], dtype=float)]
GRID = StraightGrid((0.1,), (-0.2,))
CRACK_GRID = StraightGrid((0.3,), (0.0,))
# 2 本の横線は核の中で同じ線分に潰れる
RANK_ONE_GRID = StraightGrid((0.1,), (-0.3, 0.2))
# 横線の上で 2 つの交点が 0.02 しか離れていない
CLOSE_GRID = StraightGrid((0.1, 0.12), (0.05,))


@pytest.fixture
def identity_rep(identity_map):
    return build_geom_rep(identity_map, GRID)


@pytest.fixture
def fracture_rep(fracture_map):
    return build_geom_rep(fracture_map, CRACK_GRID)


class TestRepresentative:
    """グリッド上の代表 h"""

    def test_identity_rep_is_the_identity(self, identity_rep):
        assert len(identity_rep.arcs) == 4
        assert identity_rep.evaluate(0, 0.5) == pytest.approx([0.1, 0.0])
        assert identity_rep.evaluate(1, 0.25) == pytest.approx([-0.5, -0.2])

    def test_ledger_matches_line_lengths(self, identity_rep):
        assert sum(identity_rep.ledger().values()) == pytest.approx(4.0)
        for arc in identity_rep.arcs:
            assert arc.image_length == pytest.approx(arc.variation)

    def test_crack_is_filled_by_a_segment(self, fracture_rep):
        table = fracture_rep.jump_table()
        assert len(table) == 1
        _, _, left, right = table[0]
        assert left == pytest.approx([-0.1, 0.0])
        assert right == pytest.approx([0.1, 0.0])
        image = np.vstack([arc.image() for arc in fracture_rep.arcs])
        assert any(np.allclose(p, left) for p in image)
        assert any(np.allclose(p, right) for p in image)

    def test_dump_holds_the_jump_table(self, fracture_rep):
        lines = fracture_rep.dump_lines()
        assert sum(line.startswith("ARC ") for line in lines) == len(fracture_rep.arcs)
        assert sum(line.startswith("JUMP ") for line in lines) == 1

    def test_inadmissible_grid_rejected(self, fracture_map):
        with pytest.raises(ValidationError):
            build_geom_rep(fracture_map, StraightGrid((0.0,), (0.5,)))


class TestProviders:
    """単射な一様近似 H"""

    def test_rep_is_already_injective_for_the_fracture(self, fracture_rep):
        H = rep_provider(fracture_rep, 0.01)
        assert certify_h(fracture_rep, H, 0.01) < 1e-9

    def test_collapsing_map_needs_a_blend(self):
        f = make_catalogue_map("rank_one")
        rep = build_geom_rep(f, RANK_ONE_GRID)
        with pytest.raises(ValidationError, match="not injective"):
            certify_h(rep, rep_provider(rep, 0.01), 0.01)
        H = identity_blend_provider(rep, 0.01)
        assert certify_h(rep, H, 0.01) <= 0.01 / 4.0 * 2.0 * np.sqrt(2.0)

    def test_generic_provider_certifies(self):
        f = make_catalogue_map("rank_one")
        rep = build_geom_rep(f, RANK_ONE_GRID)
        H = generic_provider(rep, 0.01)
        assert H.name == "generic"
        assert 0.0 < H.eta <= 0.01 / 4.0

    def test_provider_selection(self):
        assert provider_for("rank_one") is identity_blend_provider
        assert provider_for("fracture") is rep_provider
        assert provider_for("unknown") is generic_provider


class TestSpiral:
    """交点のらせん置き換え"""

    def test_base_spiral(self):
        expected = [(0, 0), (1, 0), (1, 2), (-3, 2), (-3, -4), (5, -4), (5, 6), (-7, 6)]
        assert SPIRALS[0].tolist() == [list(map(float, p)) for p in expected]
        assert rotate_cw(BASE_SPIRAL, 1)[1].tolist() == [0.0, -1.0]
        assert rotate_cw(BASE_SPIRAL, 4).tolist() == BASE_SPIRAL.tolist()

    def test_quadrants(self):
        assert [quadrant_of(v) for v in AXIS_RAYS] == [0, 1, 2, 3]
        with pytest.raises(ValidationError):
            quadrant_of((0.0, 0.0))

    @pytest.mark.parametrize(
        "counts, start",
        [((1, 1, 1, 1), 0), ((2, 1, 1, 0), 1), ((2, 2, 0, 0), 2), ((0, 2, 2, 0), 3), ((2, 0, 2, 0), 1)],
    )
    def test_start_quadrant(self, counts, start):
        assert start_quadrant(counts) == start

    @pytest.mark.parametrize("rays", [AXIS_RAYS, DIAGONAL_RAYS])
    def test_identity_spirals_are_disjoint(self, identity_map, rays):
        r = 0.005
        out = spiral_replacement((0.0, 0.0), rays, r, identity_map, 0.5, rng=np.random.default_rng(1))
        anchor = np.array(out.anchor)
        assert np.abs(anchor).sum() <= r / 16.0 + 1e-15
        assert len(out.pieces) == 4
        assert max(out.oscillations) <= 0.5 / 4.0
        for piece, hit in zip(out.pieces, out.hits):
            assert piece.array()[0] == pytest.approx(anchor)
            assert piece.array()[-1] == pytest.approx(np.array(hit))
        for i in range(4):
            for j in range(i + 1, 4):
                for s in out.pieces[i].segments:
                    for t in out.pieces[j].segments:
                        for p in segment_intersection(s, t).points:
                            assert np.allclose(np.array(p, dtype=float), anchor)

    def test_hits_lie_on_their_rays(self, identity_map):
        out = spiral_replacement((0.2, -0.1), AXIS_RAYS, 0.005, identity_map, 0.5, rng=np.random.default_rng(2))
        center = np.array(out.center, dtype=float)
        for hit, ray in zip(out.hits, AXIS_RAYS):
            v = np.array(hit, dtype=float) - center
            assert v @ np.array(ray) == pytest.approx(np.hypot(*v))

    def test_fracture_spiral_off_the_crack(self, fracture_map):
        out = spiral_replacement((0.3, 0.0), AXIS_RAYS, 5e-4, fracture_map, 0.1, rng=np.random.default_rng(3))
        assert max(out.oscillations) <= 0.1 / 4.0

    def test_crossing_on_the_crack_rejected(self, fracture_map):
        with pytest.raises(ValidationError):
            spiral_replacement((0.0, 0.0), AXIS_RAYS, 0.01, fracture_map, 0.1)

    def test_needs_four_rays(self, identity_map):
        with pytest.raises(ValidationError):
            spiral_replacement((0.0, 0.0), AXIS_RAYS[:3], 0.01, identity_map, 0.5)


class TestSmallRectangle:
    """境界の変動が小さい長方形"""

    def test_identity_rectangle_bands(self, identity_map):
        out = select_small_tv_rectangle(identity_map, (0.0, 0.0), 1.0, rng=np.random.default_rng(0))
        r = out.r
        assert -r < out.rect.x0 < -r / 2 and r / 2 < out.rect.x1 < r
        assert -r < out.rect.y0 < -r / 2 and r / 2 < out.rect.y1 < r
        assert out.boundary_variation < 0.25
        assert max(out.side_variations) < 1.0 / 16.0

    def test_fracture_rectangle_off_the_crack(self, fracture_map):
        out = select_small_tv_rectangle(fracture_map, (0.3, 0.0), 0.1, rng=np.random.default_rng(0))
        assert out.rect.x0 > 0.0
        assert out.boundary_variation < 0.025

    def test_no_rectangle_on_the_crack(self, fracture_map):
        with pytest.raises(ValidationError):
            select_small_tv_rectangle(fracture_map, (0.0, 0.0), 0.1)


class TestPathLemmas:
    """ほぼ最短の経路と一般化線分"""

    def test_straight_path_has_no_deviation(self):
        eta = Polyline.from_points([(0.0, 0.0), (1.0, 0.0)])
        check = repetition_bound((0, 0), (1, 0), (0, 0), (1, 0), eta, 0.0, 0.0)
        assert check.deviation == 0.0

    def test_bound_value(self):
        eta = Polyline.from_points([(0.0, 0.0), (2.0, 0.0)])
        check = repetition_bound((0, 0), (2, 0), (0, 0), (2, 0), eta, 0.01, 0.001)
        assert check.bound == pytest.approx(np.sqrt(0.042) * 2.0)

    def test_too_long_path_rejected(self):
        eta = Polyline.from_points([(0.0, 0.0), (0.5, 0.5), (1.0, 0.0)])
        with pytest.raises(ValidationError):
            repetition_bound((0, 0), (1, 0), (0, 0), (1, 0), eta, 0.01, 0.0)

    @settings(max_examples=200, deadline=None)
    @given(
        bend=st.floats(-0.3, 0.3),
        where=st.floats(0.1, 0.9),
        c=st.tuples(st.floats(-0.02, 0.02), st.floats(-0.02, 0.02)),
        d=st.tuples(st.floats(-0.02, 0.02), st.floats(-0.02, 0.02)),
    )
    def test_repetition_bound_holds(self, bend, where, c, d):
        X, Y = np.array([0.0, 0.0]), np.array([1.0, 0.0])
        C, D = X + np.array(c), Y + np.array(d)
        mid = np.array([where, bend])
        eta = Polyline.from_points([C, mid, D])
        eps = eta.length - 1.0 + 1e-12
        delta = max(np.hypot(*c), np.hypot(*d)) + 1e-12
        assert repetition_bound(X, Y, C, D, eta, max(eps, 0.0), delta).ok

    def test_same_side_bends_inward(self):
        seg = GeneralizedSegment.build((0.2, 0.0), (0.6, 0.0), Rect(0.0, 1.0, 0.0, 1.0), 0.5)
        assert not seg.straight
        assert seg.M == pytest.approx((0.4, 0.1))

    def test_distinct_sides_are_joined_straight(self):
        seg = GeneralizedSegment.build((0.2, 0.0), (1.0, 0.7), Rect(0.0, 1.0, 0.0, 1.0), 0.5)
        assert seg.straight
        assert seg.length == pytest.approx(np.hypot(0.8, 0.7))

    def test_end_points_must_be_on_the_boundary(self):
        with pytest.raises(GeometryError):
            GeneralizedSegment.build((0.2, 0.3), (0.6, 0.0), Rect(0.0, 1.0, 0.0, 1.0), 0.5)

    @settings(max_examples=200, deadline=None)
    @given(
        x=st.floats(0.0, 0.45),
        y=st.floats(0.55, 1.0),
        xi=st.floats(0.01, 0.99),
        a=st.floats(0.0, 0.49),
        b=st.floats(0.51, 1.0),
    )
    def test_subpaths_are_nearly_straight(self, x, y, xi, a, b):
        seg = GeneralizedSegment.build((x, 0.0), (y, 0.0), Rect(0.0, 1.0, 0.0, 1.0), xi)
        assert seg.subpath_ratio(a, b) <= 1.0 + xi + 1e-12


class TestArrivalGrid:
    """到着グリッドと単射な区分線形近似"""

    def test_regular_grid_gaps(self):
        grid = ArrivalGrid.regular(0.25)
        assert len(grid.w) == len(grid.z) == 9
        assert grid.max_gap < 0.25
        assert arrival_coords(0.25, 0.5)[0] == pytest.approx(-1.0 + 1.0 / 9.0)

    def test_kappa_range(self):
        with pytest.raises(ValidationError):
            ArrivalGrid.regular(0.0)

    def test_identity_arrival_grid(self, identity_rep):
        grid = choose_arrival_grid(identity_rep, 0.25, rng=np.random.default_rng(0))
        assert (len(grid.w), len(grid.z)) == (9, 9)
        # 縦線は 9 本の横線、横線は 9 本の縦線と交わる
        assert len(grid.preimages) == 18

    def test_identity_approximation(self, identity_rep):
        arrival = choose_arrival_grid(identity_rep, 0.25, rng=np.random.default_rng(0))
        approx = build_injective_pl_approx(identity_rep, arrival, 1e-3, 0.25)
        assert approx.error <= approx.error_bound
        assert all(is_injective_polyline(p)[0] for p in approx.images())
        assert all(e.length <= e.bound for e in approx.ledger)
        assert len(approx.rep.preimages) == len(arrival.preimages)

    def test_fracture_approximation(self, fracture_rep):
        H = rep_provider(fracture_rep, 1e-3)
        arrival = choose_arrival_grid(fracture_rep, 0.25, rng=np.random.default_rng(4), images=H)
        approx = build_injective_pl_approx(fracture_rep, arrival, 1e-3, 0.25, H)
        t = np.linspace(0.0, 1.0, 500)
        for c in range(len(approx.curves)):
            gap = np.hypot(*(approx.evaluate(c, t) - fracture_rep.evaluate(c, t)).T).max()
            assert gap < approx.error_bound

    def test_xi_range(self, identity_rep):
        arrival = ArrivalGrid.regular(0.25, (0.37, 0.61))
        with pytest.raises(ValidationError):
            build_injective_pl_approx(identity_rep, arrival, 1e-3, 1.5)

    def test_non_injective_provider_rejected(self):
        f = make_catalogue_map("rank_one")
        rep = build_geom_rep(f, RANK_ONE_GRID)
        arrival = ArrivalGrid.regular(0.25, (0.37, 0.61))
        with pytest.raises(ValidationError):
            build_injective_pl_approx(rep, arrival, 1e-3, 0.25, rep_provider)


def test_crossing_images_are_shared(identity_rep):
    arrival = choose_arrival_grid(identity_rep, 0.5, rng=np.random.default_rng(5))
    approx = build_injective_pl_approx(identity_rep, arrival, 1e-3, 0.25)
    (ti, tj), = approx.crossings.values()
    assert approx.evaluate(0, ti) == pytest.approx(approx.evaluate(1, tj), abs=1e-9)



class TestArrivalRefinement:
    """混み合った到着セルでの κ の細分"""

    def test_coarse_grid_is_crowded(self, identity_map):
        rep = build_geom_rep(identity_map, CLOSE_GRID)
        # 縦の到着線は -2/3, 0, 2/3 で、0.1 と 0.12 が同じセルに入る
        arrival = ArrivalGrid.regular(1.0, (0.5, 0.4))
        with pytest.raises(CrowdedArrivalCell) as info:
            build_injective_pl_approx(rep, arrival, 1e-3, 0.25)
        assert len(info.value.witness["pairs"]) == 2

    def test_kappa_is_halved_until_the_crossings_separate(self, identity_map):
        rep = build_geom_rep(identity_map, CLOSE_GRID)
        approx = refine_arrival(rep, 1.0, 1e-3, 0.25, rng=np.random.default_rng(0))
        assert approx.arrival.kappa <= 1.0
        assert approx.arrival.kappa >= 2.0 ** -12
        assert approx.error <= approx.error_bound
        assert all(is_injective_polyline(p)[0] for p in approx.images())

    def test_floor_stops_the_refinement(self, identity_rep, mocker):
        crowded = mocker.patch(
            "pa_homeo.rep.arrival.build_injective_pl_approx",
            side_effect=CrowdedArrivalCell("two grid crossings between consecutive arrival lines", {"pairs": [(0, 1)]}),
        )
        with pytest.raises(StageFailure) as info:
            refine_arrival(identity_rep, 0.5, 1e-3, 0.25, min_kappa=0.1)
        assert not isinstance(info.value, CrowdedArrivalCell)
        # 0.5, 0.25, 0.125 の 3 回
        assert crowded.call_count == 3
        assert info.value.witness["kappa"] == pytest.approx(0.125)
        assert info.value.witness["pairs"] == [(0, 1)]

    def test_floor_range(self, identity_rep):
        with pytest.raises(ValidationError):
            refine_arrival(identity_rep, 0.5, 1e-3, 0.25, min_kappa=0.75)


class TestThinBreaks:
    """ほぼ重なったパラメータの間引き"""

    def test_close_points_are_dropped(self):
        keep = thin_breaks(np.array([0.0, 1e-12, 0.5, 0.5 + 1e-11, 1.0]))
        assert keep.tolist() == [True, False, True, False, True]

    def test_pinned_point_wins(self):
        keep = thin_breaks(np.array([0.0, 0.3, 0.3 + 1e-12, 1.0]), pinned=[False, False, True, False])
        assert keep.tolist() == [True, False, True, True]

    def test_last_point_is_kept(self):
        keep = thin_breaks(np.array([0.0, 0.5, 1.0 - 1e-12, 1.0]))
        assert keep.tolist() == [True, True, False, True]

    def test_two_pinned_points_stay(self):
        keep = thin_breaks(np.array([0.0, 0.5, 0.5, 1.0]), pinned=[True, True, True, True])
        assert keep.all()

    def test_fracture_images_have_no_repeats(self, fracture_rep):
        for curve in fracture_rep.curves:
            params, points = curve.image()
            assert len(params) == len(points)
            assert np.all(np.diff(params) > IMAGE_PARAM_TOL)
