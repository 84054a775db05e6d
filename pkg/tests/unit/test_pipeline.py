"""
パイプラインの各段階 (分離・分類・摂動・骨格・貼り合わせ・計測) のテスト
"""

import numpy as np
import pytest

from pa_homeo.core.errors import GeometryError, StageFailure, ValidationError
from pa_homeo.extend.boundary import BoundaryData
from pa_homeo.geom.pa_map import PAHomeo, certify_homeomorphism
from pa_homeo.geom.triangulation import Triangulation
from pa_homeo.mapcat.catalogue import SQUARE, make_catalogue_map, square_polygon
from pa_homeo.pipeline.assemble import _extend_square, assemble_homeo, extend_flat
from pa_homeo.pipeline.classify import Category, classify_dyadic
from pa_homeo.pipeline.guidelines import Slice, choose_guidelines
from pa_homeo.pipeline.isolate import isolate_singular_support, jump_cover, level_side
from pa_homeo.pipeline.ledger import Check, first_failure, require
from pa_homeo.pipeline.metrics import crack_opening, measure_metrics, sample_injectivity
from pa_homeo.pipeline.perturb import perturb_vertices
from pa_homeo.pipeline.skeleton import (
    RHO_CAP,
    build_boundary_map,
    crossing_separation,
    flat_boundary_ratio,
    flat_deviation,
    perp_width_ratio,
    skeleton_sigma,
    vertex_gap,
)

EPS = 0.2
# 軸に平行な辺を持たない小さな四角形 (原点の割れ目をまたぐ)
TILTED = np.array([[-0.1, -0.09], [0.09, -0.1], [0.1, 0.1], [-0.09, 0.09]])


@pytest.fixture(scope="module")
def identity_row():
    """恒等写像の ε = 0.2, K = 2 の 1 行ぶん"""
    f = make_catalogue_map("identity")
    cls = classify_dyadic(f, EPS, k_min=2, k_max=4)
    mesh = perturb_vertices(f, cls, rng=np.random.default_rng(0))
    skeleton = build_boundary_map(f, cls, mesh, EPS)
    assembly = assemble_homeo(f, cls, mesh, skeleton, EPS)
    return f, cls, mesh, skeleton, assembly


class TestLedger:
    """結論の台帳"""

    def test_check(self):
        assert Check(1.0, 2.0).ok
        assert Check(1.0, 2.0).slack == 1.0
        assert not Check(2.0, 1.0).ok

    def test_require_names_the_failed_conclusion(self):
        ledger = {"a": Check(0.0, 1.0), "b": Check(3.0, 1.0)}
        assert first_failure(ledger)[0] == "b"
        with pytest.raises(StageFailure) as info:
            require(ledger, "classification", K=3)
        assert info.value.witness["conclusion"] == "b"
        assert info.value.witness["slack"] == -2.0
        assert info.value.witness["K"] == 3

    def test_require_passes(self):
        require({"a": Check(1.0, 1.0)}, "stage")


class TestIsolate:
    """ジャンプ集合の被覆"""

    def test_no_jumps(self, identity_map):
        assert isolate_singular_support(identity_map, EPS) == []

    def test_fracture_cover(self, fracture_map):
        cover = isolate_singular_support(fracture_map, EPS)
        assert cover
        ac_total = fracture_map.measure(SQUARE, "ac")
        sing_total = fracture_map.measure(SQUARE, "sing")
        ac_cover = sum(fracture_map.measure(r.polygon(), "ac") for r in cover)
        assert ac_cover <= EPS * min(1.0, ac_total, sing_total) + 1e-12
        assert all(r.x1 - r.x0 == pytest.approx(r.y1 - r.y0) for r in cover)

    def test_cover_touches_the_crack(self, fracture_map):
        cover = jump_cover(fracture_map, 3)
        assert len(cover) > 0
        assert all(r.x1 - r.x0 == level_side(3) for r in cover)

    @pytest.mark.parametrize("eps", [0.0, 1.0, -0.1])
    def test_eps_range(self, identity_map, eps):
        with pytest.raises(ValidationError):
            isolate_singular_support(identity_map, eps)


class TestClassify:
    """二進正方形の分類"""

    def test_identity_level_two(self, identity_row):
        _, cls, _, _, _ = identity_row
        assert cls.K == 2
        assert cls.counts() == {"G": 4, "T": 0, "W": 12, "F": 0, "E": 0}
        assert all(check.ok for check in cls.conclusions.values())

    def test_outer_ring_is_wild(self, identity_row):
        _, cls, _, _, _ = identity_row
        n = cls.n
        for k in range(n):
            for i, j in ((k, 0), (k, n - 1), (0, k), (n - 1, k)):
                assert cls.category(i, j) is Category.WILD

    def test_z_set_of_a_good_square(self, identity_row):
        _, cls, _, _, _ = identity_row
        c = cls.center(1, 1)
        inside = cls.in_z(1, 1, np.array([c, c + cls.side, c + 1.5 * cls.side]))
        assert inside.tolist() == [True, True, False]

    def test_k_min_is_respected(self, identity_map):
        assert classify_dyadic(identity_map, EPS, k_min=3, k_max=4).K == 3

    def test_bad_levels(self, identity_map):
        with pytest.raises(ValidationError):
            classify_dyadic(identity_map, EPS, k_min=5, k_max=4)

    def test_rank_one_squares_are_flat(self, rank_one_map):
        # 2Q_i が核 [-1/2, 1/2]² に収まるのは K = 4 から
        cls = classify_dyadic(rank_one_map, EPS, k_min=4, k_max=4)
        assert cls.counts()["T"] > 0
        for i, j in cls.indices(Category.FLAT):
            assert abs(np.linalg.det(cls.gradients[i, j])) <= 1e-12

    @pytest.mark.slow
    def test_fracture_has_jump_squares(self, fracture_map):
        cls = classify_dyadic(fracture_map, EPS, k_min=4, k_max=8)
        assert cls.counts()["E"] > 0
        for (i, j), (u, v) in cls.polars.items():
            assert cls.category(i, j) is Category.JUMP
            assert np.hypot(*u) == pytest.approx(1.0)
            assert np.hypot(*v) == pytest.approx(1.0)


class TestPerturb:
    """格子頂点の摂動"""

    def test_outer_vertices_stay(self, identity_row):
        _, cls, mesh, _, _ = identity_row
        lattice = -1.0 + cls.side * np.arange(cls.n + 1)
        assert np.array_equal(mesh.points[0, :, 1], lattice)
        assert np.array_equal(mesh.points[:, 0, 0], lattice)
        assert np.all(mesh.points[-1, :, 0] == 1.0)
        assert np.all(mesh.points[:, -1, 1] == 1.0)

    def test_inner_vertices_move_a_little(self, identity_row):
        _, cls, mesh, _, _ = identity_row
        lattice = -1.0 + cls.side * np.arange(cls.n + 1)
        grid = np.stack(np.meshgrid(lattice, lattice, indexing="ij"), axis=-1)
        shift = np.abs(mesh.points - grid)[1:-1, 1:-1]
        assert shift.max() <= 2.0 ** (-cls.K - 2)
        assert shift.max() > 0.0

    def test_quadrilaterals_tile_the_square(self, identity_row):
        _, _, mesh, _, _ = identity_row
        assert np.all(mesh.quad_areas() > 0.0)
        assert mesh.tiling_defect() < 1e-12
        assert 0.0 < mesh.acceptance <= 1.0
        assert len(mesh.rows()) == len(mesh.columns()) == mesh.n - 1

    def test_same_seed_same_mesh(self, identity_row):
        f, cls, mesh, _, _ = identity_row
        again = perturb_vertices(f, cls, rng=np.random.default_rng(0))
        assert np.array_equal(again.points, mesh.points)


class TestSkeleton:
    """骨格上の境界写像"""

    def test_sigma_formula(self):
        assert skeleton_sigma(0.1, 0.01, 2) == pytest.approx(0.01 * 0.01 / 60.0)

    def test_crossing_separation(self):
        assert crossing_separation(np.zeros((1, 2))) == RHO_CAP
        assert crossing_separation(np.array([[0.0, 0.0], [0.003, 0.004]])) == pytest.approx(0.005)
        assert crossing_separation(np.array([[0.0, 0.0], [1.0, 0.0]])) == RHO_CAP

    def test_identity_skeleton(self, identity_row):
        _, cls, mesh, skeleton, _ = identity_row
        assert len(skeleton.boundaries) == cls.n ** 2
        assert skeleton.closeness <= skeleton.sigma
        assert np.allclose(skeleton.vertex_images, mesh.points, atol=skeleton.sigma)
        assert all(check.ok for check in skeleton.ledger.values())

    def test_quad_boundaries_follow_the_mesh(self, identity_row):
        _, _, mesh, skeleton, _ = identity_row
        bd = skeleton.boundary(1, 1)
        for corner in mesh.quad(1, 1):
            assert np.min(np.hypot(*(bd.domain - corner).T)) == 0.0

    def test_every_conclusion_is_measured(self, identity_row):
        _, _, _, skeleton, _ = identity_row
        names = {"injective", "vertex_values", "width", "width_perp", "slices", "guidelines", "flat_boundary"}
        assert names <= set(skeleton.ledger)
        assert skeleton.ledger["injective"].measured == 0.0

    def test_moved_vertices_break_the_vertex_values(self, identity_row):
        f, cls, mesh, skeleton, _ = identity_row
        assert vertex_gap(f, cls, mesh, skeleton.vertex_images) <= skeleton.sigma
        gap = vertex_gap(f, cls, mesh, skeleton.vertex_images + np.array([0.01, 0.0]))
        assert gap == pytest.approx(0.01, abs=skeleton.sigma)
        assert not Check(gap, skeleton.sigma).ok

    def test_broken_quadrilateral_is_reported(self, identity_row, mocker):
        f, cls, mesh, _, _ = identity_row
        mocker.patch(
            "pa_homeo.pipeline.skeleton.BoundaryData", side_effect=GeometryError("boundary map is not injective")
        )
        with pytest.raises(StageFailure) as info:
            build_boundary_map(f, cls, mesh, EPS)
        assert info.value.witness["conclusion"] == "injective"
        assert info.value.witness["measured"] == cls.n ** 2
        assert info.value.witness["reason"] == "boundary map is not injective"

    @pytest.mark.slow
    def test_width_across_the_jump_is_budgeted(self, fracture_map):
        cls = classify_dyadic(fracture_map, EPS, k_min=4, k_max=8)
        (i, j), _ = next(iter(cls.polars.items()))
        center = np.asarray(cls.center(i, j))
        bd = BoundaryData.from_map(square_polygon(center, 0.5 * cls.side), lambda p: center + 3.0 * (p - center))
        assert perp_width_ratio(fracture_map, cls, {(i, j): bd}, EPS, 1e-12) > 1.0
        assert perp_width_ratio(fracture_map, cls, {(i, j): bd}, EPS, 1e12) < 1.0


class TestFlatBoundary:
    """T の四角形の境界での ∂_τφ と ∇f(w)τ の差"""

    A = np.array([[1.0, 0.5], [0.0, 0.02]])

    def _boundary(self):
        square = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
        return BoundaryData.from_map(square, lambda p: p @ self.A.T, per_side=2)

    def test_linear_boundary_has_no_deviation(self):
        assert flat_deviation(self._boundary(), self.A) == pytest.approx(0.0, abs=1e-12)

    def test_deviation_of_another_gradient(self):
        B = self.A + np.array([[0.0, 0.0], [0.0, 0.1]])
        # 縦の辺 (長さの和 4) でだけ 0.1 ずれる
        assert flat_deviation(self._boundary(), B) == pytest.approx(0.4)

    def test_foreign_boundary_breaks_the_budget(self, rank_one_map):
        cls = classify_dyadic(rank_one_map, EPS, k_min=4, k_max=4)
        flat = cls.indices(Category.FLAT)
        assert flat
        i, j = flat[0]
        # ∇f(w_i) と違う 2·id の境界データ
        bd = BoundaryData.from_map(square_polygon(cls.center(i, j), 0.5 * cls.side), lambda p: 2.0 * p, per_side=2)
        assert flat_boundary_ratio(rank_one_map, cls, {(i, j): bd}, EPS, 1e-9) > 1.0
        assert flat_boundary_ratio(rank_one_map, cls, {(i, j): bd}, EPS, 1e12) < 1.0

    @pytest.mark.slow
    def test_rank_one_row(self, rank_one_map):
        cls = classify_dyadic(rank_one_map, EPS, k_min=4, k_max=4)
        mesh = perturb_vertices(rank_one_map, cls, rng=np.random.default_rng(0))
        skeleton = build_boundary_map(rank_one_map, cls, mesh, EPS)
        assert skeleton.ledger["flat_boundary"].ok
        assert skeleton.ledger["slices"].ok


class TestGuidelines:
    """跳びのある四角形の切片と案内線"""

    def test_identity_slices_cover_the_quadrilateral(self, identity_map):
        g = choose_guidelines(identity_map, TILTED, (1.0, 0.0), 0.1, 3, 10.0)
        s = TILTED @ np.array([0.0, -1.0])
        assert g.slices[0].lo == pytest.approx(s.min())
        assert g.slices[-1].hi == pytest.approx(s.max())
        assert all(a.hi == b.lo for a, b in zip(g.slices, g.slices[1:]))
        assert g.split_ratio < 1.0
        assert g.helper_ratio <= 1.0 + 1e-9
        lines = g.lines()
        assert lines
        # u = (1, 0) の案内線は水平
        assert all(ends[0][1] == pytest.approx(ends[1][1]) for ends in lines)

    def test_fracture_needs_thin_slices(self, fracture_map):
        g = choose_guidelines(fracture_map, TILTED, (1.0, 0.0), 0.1, 3, 10.0)
        assert g.split_ratio < 1.0
        assert g.helper_ratio <= 1.0 + 1e-9
        heavy = [s for s in g.slices if s.boundary_variation >= g.small]
        assert heavy
        assert all(max(s.upper, s.lower) < g.thin for s in heavy)
        assert all(s.guide is None for s in heavy)

    def test_unsplit_slice_fails(self, fracture_map):
        coarse = choose_guidelines(fracture_map, TILTED, (1.0, 0.0), 0.1, 3, 10.0, max_depth=0)
        assert len(coarse.slices) == 1
        assert not Check(coarse.split_ratio, 1.0).ok

    def test_helper_ratio(self):
        assert Slice(0.0, 0.1, 0.0, 0.0, 0.0, 0.05, None, 2.0, 0.1).helper_ratio == pytest.approx(2.0)
        assert Slice(0.0, 0.1, 0.0, 0.0, 0.0, 0.05, None, 1.0, 0.0).helper_ratio == float("inf")
        assert Slice(0.0, 0.1, 0.0, 0.0, 0.0, 0.05, None, 0.0, 0.0).helper_ratio == 0.0
        assert not Check(Slice(0.0, 0.1, 0.0, 0.0, 0.0, 0.05, None, 2.0, 0.1).helper_ratio, 1.0).ok


class TestFlatExtension:
    """T の四角形: 回した diag(d, 0) への拡張と HP への切り替え"""

    A = np.diag([1.0, 0.02])
    HALF_SQUARE = [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)]

    def _boundary(self):
        return BoundaryData.from_map(self.HALF_SQUARE, lambda p: p @ self.A.T, per_side=2)

    def _item(self, budget):
        data = {"refinement": 2, "gradient": self.A, "budget": budget, "side": 1.0}
        return ((0, 0), Category.FLAT.value, self._boundary(), data)

    def test_generous_budget(self):
        # 境界での ∫|D_τφ − diag(1,0)τ| = 0.04 < δ r₀ = 0.1
        ext = extend_flat(self._boundary(), self.A, 0.1, 1.0)
        assert ext.certificate
        assert ext.report.kind == "degenerate"
        assert np.allclose(ext.g.evaluate(self._boundary().domain), self._boundary().image, atol=1e-9)

    def test_tight_budget_fails_the_boundary_bound(self):
        with pytest.raises(ValidationError, match="not close to diag"):
            extend_flat(self._boundary(), self.A, 0.01, 1.0)

    @pytest.mark.parametrize("budget", [0.0, 1.0, 2.0])
    def test_budget_range(self, budget):
        with pytest.raises(ValidationError, match="strictly between"):
            extend_flat(self._boundary(), self.A, budget, 1.0)

    def test_square_uses_the_degenerate_extension(self):
        assert _extend_square(self._item(0.1)).report.kind == "degenerate"

    def test_square_falls_back_to_hp(self):
        ext = _extend_square(self._item(0.01))
        assert ext.report.kind == "hp"
        assert ext.certificate


class TestAssemble:
    """貼り合わせ"""

    def test_certified_homeomorphism(self, identity_row):
        _, cls, _, _, assembly = identity_row
        assert assembly.certificate
        assert certify_homeomorphism(assembly.g)
        assert set(assembly.labels) <= {"G", "W"}
        assert len(assembly.reports) == cls.n ** 2
        assert sum(assembly.kinds().values()) == cls.n ** 2

    def test_identity_on_the_outer_square(self, identity_row):
        _, _, _, _, assembly = identity_row
        g = assembly.g
        pts = np.array([[-1.0, -0.3], [1.0, 0.7], [0.2, 1.0], [-0.9, -1.0]])
        assert np.allclose(g.evaluate(pts), pts, atol=1e-12)
        assert assembly.boundary_snap <= 1e-9

    def test_close_to_the_identity(self, identity_row):
        f, cls, _, skeleton, assembly = identity_row
        metrics = measure_metrics(assembly.g, f, assembly.region(Category.JUMP), EPS, 64.0)
        assert metrics.l1 < 1e-3
        assert metrics.mstrict_consistent


class TestMetrics:
    """比較量"""

    def test_identity_against_itself(self, identity_homeo, identity_map):
        jump = np.zeros(identity_homeo.domain.n_triangles, dtype=bool)
        m = measure_metrics(identity_homeo, identity_map, jump, 0.1, 64.0)
        assert m.l1 == pytest.approx(0.0, abs=1e-12)
        assert m.ac_gap == pytest.approx(0.0, abs=1e-12)
        assert m.strict_gap == pytest.approx(0.0, abs=1e-12)
        assert m.mstrict_gap == pytest.approx(0.0, abs=1e-12)
        assert m.total_variation == pytest.approx(4.0 * np.sqrt(2.0))
        assert m.sing_ratio == 0.0
        assert m.mstrict_consistent

    def test_shifted_map_distance(self, unit_square_mesh, identity_map):
        shifted = PAHomeo.from_function(unit_square_mesh, lambda p: p + np.array([0.1, 0.0]))
        jump = np.zeros(2, dtype=bool)
        assert measure_metrics(shifted, identity_map, jump, 0.1, 64.0).l1 == pytest.approx(0.4)

    def test_crack_opening(self, identity_homeo):
        assert crack_opening(identity_homeo, (0.0, 0.0), (1.0, 0.0), 0.1) == pytest.approx(0.0, abs=1e-12)

    def test_sampled_injectivity(self, identity_homeo, unit_square_mesh):
        assert sample_injectivity(identity_homeo, np.random.default_rng(0), samples=500)
        collapsed = PAHomeo(unit_square_mesh, np.zeros((4, 2)))
        assert not sample_injectivity(collapsed, np.random.default_rng(0), samples=10)

    def test_folded_map_is_caught(self, unit_square_mesh):
        """(-1,1) を対角線の向こうへ折り返すと 2 枚の像三角形が重なる"""
        images = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [0.5, -0.5]])
        folded = PAHomeo(unit_square_mesh, images)
        assert not np.any(np.all(folded.images[:, None] == folded.images[None, :], axis=2) & ~np.eye(4, dtype=bool))
        cert = sample_injectivity(folded, np.random.default_rng(0), samples=200)
        assert not cert
        assert cert.reason == "two sample points share an image"
        first, second = np.array(cert.witness["first"]), np.array(cert.witness["second"])
        assert np.allclose(folded.evaluate(first), folded.evaluate(second))

    def test_many_triangles_unfolded(self):
        verts = np.array([[x, y] for y in np.linspace(-1.0, 1.0, 5) for x in np.linspace(-1.0, 1.0, 5)])
        tris = [[5 * r + q, 5 * r + q + 1, 5 * r + q + 6] for r in range(4) for q in range(4)]
        tris += [[5 * r + q, 5 * r + q + 6, 5 * r + q + 5] for r in range(4) for q in range(4)]
        g = PAHomeo.from_function(Triangulation(verts, np.array(tris)), lambda p: p + 0.1 * np.sin(p[:, ::-1]))
        assert sample_injectivity(g, np.random.default_rng(1), samples=2000)
