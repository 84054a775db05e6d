"""
境界写像の拡張 (HP・退化・成分ごと・アフィン角) とベンチマークのテスト
"""

import csv

import numpy as np
import pytest

from pa_homeo.core.errors import GeometryError, ValidationError
from pa_homeo.extend.affine import affine_corner_extension, corner_indices
from pa_homeo.extend.bench import MAX_BREAKS, bench_corpus, random_star_boundary, run_bench
from pa_homeo.extend.boundary import BoundaryData
from pa_homeo.extend.componentwise import extend_componentwise
from pa_homeo.extend.degenerate import degenerate_preconditions, extend_degenerate
from pa_homeo.extend.hp import extend_hp, hp_ratio
from pa_homeo.extend.io import parse_boundary_text, read_boundary, write_boundary, write_report_csv
from pa_homeo.extend.report import REPORT_COLUMNS, RATIO_BOUND
from pa_homeo.extend.widths import straight_width_integral, width_integral, width_profile
from pa_homeo.geom.pa_map import certify_homeomorphism

SQUARE = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
HALF_SQUARE = [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)]
SQUARE_WITH_MIDPOINTS = [(-1.0, -1.0), (0.0, -1.0), (1.0, -1.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (-1.0, 1.0), (-1.0, 0.0)]


def _identity_square(per_side=1):
    return BoundaryData.from_map(SQUARE, lambda p: p.copy(), per_side)


class TestBoundaryData:
    """境界データの検証"""

    def test_clockwise_domain_rejected(self):
        with pytest.raises(GeometryError):
            BoundaryData(SQUARE[::-1], SQUARE[::-1])

    def test_orientation_reversing_map_rejected(self):
        flipped = [(x, -y) for x, y in SQUARE]
        with pytest.raises(GeometryError):
            BoundaryData(SQUARE, flipped)

    def test_self_crossing_image_rejected(self):
        bowtie = [(-1.0, -1.0), (1.0, 1.0), (1.0, -1.0), (-1.0, 1.0)]
        with pytest.raises(GeometryError):
            BoundaryData(SQUARE, bowtie)

    def test_phi_interpolates_on_sides(self):
        bd = BoundaryData.from_map(SQUARE, lambda p: 2.0 * p, per_side=2)
        assert bd.n == 8
        assert np.allclose(bd.phi((0.5, -1.0)), (1.0, -2.0))
        assert bd.boundary_variation() == pytest.approx(16.0)
        with pytest.raises(GeometryError):
            bd.phi((0.0, 0.0))

    def test_repeated_break_point_rejected(self):
        domain = [(-1.0, -1.0), (1.0, -1.0), (1.0, -1.0 + 1e-13), (1.0, 1.0), (-1.0, 1.0)]
        with pytest.raises(GeometryError, match="repeated break point"):
            BoundaryData(domain, domain)

    def test_rounding_dent_is_accepted(self):
        # 辺の中点が丸め誤差ぶんだけ内側にずれても凸とみなす
        domain = np.array(SQUARE_WITH_MIDPOINTS)
        domain[1, 1] += 1e-15
        bd = BoundaryData(domain, domain)
        assert corner_indices(bd) == [0, 2, 4, 6]
        ext = affine_corner_extension(bd)
        assert ext.certificate

    def test_real_dent_is_rejected(self):
        domain = np.array(SQUARE_WITH_MIDPOINTS)
        domain[1, 1] += 1e-3
        with pytest.raises(GeometryError, match="convex"):
            BoundaryData(domain, domain)


class TestAffineCorner:
    """四角形の 2 枚アフィン拡張"""

    def test_convex_quadrilateral(self):
        image = [(-1.0, -1.2), (1.4, -0.8), (1.0, 1.0), (-0.9, 0.8)]
        ext = affine_corner_extension(BoundaryData(SQUARE, image))
        assert ext.certificate
        assert ext.report.kind == "affine"
        assert ext.g.domain.n_triangles == 2
        assert np.allclose(ext.g.evaluate(np.array(SQUARE)), image)

    def test_side_break_points_are_kept(self):
        bd = BoundaryData.from_map(SQUARE, lambda p: p @ np.array([[1.0, 0.2], [0.0, 1.0]]), per_side=3)
        assert corner_indices(bd) == [0, 3, 6, 9]
        ext = affine_corner_extension(bd)
        assert np.allclose(ext.g.evaluate(bd.domain), bd.image)

    def test_reflex_image_rejected(self):
        with pytest.raises(GeometryError):
            affine_corner_extension(BoundaryData(SQUARE, [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (0.0, -0.5)]))

    def test_nonlinear_side_rejected(self):
        bd = _identity_square(per_side=2)
        image = bd.image.copy()
        image[1] = (0.0, -1.1)
        with pytest.raises(ValidationError, match="not linear"):
            affine_corner_extension(BoundaryData(bd.domain, image))

    def test_pentagon_rejected(self):
        pentagon = [(np.cos(a), np.sin(a)) for a in np.linspace(0.0, 2.0 * np.pi, 5, endpoint=False)]
        with pytest.raises(ValidationError, match="quadrilateral"):
            affine_corner_extension(BoundaryData(pentagon, pentagon))


class TestHPExtension:
    """全変動型の拡張"""

    def test_identity_square(self):
        ext = extend_hp(_identity_square())
        assert ext.certificate
        # ‖I‖_F · 面積 4 / (diam 2√2 · 周長 8)
        assert ext.report.ratio == pytest.approx(0.25)

    @pytest.mark.parametrize("seed", range(4))
    def test_star_boundaries(self, seed):
        bd = random_star_boundary(np.random.default_rng(seed))
        ext = extend_hp(bd)
        assert certify_homeomorphism(ext.g)
        assert np.allclose(ext.g.evaluate(bd.domain), bd.image, atol=1e-9)
        assert ext.report.ratio == pytest.approx(hp_ratio(ext.g, bd))
        assert 0.0 < ext.report.ratio < RATIO_BOUND

    def test_non_star_image(self):
        # 扇形分割の中心が取れない U 字形
        image = [
            (-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (0.6, 1.0),
            (0.6, -0.6), (-0.6, -0.6), (-0.6, 1.0), (-1.0, 1.0),
        ]
        domain = [
            (-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (0.6, 1.0),
            (0.2, 1.0), (-0.2, 1.0), (-0.6, 1.0), (-1.0, 1.0),
        ]
        ext = extend_hp(BoundaryData(domain, image))
        assert ext.certificate
        assert np.allclose(ext.g.evaluate(np.array(domain)), image, atol=1e-9)


class TestDegenerate:
    """ほぼ階数 1 の境界写像"""

    SQUASH = 0.02

    def _boundary(self):
        return BoundaryData.from_map(HALF_SQUARE, lambda p: p * np.array([1.0, self.SQUASH]), per_side=2)

    def test_preconditions(self):
        deviation, sup = degenerate_preconditions(self._boundary(), 1.0, 0.1, 1.0)
        assert deviation == pytest.approx(2.0 * self.SQUASH)
        assert sup == pytest.approx(1.0)

    def test_linear_squash(self):
        ext = extend_degenerate(self._boundary(), 1.0, 0.1, 1.0)
        assert ext.certificate
        assert ext.report.kind == "degenerate"
        # ‖Dg − diag(1, 0)‖_{L¹} = SQUASH · 面積 1
        assert ext.report.details["l1"] == pytest.approx(self.SQUASH, rel=1e-6)
        assert ext.report.ratio == pytest.approx(self.SQUASH / 0.1, rel=1e-6)

    def test_far_from_rank_one_rejected(self):
        bd = BoundaryData.from_map(HALF_SQUARE, lambda p: p * np.array([1.0, 0.5]))
        with pytest.raises(ValidationError, match="diag"):
            degenerate_preconditions(bd, 1.0, 0.1, 1.0)

    def test_domain_size_must_match_r0(self):
        with pytest.raises(ValidationError, match="r0"):
            degenerate_preconditions(self._boundary(), 1.0, 0.1, 0.45)

    @pytest.mark.parametrize("d, delta, r0", [(0.0, 0.1, 1.0), (1.0, -0.1, 1.0), (1.0, 0.1, 0.0)])
    def test_parameters_must_be_positive(self, d, delta, r0):
        with pytest.raises(ValidationError):
            degenerate_preconditions(self._boundary(), d, delta, r0)


class TestWidths:
    """測地幅の積分"""

    def test_identity_square(self):
        bd = _identity_square()
        assert width_integral(bd, (1.0, 0.0)) == pytest.approx(4.0, rel=1e-4)
        assert straight_width_integral(bd, (0.0, 1.0)) == pytest.approx(4.0, rel=1e-4)

    def test_geodesic_width_dominates_straight_width(self):
        bd = random_star_boundary(np.random.default_rng(5))
        for v in ((1.0, 0.0), (0.6, 0.8)):
            assert width_integral(bd, v) >= straight_width_integral(bd, v) - 1e-6

    def test_profile(self):
        profile = width_profile(_identity_square(), 0.0, samples=9)
        assert len(profile.s) == len(profile.widths) == 9
        assert np.allclose(profile.widths[1:-1], 2.0)
        assert profile.integral == pytest.approx(profile.integral_perp, rel=1e-4)


class TestComponentwise:
    """方向ごとの変動の評価"""

    def test_identity_square(self):
        ext = extend_componentwise(_identity_square(per_side=2), 0.3, 0.1)
        assert ext.certificate
        assert ext.report.kind == "componentwise"
        assert ext.report.slack >= 0.0
        details = ext.report.details
        assert details["variation_v"] <= details["budget_v"]
        assert details["variation_vperp"] <= details["budget_vperp"]


class TestBench:
    """ベンチマークとファイル入出力"""

    def test_corpus_is_deterministic(self):
        first, second = bench_corpus(3, 11), bench_corpus(3, 11)
        for a, b in zip(first, second):
            assert np.array_equal(a.image, b.image)
        assert all(4 <= bd.n <= MAX_BREAKS for bd in first)

    def test_run_bench(self, tmp_path):
        reports = run_bench(3, 2)
        assert len(reports) == 3
        assert all(r.kind == "hp" and np.isfinite(r.ratio) for r in reports)
        path = write_report_csv(reports, tmp_path / "bench.csv")
        with path.open(encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0]) == REPORT_COLUMNS
        assert len(rows) == 4

    def test_boundary_file(self, tmp_path):
        bd = random_star_boundary(np.random.default_rng(1), breaks=8)
        back = read_boundary(write_boundary(bd, tmp_path / "star.bd"))
        assert np.array_equal(back.domain, bd.domain)
        assert np.array_equal(back.image, bd.image)

    def test_unknown_record_reports_line(self):
        with pytest.raises(ValidationError) as info:
            parse_boundary_text("DOM 0 0\nPT 1 1\n")
        assert info.value.line == 2

    def test_unbalanced_records(self):
        with pytest.raises(ValidationError, match="one to one"):
            parse_boundary_text("DOM -1 -1\nDOM 1 -1\nDOM 0 1\nIMG -1 -1\n")

    def test_missing_boundary_file(self, tmp_path):
        with pytest.raises(ValidationError):
            read_boundary(tmp_path / "none.bd")


@pytest.mark.slow
class TestCorpora:
    """乱数コーパスでの比の上限"""

    def test_hp_bench_corpus(self):
        reports = run_bench(100, 0)
        assert len(reports) == 100
        ratios = np.array([r.ratio for r in reports])
        assert np.all(np.isfinite(ratios))
        assert ratios.max() <= RATIO_BOUND

    @pytest.mark.parametrize("delta", [0.1, 0.05, 0.01])
    def test_degenerate_corpus(self, delta):
        rng = np.random.default_rng(int(delta * 1000))
        for _ in range(20):
            d = rng.uniform(0.5, 1.5)
            base = BoundaryData.from_map(HALF_SQUARE, lambda p: p * np.array([d, delta / 8.0]), per_side=2)
            jitter = rng.uniform(-delta / 64.0, delta / 64.0, size=base.image.shape)
            bd = BoundaryData(base.domain, base.image + jitter)
            ext = extend_degenerate(bd, d, delta, 1.0)
            assert ext.certificate
            assert ext.report.ratio <= RATIO_BOUND
