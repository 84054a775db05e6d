"""
グリッドと許容性判定のテスト
"""

import numpy as np
import pytest

from pa_homeo.core.errors import GeometryError, ValidationError
from pa_homeo.geom.primitives import Polyline, Segment, as_point
from pa_homeo.grid.admissibility import check_admissible, density_vanishes, sample_admissible_straight_grid
from pa_homeo.grid.grids import NonStraightGrid, StraightGrid, generate_straight_grid, validate_nonstraight_grid
from pa_homeo.grid.io import grid_lines, parse_grid_text, read_grid, write_grid


def _curves(*point_lists):
    return NonStraightGrid.from_curves(Polyline.from_points(p) for p in point_lists)


TILTED = (
    [(-1.0, -0.6), (1.0, 0.4)],
    [(0.3, -1.0), (-0.2, 1.0)],
)


class TestStraightGrid:
    """直線グリッド"""

    def test_coordinates_are_sorted(self):
        grid = StraightGrid((0.5, -0.25), (0.1,))
        assert grid.x_coords == (-0.25, 0.5)
        assert grid.n_lines == 3

    @pytest.mark.parametrize("xs", [(1.0,), (-1.5,), (0.2, 0.2)])
    def test_bad_coordinates(self, xs):
        with pytest.raises(ValidationError):
            StraightGrid(xs, ())

    def test_cells_tile_the_square(self):
        grid = StraightGrid((0.0,), (0.5,))
        cells = grid.cells()
        assert len(cells) == 4
        assert sum(c.area for c in cells) == pytest.approx(4.0)

    def test_conversion_keeps_the_crossings(self):
        grid = StraightGrid((-0.5, 0.5), (0.25,)).to_nonstraight()
        assert grid.n_curves == 3
        assert sorted(grid.crossings) == [(0, 2), (1, 2)]
        assert validate_nonstraight_grid(grid).ok

    def test_generated_grid_contains_every_segment(self):
        segments = [
            Segment(as_point((0.1, -0.5)), as_point((0.1, 0.5))),
            Segment(as_point((-0.3, 0.2)), as_point((0.6, 0.2))),
        ]
        grid = generate_straight_grid(segments)
        assert grid.x_coords == (0.1,)
        assert grid.y_coords == (0.2,)

    def test_oblique_segment_rejected(self):
        with pytest.raises(GeometryError):
            generate_straight_grid([Segment(as_point((0.0, 0.0)), as_point((0.5, 0.5)))])


class TestNonStraightGrid:
    """非直線グリッドの妥当性"""

    def test_single_crossing(self):
        validation = validate_nonstraight_grid(_curves(*TILTED))
        assert validation.ok
        assert list(validation.crossings) == [(0, 1)]

    def test_two_crossings_rejected(self):
        zigzag = [(-1.0, 0.0), (-0.5, 0.5), (0.0, -0.5), (0.5, 0.5), (1.0, 0.0)]
        validation = validate_nonstraight_grid(_curves(zigzag, [(-1.0, 0.1), (1.0, 0.1)]))
        assert not validation
        assert validation.failures[0][0] == "curves meet more than once"

    def test_overlap_rejected(self):
        validation = validate_nonstraight_grid(_curves([(-1.0, 0.0), (0.5, 0.0)], [(0.0, 0.0), (1.0, 0.0)]))
        assert validation.failures[0][0] == "curves overlap"


class TestGridFiles:
    """グリッド記述ファイル"""

    def test_straight_records(self):
        grid = parse_grid_text("# two lines\nX 0.25\nY -0.5\n")
        assert grid == StraightGrid((0.25,), (-0.5,))

    def test_curve_blocks(self):
        grid = parse_grid_text("CURVE 2\n-1 -0.6\n1 0.4\nCURVE 2\n0.3 -1\n-0.2 1\n")
        assert isinstance(grid, NonStraightGrid)
        assert grid.n_curves == 2

    def test_unknown_record_reports_line(self):
        with pytest.raises(ValidationError) as info:
            parse_grid_text("X 0.1\nZ 0.2\n")
        assert info.value.line == 2

    def test_short_curve_block(self):
        with pytest.raises(ValidationError) as info:
            parse_grid_text("CURVE 3\n0 0\n0.5 0.5\n")
        assert info.value.line == 1

    def test_mixed_records_rejected(self):
        with pytest.raises(ValidationError):
            parse_grid_text("X 0.1\nCURVE 2\n0 0\n0.5 0.5\n")

    def test_written_grid_reads_back(self, tmp_path):
        grid = _curves(*TILTED)
        back = read_grid(write_grid(grid, tmp_path / "tilted.grid"))
        assert grid_lines(back) == grid_lines(grid)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ValidationError):
            read_grid(tmp_path / "none.grid")


class TestAdmissibility:
    """5 条件の判定"""

    def test_identity_straight_grid(self, identity_map):
        report = check_admissible(StraightGrid((-0.3, 0.4), (0.1,)), identity_map)
        assert report.ok
        assert len(report.special_points) > 0

    def test_line_crossing_the_crack(self, fracture_map):
        report = check_admissible(StraightGrid((0.3,), (0.0,)), fracture_map)
        assert report.ok
        assert report.transversality == pytest.approx((1.0,))
        assert report.good

    def test_line_along_the_crack(self, fracture_map):
        report = check_admissible(StraightGrid((0.0,), (0.7,)), fracture_map)
        assert not report.ok
        assert 1 in report.failed_conditions

    def test_curve_vertex_on_the_crack(self, fracture_map):
        grid = _curves([(-1.0, -0.6), (0.0, 0.0), (1.0, 0.3)])
        report = check_admissible(grid, fracture_map)
        assert 2 in report.failed_conditions

    def test_tilted_grid_for_the_identity(self, identity_map):
        assert check_admissible(_curves(*TILTED), identity_map).ok

    def test_invalid_non_straight_grid(self, identity_map):
        zigzag = [(-1.0, 0.0), (-0.5, 0.5), (0.0, -0.5), (0.5, 0.5), (1.0, 0.0)]
        with pytest.raises(ValidationError):
            check_admissible(_curves(zigzag, [(-1.0, 0.1), (1.0, 0.1)]), identity_map)

    def test_density_sequence(self):
        assert density_vanishes([0.1, 0.01, 0.001, 0.0001], 1e-3)
        assert not density_vanishes([0.1, 0.01, 0.02, 0.0001], 1e-3)
        assert not density_vanishes([0.4, 0.4, 0.4], 1e-3)

    def test_sampled_grid_is_admissible(self, fracture_map):
        grid = sample_admissible_straight_grid(fracture_map, 2, 2, np.random.default_rng(3))
        assert grid.n_lines == 4
        assert check_admissible(grid, fracture_map).ok
