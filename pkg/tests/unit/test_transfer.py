"""
非直線グリッドから直線グリッドへの移し替えのテスト
"""

import numpy as np
import pytest

from pa_homeo.core.errors import ValidationError
from pa_homeo.geom.primitives import Polyline
from pa_homeo.grid.admissibility import check_admissible
from pa_homeo.grid.grids import NonStraightGrid
from pa_homeo.mapcat.catalogue import make_catalogue_map
from pa_homeo.rep.transfer import transfer_nonstraight_to_straight


def _grid(*point_lists):
    return NonStraightGrid.from_curves(Polyline.from_points(p) for p in point_lists)


TILTED = _grid([(-1.0, -0.6), (1.0, 0.4)], [(0.3, -1.0), (-0.2, 1.0)])
# x = 0 を y = -0.1 で 1 回だけ横切る斜めの線
DIAGONAL = _grid([(-1.0, -0.6), (1.0, 0.4)])


@pytest.fixture(scope="module")
def identity_transfer():
    """恒等写像で TILTED を移し替えたもの (テスト間で共有する)"""
    return transfer_nonstraight_to_straight(make_catalogue_map("identity"), TILTED, 0.5, rng=np.random.default_rng(0))


class TestTransfer:
    """Γ̃、Γ̂ と対応 g"""

    def test_identity_structure(self, identity_transfer):
        assert len(identity_transfer.paths) == 4
        assert len(identity_transfer.spirals) == 1
        assert identity_transfer.bypasses == ()
        assert identity_transfer.admissibility.ok

    def test_sub_grid_lies_on_the_straight_grid(self, identity_transfer):
        grid = identity_transfer.grid
        for path in identity_transfer.sub_grid:
            for seg in path.segments:
                mid = 0.5 * (np.array(seg.a, dtype=float) + np.array(seg.b, dtype=float))
                assert grid.contains_point(mid, tol=1e-12)

    def test_identity_guarantee(self, identity_transfer):
        assert identity_transfer.guarantee_error() < identity_transfer.sigma
        assert identity_transfer.check_guarantee(identity_transfer.h_straight)
        assert np.isfinite(identity_transfer.distortion())

    def test_far_approximation_is_refused(self, identity_transfer):
        shifted = lambda a, t: identity_transfer.h_straight(a, t) + 1.0  # noqa: E731
        with pytest.raises(ValidationError):
            identity_transfer.check_guarantee(shifted)

    def test_corner_end_points_rejected(self, identity_map):
        with pytest.raises(ValidationError):
            transfer_nonstraight_to_straight(identity_map, _grid([(-1.0, -1.0), (1.0, 0.2)]), 0.5)

    def test_sigma_must_be_positive(self, identity_map):
        with pytest.raises(ValidationError):
            transfer_nonstraight_to_straight(identity_map, TILTED, 0.0)

    @pytest.mark.slow
    def test_fracture_single_bypass(self, fracture_map):
        assert check_admissible(DIAGONAL, fracture_map).ok
        sigma = 0.05
        out = transfer_nonstraight_to_straight(fracture_map, DIAGONAL, sigma, rng=np.random.default_rng(0))
        assert len(out.bypasses) == 1
        bypass = out.bypasses[0]
        assert bypass.size == pytest.approx(0.2)
        assert max(bypass.endpoint_errors) <= 4.0 * (sigma / 100.0) ** 2
        assert out.guarantee_error(samples=200) < sigma
