"""変動の小さい長方形の選択"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from ..core.errors import ValidationError
from ..grid.admissibility import DEFAULT_RADII, check_admissible
from ..grid.grids import StraightGrid
from ..mapcat.catalogue import TestMap, square_polygon
from ..mapcat.measures import Rect
from ..mapcat.onedbv import line_variation
from ..utils.sampling import DEFAULT_BUDGET, Rejected, SamplingLedger, rejection_sample

# |Df|(Q(p, r)) < σr / DENSITY_FACTOR を満たす r を探す
DENSITY_FACTOR = 33.0


@dataclass(frozen=True)
class SmallRectangle:
    """境界の接線方向の変動が σ/4 未満の長方形"""
    rect: Rect
    r: float
    side_variations: Tuple[float, float, float, float]
    grid: StraightGrid
    attempts: int = 1

    @property
    def boundary_variation(self) -> float:
        return float(sum(self.side_variations))


def rect_side_variations(f: TestMap, rect: Rect) -> Tuple[float, float, float, float]:
    """下・右・上・左の辺の 1 次元変動"""
    c = rect.polygon()
    return tuple(line_variation(f, c[k], c[(k + 1) % 4]) for k in range(4))  # type: ignore[return-value]


def density_scale(f: TestMap, p: Sequence[float], sigma: float, levels: Sequence[int] = range(2, 21)) -> Optional[float]:
    """|Df|(Q(p, 2⁻ʲ)) < σ·2⁻ʲ/33 となる最大の 2⁻ʲ (正方形に収まるもの)"""
    x0, y0 = float(p[0]), float(p[1])
    room = 1.0 - max(abs(x0), abs(y0))
    for j in levels:
        r = 2.0 ** -j
        if r >= room:
            continue
        if f.measure(square_polygon((x0, y0), r), "total") < sigma * r / DENSITY_FACTOR:
            return r
    return None


def select_small_tv_rectangle(
    f: TestMap,
    p: Sequence[float],
    sigma: float,
    rng: Optional[np.random.Generator] = None,
    budget: int = DEFAULT_BUDGET,
    radii: Sequence[float] = DEFAULT_RADII,
) -> SmallRectangle:
    """p の周りで、各辺の変動 < σ/16、境界全体 < σ/4 の長方形を選ぶ

    角の座標は x₁ ∈ (x₀ − r, x₀ − r/2)、x₂ ∈ (x₀ + r/2, x₀ + r) (y も同様) から引く。
    """
    if sigma <= 0.0:
        raise ValidationError("sigma must be positive", {"sigma": sigma})
    x0, y0 = float(p[0]), float(p[1])
    r = density_scale(f, (x0, y0), sigma)
    if r is None:
        raise ValidationError(
            "density of |Df| stays above sigma/33 at every scanned radius",
            {"point": (x0, y0), "sigma": sigma},
        )
    side_cap = sigma / 16.0

    def draw(gen: np.random.Generator) -> SmallRectangle:
        x1, x2 = x0 - r + 0.5 * r * gen.random(), x0 + 0.5 * r + 0.5 * r * gen.random()
        y1, y2 = y0 - r + 0.5 * r * gen.random(), y0 + 0.5 * r + 0.5 * r * gen.random()
        rect = Rect(x1, x2, y1, y2)
        sides = rect_side_variations(f, rect)
        worst = max(sides)
        if worst >= side_cap or sum(sides) >= sigma / 4.0:
            raise Rejected("side variation too large", worst, variation=worst)
        grid = StraightGrid((x1, x2), (y1, y2))
        report = check_admissible(grid, f, radii)
        if not report.ok:
            raise Rejected("generated grid not admissible", float(len(report.failures)), conditions=report.failed_conditions)
        return SmallRectangle(rect, r, sides, grid)

    generator = rng if rng is not None else np.random.default_rng(0)
    ledger: SamplingLedger[SmallRectangle] = rejection_sample(draw, generator, budget, what="small-variation rectangle")
    assert ledger.value is not None
    out = ledger.value
    logger.debug(f"Small-variation rectangle at ({x0:.4f}, {y0:.4f}): r={r:.3e}, boundary {out.boundary_variation:.3e}")
    return SmallRectangle(out.rect, out.r, out.side_variations, out.grid, ledger.attempts)
