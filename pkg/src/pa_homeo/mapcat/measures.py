"""
測度クエリ: |Df|, |D^a f|, |D^s f|, |⟨Df, v⟩| を長方形や正方形の和で求める
"""

from dataclasses import dataclass
from typing import Iterable, List, NamedTuple, Optional, Sequence

import numpy as np

from .catalogue import Region, TestMap, square_polygon


class Rect(NamedTuple):
    """軸平行な長方形 [x0, x1) × [y0, y1)"""
    x0: float
    x1: float
    y0: float
    y1: float

    @classmethod
    def square(cls, center: Sequence[float], r: float) -> "Rect":
        """Q(p, r)"""
        return cls(center[0] - r, center[0] + r, center[1] - r, center[1] + r)

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    @property
    def center(self) -> np.ndarray:
        return np.array([0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1)])

    def polygon(self) -> np.ndarray:
        return np.array([[self.x0, self.y0], [self.x1, self.y0], [self.x1, self.y1], [self.x0, self.y1]])

    def boundary(self) -> np.ndarray:
        """反時計回りの閉じた境界 (始点を繰り返す)"""
        poly = self.polygon()
        return np.vstack([poly, poly[:1]])

    def split(self, x: float, y: float) -> List["Rect"]:
        return [
            Rect(self.x0, x, self.y0, y),
            Rect(x, self.x1, self.y0, y),
            Rect(self.x0, x, y, self.y1),
            Rect(x, self.x1, y, self.y1),
        ]


@dataclass(frozen=True)
class MeasureReport:
    """ある領域での測度の内訳 (ノルムの選択も記録する)"""
    total: float
    ac: float
    sing: float
    partial_x: float
    partial_y: float
    norm: str = "frobenius"

    @property
    def mstrict(self) -> float:
        """|D₁f| + |D₂f|"""
        return self.partial_x + self.partial_y


def measure_query(f: TestMap, region: Region, which: str = "total", direction: Optional[Sequence[float]] = None) -> float:
    """閉形式の測度 (互いに素な長方形について加法的)"""
    return f.measure(region, which, direction)


def measure_union(f: TestMap, regions: Iterable[Region], which: str = "total", direction: Optional[Sequence[float]] = None) -> float:
    """互いに素な領域の和での測度"""
    return float(sum(f.measure(r, which, direction) for r in regions))


def measure_report(f: TestMap, region: Region) -> MeasureReport:
    ac = f.measure(region, "ac")
    sing = f.measure(region, "sing")
    return MeasureReport(
        total=ac + sing,
        ac=ac,
        sing=sing,
        partial_x=f.measure(region, "directional", (1.0, 0.0)),
        partial_y=f.measure(region, "directional", (0.0, 1.0)),
    )


def density_ratio(f: TestMap, point: Sequence[float], r: float) -> float:
    """r⁻¹ |Df|(Q(p, r))"""
    return f.measure(square_polygon(point, r), "total") / r


_CORNERS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])


def distance_to_jumps(f: TestMap, pts: np.ndarray) -> np.ndarray:
    out = np.full(len(pts), np.inf)
    for piece in f.jumps:
        d = piece.end - piece.start
        t = np.clip(((pts - piece.start) @ d) / float(d @ d), 0.0, 1.0)
        nearest = piece.start + t[:, None] * d
        out = np.minimum(out, np.hypot(*(pts - nearest).T))
    return out


def density_ratios(f: TestMap, points: np.ndarray, r: float) -> np.ndarray:
    """多数の点での r⁻¹ |Df|(Q(p, r))

    Q(p, r) が 1 つのセルに収まりジャンプから離れていれば 4r·|∇f|、
    それ以外は density_ratio で正確に測る
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.empty(len(pts))
    if len(pts) == 0:
        return out
    corners = (pts[:, None, :] + r * _CORNERS[None, :, :]).reshape(-1, 2)
    owner = f.cell_index(corners).reshape(-1, 4)
    single = np.all(owner == owner[:, :1], axis=1) & (owner[:, 0] >= 0)
    if f.jumps:
        single &= distance_to_jumps(f, pts) > r * np.sqrt(2.0) * (1.0 + 1e-9)
    norms = np.array([c.frobenius for c in f.cells])
    out[single] = 4.0 * r * norms[owner[single, 0]]
    for idx in np.flatnonzero(~single):
        out[idx] = density_ratio(f, pts[idx], r)
    return out
