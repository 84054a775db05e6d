"""
経路の補題: 長さがほぼ最短の経路は線分から離れない、
および一般化線分 (長方形の辺の点どうしを結ぶ 1 本か 2 本の線分)
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..core.errors import GeometryError, StageFailure, ValidationError
from ..geom.primitives import Polyline
from ..mapcat.measures import Rect

# 辺上にあるとみなす距離
SIDE_TOL = 1e-12


@dataclass(frozen=True)
class RepetitionCheck:
    """max_t |η(t) − γ(t)| と上界 √(3ε + 12δ)·L"""
    deviation: float
    bound: float
    length: float

    @property
    def ok(self) -> bool:
        return self.deviation <= self.bound


def _constant_speed_samples(path: Polyline, extra: np.ndarray) -> np.ndarray:
    cum = path.cumulative_lengths()
    return np.unique(np.concatenate([cum / cum[-1], extra]))


def repetition_bound(
    X: Sequence[float],
    Y: Sequence[float],
    C: Sequence[float],
    D: Sequence[float],
    eta: Polyline,
    eps: float,
    delta: float,
) -> RepetitionCheck:
    """C から D への経路 η と線分 [XY] の一定速度パラメータでのずれを測る

    |C − X| ≤ δL、|D − Y| ≤ δL、長さ(η) ≤ (1 + ε)L のとき
    ずれは √(3ε + 12δ)·L 以下になる。
    """
    x, y = np.asarray(X, dtype=float), np.asarray(Y, dtype=float)
    c, d = np.asarray(C, dtype=float), np.asarray(D, dtype=float)
    L = float(np.hypot(*(y - x)))
    if L <= 0.0:
        raise ValidationError("X and Y must be distinct")
    if eps < 0.0 or delta < 0.0:
        raise ValidationError("eps and delta must be non-negative", {"eps": eps, "delta": delta})
    pts = eta.array()
    tol = 1e-12 * max(1.0, L)
    if np.hypot(*(pts[0] - c)) > tol or np.hypot(*(pts[-1] - d)) > tol:
        raise ValidationError("path must run from C to D")
    if np.hypot(*(c - x)) > delta * L + tol or np.hypot(*(d - y)) > delta * L + tol:
        raise ValidationError("end points are farther than delta * L", {"C-X": float(np.hypot(*(c - x))), "D-Y": float(np.hypot(*(d - y)))})
    if eta.length > (1.0 + eps) * L + tol:
        raise ValidationError("path is longer than (1 + eps) * L", {"length": eta.length, "limit": (1.0 + eps) * L})
    # 差 η(t) − γ(t) は η の折れ点の間で線形なので、最大は折れ点で取る
    t = _constant_speed_samples(eta, np.array([0.0, 1.0]))
    gamma = x[None, :] + t[:, None] * (y - x)[None, :]
    deviation = float(np.hypot(*(eta.point_at(t) - gamma).T).max())
    check = RepetitionCheck(deviation, float(np.sqrt(3.0 * eps + 12.0 * delta) * L), L)
    if not check.ok:
        raise StageFailure("path leaves the repetition bound", {"deviation": check.deviation, "bound": check.bound})
    return check


def rect_sides(rect: Rect, p: Sequence[float], tol: float = SIDE_TOL) -> List[int]:
    """点を含む辺の番号 (0 下, 1 右, 2 上, 3 左)"""
    x, y = float(p[0]), float(p[1])
    inside_x = rect.x0 - tol <= x <= rect.x1 + tol
    inside_y = rect.y0 - tol <= y <= rect.y1 + tol
    sides = []
    if inside_x and abs(y - rect.y0) <= tol:
        sides.append(0)
    if inside_y and abs(x - rect.x1) <= tol:
        sides.append(1)
    if inside_x and abs(y - rect.y1) <= tol:
        sides.append(2)
    if inside_y and abs(x - rect.x0) <= tol:
        sides.append(3)
    return sides


_INWARD = {0: (0.0, 1.0), 1: (-1.0, 0.0), 2: (0.0, -1.0), 3: (1.0, 0.0)}


@dataclass(frozen=True)
class GeneralizedSegment:
    """長方形 R の境界上の X, Y を結ぶ経路

    X と Y が同じ辺にあれば、[XY] の中点の真上 (内側) で
    辺からの距離 ξ|X − Y|/2 の点 M を経由する。
    """
    X: Tuple[float, float]
    Y: Tuple[float, float]
    xi: float
    M: Optional[Tuple[float, float]] = None

    @classmethod
    def build(cls, X: Sequence[float], Y: Sequence[float], rect: Rect, xi: float) -> "GeneralizedSegment":
        if not 0.0 < xi < 1.0:
            raise ValidationError("xi must lie in (0, 1)", {"xi": xi})
        sx, sy = rect_sides(rect, X), rect_sides(rect, Y)
        if not sx or not sy:
            raise GeometryError("end points must lie on the rectangle boundary", {"X": tuple(X), "Y": tuple(Y)})
        x = (float(X[0]), float(X[1]))
        y = (float(Y[0]), float(Y[1]))
        if x == y:
            raise GeometryError("generalized segment needs distinct end points", {"X": x})
        common = sorted(set(sx) & set(sy))
        if not common:
            return cls(x, y, xi)
        inward = np.array(_INWARD[common[0]])
        mid = 0.5 * (np.array(x) + np.array(y))
        apex = mid + 0.5 * xi * float(np.hypot(x[0] - y[0], x[1] - y[1])) * inward
        return cls(x, y, xi, (float(apex[0]), float(apex[1])))

    @property
    def straight(self) -> bool:
        return self.M is None

    def polyline(self) -> Polyline:
        pts = [self.X, self.Y] if self.M is None else [self.X, self.M, self.Y]
        return Polyline.from_points(pts)

    @property
    def length(self) -> float:
        return self.polyline().length

    def subpath_ratio(self, a: float, b: float) -> float:
        """部分経路 [a, b] (正規化パラメータ) の長さ / 直径"""
        if not 0.0 <= a < b <= 1.0:
            raise ValidationError("subpath needs 0 <= a < b <= 1", {"a": a, "b": b})
        sub = self.polyline().subpath(a, b).array()
        diff = sub[:, None, :] - sub[None, :, :]
        diam = float(np.sqrt((diff ** 2).sum(axis=2)).max())
        return float(np.hypot(*np.diff(sub, axis=0).T).sum()) / diam
