"""
凸多角形の境界上の区分線形単射 φ: ∂𝒬 → ℝ²

定義域の折れ点と像の折れ点を同じ順序で対応させて持つ。
φ は辺ごとの線形補間。
"""

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from ..core.errors import GeometryError
from ..geom.primitives import Polyline, SimplePolygon, is_injective_polyline, signed_area

# 辺上の点とみなす距離
ON_SIDE_TOL = 1e-12
# 折れ点での曲がり (sin) がこれ以下なら辺の途中の点とみなす
TURN_TOL = 1e-9
# これより近い定義域の折れ点は同じ点とみなす
BREAK_TOL = 1e-11
# 隣の 2 点を結ぶ弦から内側へこれ以上へこむ点があれば凸でない
CONVEX_TOL = 1e-12


def turn_sines(points: np.ndarray) -> np.ndarray:
    """閉じた折れ線の各頂点での曲がり角の sin (左折で正)"""
    prev = points - np.roll(points, 1, axis=0)
    nxt = np.roll(points, -1, axis=0) - points
    cross = prev[:, 0] * nxt[:, 1] - prev[:, 1] * nxt[:, 0]
    return cross / (np.hypot(*prev.T) * np.hypot(*nxt.T))


def chord_heights(points: np.ndarray) -> np.ndarray:
    """各頂点の、両隣を結ぶ弦からの符号つき距離 (左折で正)"""
    prev = points - np.roll(points, 1, axis=0)
    nxt = np.roll(points, -1, axis=0) - points
    cross = prev[:, 0] * nxt[:, 1] - prev[:, 1] * nxt[:, 0]
    return cross / np.maximum(np.hypot(*(prev + nxt).T), np.finfo(float).tiny)


def repeated_breaks(points: np.ndarray, tol: float = BREAK_TOL) -> np.ndarray:
    """閉じた折れ線で、次の点と tol 以内にある点の番号"""
    gaps = np.hypot(*(np.roll(points, -1, axis=0) - points).T)
    return np.flatnonzero(gaps <= tol)


@dataclass(frozen=True)
class BoundaryData:
    """𝒬 (反時計回りの凸多角形) と境界写像 φ の折れ点対応"""
    domain: np.ndarray
    image: np.ndarray

    def __post_init__(self) -> None:
        dom = np.asarray(self.domain, dtype=float).reshape(-1, 2)
        img = np.asarray(self.image, dtype=float).reshape(-1, 2)
        if len(dom) != len(img):
            raise GeometryError(
                "break-point counts differ between domain and image",
                {"domain": len(dom), "image": len(img)},
            )
        if len(dom) < 3:
            raise GeometryError("boundary data needs at least three break points")
        repeats = repeated_breaks(dom)
        if repeats.size:
            raise GeometryError("domain has a repeated break point", {"index": int(repeats[0])})
        if signed_area(dom) <= 0 or np.any(chord_heights(dom) < -CONVEX_TOL):
            raise GeometryError("domain must be a counterclockwise convex polygon")
        ok, pair = is_injective_polyline(Polyline.from_points(img), closed=True)
        if not ok:
            raise GeometryError("boundary map is not injective", {"segments": pair})
        if signed_area(img) <= 0:
            raise GeometryError("boundary map reverses orientation")
        object.__setattr__(self, "domain", dom)
        object.__setattr__(self, "image", img)

    @classmethod
    def from_map(
        cls,
        domain: Sequence[Sequence[float]],
        fn: Callable[[np.ndarray], np.ndarray],
        per_side: int = 1,
    ) -> "BoundaryData":
        """fn の境界への制限を、各辺を per_side 等分した折れ点で区分線形化する"""
        corners = np.asarray(domain, dtype=float)
        pts = []
        for i in range(len(corners)):
            a, b = corners[i], corners[(i + 1) % len(corners)]
            for k in range(per_side):
                pts.append(a + (k / per_side) * (b - a))
        dom = np.array(pts)
        return cls(dom, np.asarray(fn(dom), dtype=float))

    @property
    def n(self) -> int:
        return len(self.domain)

    @property
    def image_polygon(self) -> SimplePolygon:
        return SimplePolygon.from_points(self.image)

    @property
    def diameter(self) -> float:
        diff = self.domain[:, None, :] - self.domain[None, :, :]
        return float(np.sqrt((diff ** 2).sum(axis=2)).max())

    def side_vectors(self) -> Tuple[np.ndarray, np.ndarray]:
        """(定義域の辺ベクトル, 像の辺ベクトル)"""
        return (
            np.roll(self.domain, -1, axis=0) - self.domain,
            np.roll(self.image, -1, axis=0) - self.image,
        )

    def boundary_variation(self) -> float:
        """∫_{∂𝒬} |D_τ φ| (= 像の周長)"""
        return float(np.hypot(*self.side_vectors()[1].T).sum())

    def tangential_derivatives(self) -> np.ndarray:
        """辺ごとの D_τ φ"""
        dv, iv = self.side_vectors()
        return iv / np.hypot(*dv.T)[:, None]

    def evaluate_on_side(self, side: int, frac: float) -> np.ndarray:
        a, b = self.image[side], self.image[(side + 1) % self.n]
        return a + frac * (b - a)

    def locate_on_boundary(self, p: Sequence[float], tol: float = ON_SIDE_TOL) -> Optional[Tuple[int, float]]:
        """境界上の点の (辺番号, 辺内の割合)。境界上になければ None"""
        q = np.asarray(p, dtype=float)
        scale = max(1.0, self.diameter)
        for i in range(self.n):
            a, b = self.domain[i], self.domain[(i + 1) % self.n]
            d = b - a
            t = float((q - a) @ d) / float(d @ d)
            if -tol <= t <= 1.0 + tol and np.hypot(*(a + t * d - q)) <= tol * scale:
                return i, min(1.0, max(0.0, t))
        return None

    def phi(self, p: Sequence[float]) -> np.ndarray:
        """境界上の点での φ"""
        hit = self.locate_on_boundary(p)
        if hit is None:
            raise GeometryError("point is not on the domain boundary", {"point": tuple(np.asarray(p, dtype=float))})
        return self.evaluate_on_side(*hit)

    def scaled(self, s: float) -> "BoundaryData":
        return BoundaryData(s * self.domain, s * self.image)
