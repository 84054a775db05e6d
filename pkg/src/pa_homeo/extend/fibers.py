"""
ファイバー方向のスラブ分解

方向 u に平行な切断線を境界の全折れ点に通し、隣り合う切断線の間 (スラブ) を
左右の鎖のジッパーで三角形に分ける。切断線の像は両端の φ の値を結ぶ経路
(直線、または 𝒫 内の測地線を少し内側へずらしたもの) で、定義域側の鎖は
その経路の弧長に比例して分ける。
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from ..core.errors import GeometryError
from ..geom.geodesic import GeodesicSolver
from ..geom.pa_map import PAHomeo
from ..geom.predicates import orient_sign
from ..geom.triangulation import Triangulation, signed_areas
from .boundary import BoundaryData

# 同じ切断線上とみなす距離 (𝒬 の直径に対する比)
CUT_TOL = 1e-12
# 測地線の折れ点を内側へ押し出す量 (像の最短辺に対する比)
PUSH_FRACTION = 1e-3

ROUTES = ("straight", "geodesic")


def fiber_frame(u: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    """(u, w): w は (w, u) が右手系になる横断方向"""
    fu = np.asarray(u, dtype=float)
    norm = float(np.hypot(*fu))
    if abs(norm - 1.0) > 1e-12:
        raise GeometryError("fiber direction must be a unit vector", {"norm": norm})
    return fu, np.array([fu[1], -fu[0]])


def cut_range(bd: BoundaryData, u: Sequence[float]) -> np.ndarray:
    """折れ点の横断座標 (昇順、重複なし)"""
    _, w = fiber_frame(u)
    s = np.sort(bd.domain @ w)
    keep = np.concatenate([[True], np.diff(s) > CUT_TOL * bd.diameter])
    return s[keep]


def fiber_chain(bd: BoundaryData, u: Sequence[float], s: float) -> Tuple[np.ndarray, np.ndarray]:
    """切断線 ⟨x, w⟩ = s と ∂𝒬 の交わり (⟨x, u⟩ の昇順) とその φ の値"""
    fu, w = fiber_frame(u)
    tol = CUT_TOL * bd.diameter
    pts: List[np.ndarray] = []
    imgs: List[np.ndarray] = []
    n = bd.n
    for i in range(n):
        j = (i + 1) % n
        a, b = bd.domain[i], bd.domain[j]
        sa, sb = float(a @ w), float(b @ w)
        if abs(sa - s) <= tol:
            pts.append(a)
            imgs.append(bd.image[i])
        if abs(sb - s) <= tol or not min(sa, sb) < s < max(sa, sb):
            continue
        frac = (s - sa) / (sb - sa)
        pts.append(a + frac * (b - a))
        imgs.append(bd.evaluate_on_side(i, frac))
    if not pts:
        raise GeometryError("cut misses the domain", {"s": s})
    order = np.argsort([float(p @ fu) for p in pts], kind="stable")
    chain_p: List[np.ndarray] = []
    chain_i: List[np.ndarray] = []
    for k in order:
        if chain_p and np.hypot(*(pts[k] - chain_p[-1])) <= tol:
            continue
        chain_p.append(pts[k])
        chain_i.append(imgs[k])
    return np.array(chain_p), np.array(chain_i)


def _cuts(bd: BoundaryData, u: np.ndarray, subdivisions: int) -> np.ndarray:
    base = cut_range(bd, u)
    parts = [base[:1]]
    for s0, s1 in zip(base[:-1], base[1:]):
        parts.append(np.linspace(s0, s1, subdivisions + 2)[1:])
    return np.concatenate(parts)


class _Router:
    """切断線の像の経路"""

    def __init__(
        self, bd: BoundaryData, u: np.ndarray, route: str, n_cuts: int, solver: Optional[GeodesicSolver] = None
    ):
        if route not in ROUTES:
            raise GeometryError(f"unknown fiber route: {route}", {"choices": ROUTES})
        self.route = route
        self.solver: Optional[GeodesicSolver] = None
        if route == "geodesic":
            self.solver = solver or GeodesicSolver(bd.image_polygon)
        _, w = fiber_frame(u)
        self.vertex_s: Dict[Tuple[float, float], float] = {
            (float(p[0]), float(p[1])): float(q @ w) for p, q in zip(bd.image, bd.domain)
        }
        self.cut_step = max(1e-300, float(np.ptp(bd.domain @ w)) / max(1, n_cuts))
        shortest = float(np.hypot(*(np.roll(bd.image, -1, axis=0) - bd.image).T).min())
        self.push = PUSH_FRACTION * shortest / max(1, n_cuts)

    def path(self, s: float, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        if self.solver is None:
            return np.array([a, b])
        pts = self.solver.shortest_path(a, b).points
        if len(pts) <= 2:
            return np.array([a, b])
        out = [pts[0]]
        for k in range(1, len(pts) - 1):
            prev, here, nxt = pts[k - 1], pts[k], pts[k + 1]
            e1 = (here - prev) / np.hypot(*(here - prev))
            e2 = (nxt - here) / np.hypot(*(nxt - here))
            out_dir = e1 - e2
            norm = float(np.hypot(*out_dir))
            if norm == 0.0:
                continue
            # 折れ点の頂点に近い切断線ほど内側を回る
            rank = abs(s - self.vertex_s.get((float(here[0]), float(here[1])), s)) / self.cut_step
            out.append(here + self.push * (1.0 + rank) * out_dir / norm)
        out.append(pts[-1])
        return np.array(out)


@dataclass
class _Assembly:
    vertices: List[np.ndarray]
    images: List[np.ndarray]
    triangles: List[Tuple[int, int, int]]

    def add(self, p: np.ndarray, q: np.ndarray) -> int:
        self.vertices.append(np.asarray(p, dtype=float))
        self.images.append(np.asarray(q, dtype=float))
        return len(self.vertices) - 1


def _chain_indices(
    asm: _Assembly, pts: np.ndarray, imgs: np.ndarray, router: _Router, s: float, seen: Dict[Tuple[float, float], int]
) -> List[int]:
    def vertex(p: np.ndarray, q: np.ndarray) -> int:
        key = (float(p[0]), float(p[1]))
        if key not in seen:
            seen[key] = asm.add(p, q)
        return seen[key]

    if len(pts) != 2:
        return [vertex(p, q) for p, q in zip(pts, imgs)]
    route = router.path(s, imgs[0], imgs[1])
    steps = np.hypot(*np.diff(route, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(steps)]) / steps.sum()
    idx = [vertex(pts[0], imgs[0])]
    for k in range(1, len(route) - 1):
        idx.append(asm.add(pts[0] + cum[k] * (pts[1] - pts[0]), route[k]))
    idx.append(vertex(pts[1], imgs[1]))
    return idx


def zipper(left: List[int], right: List[int], asm: _Assembly) -> Optional[List[Tuple[int, int, int]]]:
    """左右の鎖 (下から上) の間を像が正の向きになる三角形で埋める"""
    img = asm.images
    dom = asm.vertices
    i = j = 0
    out: List[Tuple[int, int, int]] = []

    def frac(chain: List[int], k: int) -> float:
        lo, hi = dom[chain[0]], dom[chain[-1]]
        span = float(np.hypot(*(hi - lo)))
        return float(np.hypot(*(dom[chain[k]] - lo))) / span if span > 0 else 1.0

    while i < len(left) - 1 or j < len(right) - 1:
        can_r = j < len(right) - 1 and orient_sign(img[left[i]], img[right[j]], img[right[j + 1]]) > 0
        can_l = i < len(left) - 1 and orient_sign(img[left[i]], img[right[j]], img[left[i + 1]]) > 0
        if can_r and can_l:
            can_r = frac(right, j + 1) <= frac(left, i + 1)
            can_l = not can_r
        if can_r:
            out.append((left[i], right[j], right[j + 1]))
            j += 1
        elif can_l:
            out.append((left[i], right[j], left[i + 1]))
            i += 1
        else:
            return None
    return out


def fiber_extension(
    bd: BoundaryData,
    u: Sequence[float],
    subdivisions: int = 0,
    route: str = "straight",
    solver: Optional[GeodesicSolver] = None,
) -> Optional[PAHomeo]:
    """u 方向のファイバーに沿った区分アフィン拡張。ジッパーが組めなければ None"""
    fu, _ = fiber_frame(u)
    cuts = _cuts(bd, fu, subdivisions)
    router = _Router(bd, fu, route, len(cuts), solver)
    asm = _Assembly([], [], [])
    seen: Dict[Tuple[float, float], int] = {}
    chains = []
    for s in cuts:
        pts, imgs = fiber_chain(bd, fu, float(s))
        chains.append(_chain_indices(asm, pts, imgs, router, float(s), seen))
    for k, (left, right) in enumerate(zip(chains[:-1], chains[1:])):
        tris = zipper(left, right, asm)
        if tris is None:
            logger.debug(f"Fiber slab {k} along {tuple(fu)} has no positively oriented zipper")
            return None
        asm.triangles.extend(tris)
    verts = np.array(asm.vertices)
    tris_arr = np.array(asm.triangles, dtype=int)
    if np.any(signed_areas(verts, tris_arr) <= 0):
        return None
    try:
        return PAHomeo(Triangulation(verts, tris_arr), np.array(asm.images))
    except np.linalg.LinAlgError:
        return None
