"""
凸セル分割上の区分アフィン写像

各セルで f(x) = A x + c。隣接セルの写像が共有辺上で一致しない部分が
ジャンプ集合になり、f⁺ − f⁻ は辺に沿ってアフィンに変化する。
"""

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import quad

from ..core.errors import ValidationError
from ..geom.polygon import clip_convex, polygon_area

# セル境界判定の許容差
CELL_TOL = 1e-12
# これ未満の |f⁺ − f⁻| は連続とみなす
JUMP_TOL = 1e-13


@dataclass(frozen=True)
class Cell:
    """反時計回りの凸多角形とその上のアフィン写像"""
    polygon: np.ndarray
    matrix: np.ndarray
    offset: np.ndarray

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.matrix.T + self.offset

    def contains(self, points: np.ndarray, tol: float = CELL_TOL) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        mask = np.ones(len(pts), dtype=bool)
        n = len(self.polygon)
        for i in range(n):
            a, b = self.polygon[i], self.polygon[(i + 1) % n]
            edge = b - a
            scale = max(1.0, float(np.hypot(*edge)))
            cross = edge[0] * (pts[:, 1] - a[1]) - edge[1] * (pts[:, 0] - a[0])
            mask &= cross >= -tol * scale
        return mask

    @property
    def area(self) -> float:
        return polygon_area(self.polygon)

    @property
    def frobenius(self) -> float:
        return float(np.sqrt((self.matrix ** 2).sum()))

    def directional(self, v: np.ndarray) -> float:
        return float(np.hypot(*(self.matrix @ v)))


def _oriented(points: Sequence[Sequence[float]]) -> np.ndarray:
    poly = np.asarray(points, dtype=float)
    return poly[::-1].copy() if polygon_area(poly) < 0 else poly


def fit_cell(polygon: Sequence[Sequence[float]], formula: Callable[[np.ndarray], np.ndarray]) -> Cell:
    """式 formula をセル内部の点で評価してアフィン写像を決める"""
    poly = _oriented(polygon)
    center = poly.mean(axis=0)
    samples = np.vstack([center, center + 0.5 * (poly - center)])
    values = formula(samples)
    design = np.column_stack([samples, np.ones(len(samples))])
    coef, *_ = np.linalg.lstsq(design, values, rcond=None)
    residual = float(np.abs(design @ coef - values).max())
    if residual > 1e-9:
        raise ValidationError("map is not affine on a catalogue cell", {"residual": residual})
    return Cell(poly, coef[:2].T.copy(), coef[2].copy())


def cells_from_vertex_values(
    vertices: np.ndarray, triangles: Sequence[Tuple[int, int, int]], values: np.ndarray
) -> List[Cell]:
    """三角形の頂点値から区分アフィン補間のセルを作る"""
    cells = []
    for i, j, k in triangles:
        p = vertices[[i, j, k]]
        q = values[[i, j, k]]
        e = np.array([p[1] - p[0], p[2] - p[0]])
        f = np.array([q[1] - q[0], q[2] - q[0]])
        matrix = np.linalg.solve(e, f).T
        cells.append(Cell(_oriented(p), matrix, q[0] - matrix @ p[0]))
    return cells


@dataclass(frozen=True)
class JumpPiece:
    """ジャンプ集合の線分片。jump_start/jump_end は端点での f⁺ − f⁻"""
    start: np.ndarray
    end: np.ndarray
    normal: np.ndarray
    plus: int
    minus: int
    jump_start: np.ndarray
    jump_end: np.ndarray

    @property
    def length(self) -> float:
        return float(np.hypot(*(self.end - self.start)))

    def point_at(self, t: float) -> np.ndarray:
        return self.start + t * (self.end - self.start)

    def jump_at(self, t: float) -> np.ndarray:
        return (1.0 - t) * self.jump_start + t * self.jump_end

    def integral(self, t0: float = 0.0, t1: float = 1.0) -> float:
        """∫_{t0}^{t1} |f⁺ − f⁻| dℋ¹"""
        if t1 <= t0:
            return 0.0
        j0, j1 = self.jump_start, self.jump_end
        scale = max(float(np.hypot(*j0)), float(np.hypot(*j1)), 1e-300)
        cross = float(j0[0] * j1[1] - j0[1] * j1[0])
        if abs(cross) <= 1e-14 * scale * scale:
            # 平行なジャンプ: 符号付き大きさが線形
            axis = j0 if np.hypot(*j0) >= np.hypot(*j1) else j1
            axis = axis / np.hypot(*axis)
            a0, a1 = float(j0 @ axis), float(j1 @ axis)

            def lin(t: float) -> float:
                return a0 + t * (a1 - a0)

            u0, u1 = lin(t0), lin(t1)
            if u0 * u1 >= 0:
                value = 0.5 * (abs(u0) + abs(u1)) * (t1 - t0)
            else:
                tz = a0 / (a0 - a1)
                value = 0.5 * abs(u0) * (tz - t0) + 0.5 * abs(u1) * (t1 - tz)
            return value * self.length
        value, _ = quad(lambda t: float(np.hypot(*self.jump_at(t))), t0, t1, epsabs=1e-14, epsrel=1e-12)
        return value * self.length


def canonical_normal(direction: np.ndarray) -> np.ndarray:
    """辺方向に直交する単位法線 (第1成分正、0 なら第2成分正)"""
    n = np.array([-direction[1], direction[0]], dtype=float)
    n /= np.hypot(*n)
    if n[0] < -1e-15 or (abs(n[0]) <= 1e-15 and n[1] < 0):
        n = -n
    return n


def find_jump_pieces(cells: Sequence[Cell]) -> List[JumpPiece]:
    """隣接セルの共有辺で写像が食い違う部分を列挙する"""
    pieces: List[JumpPiece] = []
    for i in range(len(cells)):
        pi = cells[i].polygon
        for j in range(i + 1, len(cells)):
            pj = cells[j].polygon
            for a_idx in range(len(pi)):
                a, b = pi[a_idx], pi[(a_idx + 1) % len(pi)]
                d = b - a
                length = float(np.hypot(*d))
                u = d / length
                for c_idx in range(len(pj)):
                    c, e = pj[c_idx], pj[(c_idx + 1) % len(pj)]
                    # 同一直線上か
                    if abs(u[0] * (c[1] - a[1]) - u[1] * (c[0] - a[0])) > CELL_TOL:
                        continue
                    if abs(u[0] * (e[1] - a[1]) - u[1] * (e[0] - a[0])) > CELL_TOL:
                        continue
                    s0, s1 = sorted((float((c - a) @ u), float((e - a) @ u)))
                    lo, hi = max(0.0, s0), min(length, s1)
                    if hi - lo <= CELL_TOL:
                        continue
                    start, end = a + lo * u, a + hi * u
                    normal = canonical_normal(u)
                    # セル i の内部は辺の左側
                    left = np.array([-u[1], u[0]])
                    plus, minus = (i, j) if float(left @ normal) > 0 else (j, i)
                    j0 = cells[plus].apply(start) - cells[minus].apply(start)
                    j1 = cells[plus].apply(end) - cells[minus].apply(end)
                    if max(np.hypot(*j0), np.hypot(*j1)) <= JUMP_TOL:
                        continue
                    pieces.append(JumpPiece(start, end, normal, plus, minus, j0, j1))
    return pieces


def clip_segment_convex(
    start: np.ndarray, end: np.ndarray, polygon: np.ndarray, tol: float = CELL_TOL
) -> Optional[Tuple[float, float, Optional[np.ndarray]]]:
    """線分を閉凸多角形で切り取ったパラメータ区間

    線分が多角形の辺の上に乗る場合は第3要素にその辺の外向き法線を返す
    """
    t0, t1 = 0.0, 1.0
    on_edge: Optional[np.ndarray] = None
    d = end - start
    n = len(polygon)
    for i in range(n):
        a, b = polygon[i], polygon[(i + 1) % n]
        edge = b - a
        scale = max(1.0, float(np.hypot(*edge)))
        base = float(edge[0] * (start[1] - a[1]) - edge[1] * (start[0] - a[0]))
        slope = float(edge[0] * d[1] - edge[1] * d[0])
        if abs(slope) <= tol * scale:
            if base < -tol * scale:
                return None
            if abs(base) <= tol * scale:
                outward = np.array([edge[1], -edge[0]]) / np.hypot(*edge)
                on_edge = outward
            continue
        t_hit = -base / slope
        if slope > 0:
            t0 = max(t0, t_hit)
        else:
            t1 = min(t1, t_hit)
        if t1 - t0 <= tol:
            return None
    return t0, t1, on_edge


def measure_cells_in(cells: Sequence[Cell], region: np.ndarray, weight: Callable[[Cell], float]) -> float:
    """Σ_cells weight(cell)·area(cell ∩ region)"""
    total = 0.0
    lo, hi = region.min(axis=0), region.max(axis=0)
    for cell in cells:
        if np.any(cell.polygon.min(axis=0) >= hi) or np.any(cell.polygon.max(axis=0) <= lo):
            continue
        w = weight(cell)
        if w == 0.0:
            continue
        clipped = clip_convex(cell.polygon, region)
        if len(clipped) >= 3:
            total += w * polygon_area(clipped)
    return total


def measure_jumps_in(pieces: Sequence[JumpPiece], region: np.ndarray, direction: Optional[np.ndarray] = None) -> float:
    """ジャンプ部分の質量。領域の辺上に乗る片は領域が法線側にあるときだけ数える"""
    total = 0.0
    for piece in pieces:
        factor = 1.0 if direction is None else abs(float(piece.normal @ direction))
        if factor == 0.0:
            continue
        hit = clip_segment_convex(piece.start, piece.end, region)
        if hit is None:
            continue
        t0, t1, on_edge = hit
        if on_edge is not None and float(piece.normal @ on_edge) >= 0:
            continue
        total += factor * piece.integral(t0, t1)
    return total
