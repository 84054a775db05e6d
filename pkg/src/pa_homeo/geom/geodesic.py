"""
単純多角形内の測地距離

三角形分割の双対木で経路上の三角形列 (スリーブ) を求め、
ファネル法で最短路を引く。可視グラフ + Dijkstra は検証用。
"""

from collections import deque
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from ..core.errors import GeometryError
from .polygon import OUTSIDE, locate_point, point_segment_distance
from .predicates import on_closed_segment, orient2d, orient_sign, point_in_closed_triangle
from .primitives import SimplePolygon, as_array
from .triangulation import edge_map, triangulate_simple_polygon

# 境界上の点が丸め誤差で外に出た場合の許容距離
_BOUNDARY_SLACK = 1e-9


class GeodesicPath(NamedTuple):
    """測地線の長さと経由点 (両端を含む)"""
    length: float
    points: np.ndarray


def _path_length(points: np.ndarray) -> float:
    if len(points) < 2:
        return 0.0
    return float(np.hypot(*np.diff(points, axis=0).T).sum())


class GeodesicSolver:
    """同じ多角形に繰り返し問い合わせるためのキャッシュ付きソルバ"""

    def __init__(self, polygon: SimplePolygon):
        self.polygon = polygon
        self.boundary = polygon.array()
        tri = triangulate_simple_polygon(polygon, delaunay=False)
        self.vertices = tri.vertices
        self.triangles = tri.triangles
        self._neighbors: Dict[int, List[Tuple[int, int, int]]] = {t: [] for t in range(len(self.triangles))}
        for (u, v), owners in edge_map(self.triangles).items():
            if len(owners) == 2:
                t1, t2 = owners
                self._neighbors[t1].append((t2, u, v))
                self._neighbors[t2].append((t1, u, v))

    def _containing(self, p: np.ndarray) -> List[int]:
        hits = [
            t for t, (i, j, k) in enumerate(self.triangles)
            if point_in_closed_triangle(p, self.vertices[i], self.vertices[j], self.vertices[k])
        ]
        if hits:
            return hits
        # 丸め誤差で境界の外側に落ちた点は最寄りの三角形へ
        best, best_d = -1, np.inf
        for t, (i, j, k) in enumerate(self.triangles):
            a, b, c = self.vertices[i], self.vertices[j], self.vertices[k]
            d = min(point_segment_distance(p, a, b), point_segment_distance(p, b, c), point_segment_distance(p, c, a))
            if d < best_d:
                best, best_d = t, d
        if best_d > _BOUNDARY_SLACK:
            raise GeometryError("point is outside the polygon", {"point": tuple(p)})
        return [best]

    def _sleeve(self, starts: List[int], goals: List[int]) -> List[int]:
        """双対木で starts のいずれかから goals のいずれかへの最短三角形列"""
        goal_set = set(goals)
        parent: Dict[int, Optional[int]] = {t: None for t in starts}
        queue = deque(starts)
        while queue:
            t = queue.popleft()
            if t in goal_set:
                chain = [t]
                while parent[chain[-1]] is not None:
                    chain.append(parent[chain[-1]])  # type: ignore[arg-type]
                return chain[::-1]
            for nb, _, _ in self._neighbors[t]:
                if nb not in parent:
                    parent[nb] = t
                    queue.append(nb)
        raise GeometryError("triangulation dual graph is disconnected")

    def _portals(self, chain: List[int]) -> List[Tuple[np.ndarray, np.ndarray]]:
        """進行方向に対する (左, 右) の端点組"""
        portals = []
        for t, nxt in zip(chain[:-1], chain[1:]):
            tri = list(self.triangles[t])
            shared = set(tri) & set(self.triangles[nxt])
            for r in range(3):
                u, v = tri[r], tri[(r + 1) % 3]
                if u in shared and v in shared:
                    # 三角形の内側は u→v の左、出ていく向きでは v が左
                    portals.append((self.vertices[v], self.vertices[u]))
                    break
        return portals

    def shortest_path(self, a: Sequence[float], b: Sequence[float]) -> GeodesicPath:
        pa = np.asarray(a, dtype=float)
        pb = np.asarray(b, dtype=float)
        if pa[0] == pb[0] and pa[1] == pb[1]:
            self._containing(pa)
            return GeodesicPath(0.0, np.array([pa, pb]))
        chain = self._sleeve(self._containing(pa), self._containing(pb))
        points = funnel(self._portals(chain), pa, pb)
        return GeodesicPath(_path_length(points), points)

    def distance(self, a: Sequence[float], b: Sequence[float]) -> float:
        return self.shortest_path(a, b).length


def funnel(portals: List[Tuple[np.ndarray, np.ndarray]], start: np.ndarray, goal: np.ndarray) -> np.ndarray:
    """ファネル法 (portals は進行方向に対する (左, 右))"""
    gates = [(start, start)] + list(portals) + [(goal, goal)]
    path = [start]
    apex = left = right = start
    apex_i = left_i = right_i = 0
    i = 1
    while i < len(gates):
        new_left, new_right = gates[i]
        # 右側の辺を内側へ詰める
        if orient2d(apex, right, new_right) >= 0:
            cross = orient2d(apex, left, new_right)
            nearer = np.hypot(*(new_right - apex)) <= np.hypot(*(left - apex))
            if _same(apex, right) or cross < 0 or (cross == 0 and nearer):
                right, right_i = new_right, i
            else:
                path.append(left)
                apex, apex_i = left, left_i
                left = right = apex
                left_i = right_i = apex_i
                i = apex_i + 1
                continue
        # 左側の辺を内側へ詰める
        if orient2d(apex, left, new_left) <= 0:
            cross = orient2d(apex, right, new_left)
            nearer = np.hypot(*(new_left - apex)) <= np.hypot(*(right - apex))
            if _same(apex, left) or cross > 0 or (cross == 0 and nearer):
                left, left_i = new_left, i
            else:
                path.append(right)
                apex, apex_i = right, right_i
                left = right = apex
                left_i = right_i = apex_i
                i = apex_i + 1
                continue
        i += 1
    if not _same(path[-1], goal):
        path.append(goal)
    return np.array(path, dtype=float)


def _same(p: np.ndarray, q: np.ndarray) -> bool:
    return bool(p[0] == q[0] and p[1] == q[1])


def geodesic_distance(polygon: SimplePolygon, a: Sequence[float], b: Sequence[float]) -> GeodesicPath:
    """閉領域内で a と b を結ぶ最短路"""
    return GeodesicSolver(polygon).shortest_path(a, b)


def _visible(poly: np.ndarray, p: np.ndarray, q: np.ndarray) -> bool:
    """線分 [p, q] が閉多角形に含まれるか"""
    n = len(poly)
    cuts = [0.0, 1.0]
    d = q - p
    denom = float(d @ d)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        o1, o2 = orient_sign(p, q, a), orient_sign(p, q, b)
        o3, o4 = orient_sign(a, b, p), orient_sign(a, b, q)
        if o1 * o2 < 0 and o3 * o4 < 0:
            return False
        for w in (a, b):
            if on_closed_segment(w, p, q):
                cuts.append(float((w - p) @ d) / denom)
    cuts = sorted(set(cuts))
    for t0, t1 in zip(cuts[:-1], cuts[1:]):
        mid = p + 0.5 * (t0 + t1) * d
        if locate_point(poly, mid) == OUTSIDE:
            return False
    return True


def visibility_geodesic_distance(polygon: SimplePolygon, a: Sequence[float], b: Sequence[float]) -> float:
    """可視グラフ上の Dijkstra による測地距離 (検証用)"""
    poly = polygon.array()
    pa, pb = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    for p in (pa, pb):
        if locate_point(poly, p) == OUTSIDE:
            raise GeometryError("point is outside the polygon", {"point": tuple(p)})
    nodes = np.vstack([as_array([pa, pb]), poly])
    m = len(nodes)
    rows, cols, weights = [], [], []
    for i in range(m):
        for j in range(i + 1, m):
            if _same(nodes[i], nodes[j]):
                w = 0.0
            elif _visible(poly, nodes[i], nodes[j]):
                w = float(np.hypot(*(nodes[j] - nodes[i])))
            else:
                continue
            rows.extend([i, j])
            cols.extend([j, i])
            # csgraph は重み 0 の辺を無視するので極小値で代用
            weights.extend([max(w, 1e-300)] * 2)
    graph = csr_matrix((weights, (rows, cols)), shape=(m, m))
    dist = dijkstra(graph, directed=False, indices=0)
    if not np.isfinite(dist[1]):
        raise GeometryError("points are not connected inside the polygon")
    return float(dist[1])
