"""
単純多角形の制約付き三角形分割

耳切り → 内点の挿入 (1→3 / 2→4 分割) → Lawson フリップ
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.errors import GeometryError
from .polygon import polygon_area
from .predicates import incircle, orient_sign, point_in_closed_triangle
from .primitives import SimplePolygon, as_array

Edge = Tuple[int, int]


@dataclass(frozen=True)
class Triangulation:
    """頂点座標・三角形 (反時計回りの添字3つ組)・境界頂点フラグ"""
    vertices: np.ndarray
    triangles: np.ndarray
    boundary: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    def __post_init__(self) -> None:
        object.__setattr__(self, "vertices", np.asarray(self.vertices, dtype=float).reshape(-1, 2))
        object.__setattr__(self, "triangles", np.asarray(self.triangles, dtype=int).reshape(-1, 3))
        if len(self.boundary) != len(self.vertices):
            mask = np.zeros(len(self.vertices), dtype=bool)
            mask[np.unique(boundary_edges(self.triangles))] = True
            object.__setattr__(self, "boundary", mask)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def areas(self) -> np.ndarray:
        return signed_areas(self.vertices, self.triangles)

    @property
    def area(self) -> float:
        return float(self.areas().sum())


def signed_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    a = vertices[triangles[:, 0]]
    b = vertices[triangles[:, 1]]
    c = vertices[triangles[:, 2]]
    return 0.5 * (
        (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    )


def edge_map(triangles: np.ndarray) -> Dict[Edge, List[int]]:
    """無向辺 → 隣接三角形番号"""
    out: Dict[Edge, List[int]] = {}
    for t, (i, j, k) in enumerate(np.asarray(triangles, dtype=int)):
        for a, b in ((i, j), (j, k), (k, i)):
            out.setdefault((min(a, b), max(a, b)), []).append(t)
    return out


def boundary_edges(triangles: np.ndarray) -> np.ndarray:
    """向き付き境界辺 (三角形の向きに従う)"""
    tris = np.asarray(triangles, dtype=int).reshape(-1, 3)
    directed = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    if len(directed) == 0:
        return directed
    key = np.sort(directed, axis=1)
    _, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    return directed[counts[inverse.ravel()] == 1]


def boundary_loops(triangles: np.ndarray) -> List[List[int]]:
    """境界辺を頂点ループに並べる"""
    edges = boundary_edges(triangles)
    succ: Dict[int, List[int]] = {}
    for a, b in edges:
        succ.setdefault(int(a), []).append(int(b))
    loops: List[List[int]] = []
    used = set()
    for start in sorted(succ):
        for nxt in succ[start]:
            if (start, nxt) in used:
                continue
            loop = [start]
            cur, step = start, nxt
            used.add((cur, step))
            while step != start:
                loop.append(step)
                options = [v for v in succ.get(step, []) if (step, v) not in used]
                if not options:
                    break
                used.add((step, options[0]))
                cur, step = step, options[0]
            loops.append(loop)
    return loops


def _ear_quality(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> float:
    area = 0.5 * abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
    s = float(np.sum((a - b) ** 2) + np.sum((b - c) ** 2) + np.sum((c - a) ** 2))
    return area / s if s > 0 else 0.0


def ear_clip(points: np.ndarray) -> List[Tuple[int, int, int]]:
    """反時計回りの単純多角形を耳切りで三角形分割する"""
    n = len(points)
    idx = list(range(n))
    tris: List[Tuple[int, int, int]] = []
    while len(idx) > 3:
        m = len(idx)
        signs = [orient_sign(points[idx[k - 1]], points[idx[k]], points[idx[(k + 1) % m]]) for k in range(m)]
        # 包含テストは凸でない頂点だけで十分
        reflex = [idx[k] for k in range(m) if signs[k] <= 0]
        best: Optional[int] = None
        best_q = -1.0
        for k in range(m):
            if signs[k] <= 0:
                continue
            i0, i1, i2 = idx[k - 1], idx[k], idx[(k + 1) % m]
            a, b, c = points[i0], points[i1], points[i2]
            blocked = False
            for j in reflex:
                if j in (i0, i1, i2):
                    continue
                if point_in_closed_triangle(points[j], a, b, c):
                    blocked = True
                    break
            if blocked:
                continue
            q = _ear_quality(a, b, c)
            if q > best_q:
                best, best_q = k, q
        if best is None:
            raise GeometryError("no ear found; polygon is not simple", {"remaining": len(idx)})
        m = len(idx)
        tris.append((idx[best - 1], idx[best], idx[(best + 1) % m]))
        del idx[best]
    if orient_sign(points[idx[0]], points[idx[1]], points[idx[2]]) <= 0:
        raise GeometryError("degenerate final ear", {"vertices": tuple(idx)})
    tris.append((idx[0], idx[1], idx[2]))
    return tris


def _insert_point(vertices: List[np.ndarray], tris: List[List[int]], p: np.ndarray) -> None:
    new = len(vertices)
    vertices.append(p)
    for t, (i, j, k) in enumerate(tris):
        a, b, c = vertices[i], vertices[j], vertices[k]
        if not point_in_closed_triangle(p, a, b, c):
            continue
        s = [orient_sign(b, c, p), orient_sign(c, a, p), orient_sign(a, b, p)]
        zeros = [n for n, v in enumerate(s) if v == 0]
        if len(zeros) >= 2:
            raise GeometryError("interior point coincides with a vertex", {"point": tuple(p)})
        if not zeros:
            tris[t] = [i, j, new]
            tris.append([j, k, new])
            tris.append([k, i, new])
            return
        # 辺上の点: 辺を共有する2三角形をそれぞれ2分割
        opp = [i, j, k][zeros[0]]
        e0, e1 = {0: (j, k), 1: (k, i), 2: (i, j)}[zeros[0]]
        other = None
        for u, tri in enumerate(tris):
            if u != t and e0 in tri and e1 in tri:
                other = u
                break
        if other is None:
            raise GeometryError("interior point lies on the polygon boundary", {"point": tuple(p)})
        far = [v for v in tris[other] if v not in (e0, e1)][0]
        tris[t] = [opp, e0, new]
        tris.append([new, e1, opp])
        tris[other] = [far, e1, new]
        tris.append([new, e0, far])
        return
    raise GeometryError("interior point is outside the polygon", {"point": tuple(p)})


def lawson_flips(vertices: np.ndarray, tris: List[List[int]], constrained: set, max_passes: int = 64) -> None:
    """局所 Delaunay になるまで非制約辺をフリップする"""
    for _ in range(max_passes):
        flipped = False
        emap = edge_map(np.array(tris, dtype=int))
        for (u, v), owners in emap.items():
            if len(owners) != 2 or (u, v) in constrained:
                continue
            t1, t2 = owners
            tri1, tri2 = tris[t1], tris[t2]
            if u not in tri1 or v not in tri1 or u not in tri2 or v not in tri2:
                continue  # このパスで既に変更済み
            # tri1 = (a, b, c) で辺 ab が共有辺になるよう回転
            r = tri1.index(u)
            a, b, c = tri1[r], tri1[(r + 1) % 3], tri1[(r + 2) % 3]
            if b != v:
                r = tri1.index(v)
                a, b, c = tri1[r], tri1[(r + 1) % 3], tri1[(r + 2) % 3]
            d = [w for w in tri2 if w not in (a, b)][0]
            if incircle(vertices[a], vertices[b], vertices[c], vertices[d]) <= 1e-14:
                continue
            if orient_sign(vertices[c], vertices[a], vertices[d]) <= 0:
                continue
            if orient_sign(vertices[d], vertices[b], vertices[c]) <= 0:
                continue
            tris[t1] = [c, a, d]
            tris[t2] = [d, b, c]
            flipped = True
        if not flipped:
            return


def triangulate_simple_polygon(
    polygon: SimplePolygon,
    interior_points: Sequence[Sequence[float]] = (),
    delaunay: bool = True,
) -> Triangulation:
    """多角形 (と内点) の制約付き三角形分割

    境界頂点が先頭 n 個、内点がその後に並ぶ
    """
    pts = polygon.array()
    n = len(pts)
    tris = [list(t) for t in ear_clip(pts)]
    verts: List[np.ndarray] = [p for p in pts]
    for q in as_array(interior_points):
        _insert_point(verts, tris, q)
    vertices = np.array(verts, dtype=float)
    constrained = {(min(i, (i + 1) % n), max(i, (i + 1) % n)) for i in range(n)}
    if delaunay:
        lawson_flips(vertices, tris, constrained)
    boundary = np.zeros(len(vertices), dtype=bool)
    boundary[:n] = True
    tri_arr = np.array(tris, dtype=int)
    areas = signed_areas(vertices, tri_arr)
    if np.any(areas <= 0):
        raise GeometryError("triangulation produced a non-positive triangle")
    if abs(areas.sum() - polygon_area(pts)) > 1e-9 * max(1.0, abs(polygon_area(pts))):
        raise GeometryError("triangulation does not cover the polygon")
    return Triangulation(vertices, tri_arr, boundary)


def refine_4to1(vertices: np.ndarray, triangles: np.ndarray) -> Tuple[np.ndarray, np.ndarray, Dict[int, Edge]]:
    """各三角形を辺中点で4分割する

    戻り値の第3要素は新しい中点頂点 → 親の辺
    """
    verts = [v for v in np.asarray(vertices, dtype=float)]
    mids: Dict[Edge, int] = {}
    parents: Dict[int, Edge] = {}

    def midpoint(a: int, b: int) -> int:
        key = (min(a, b), max(a, b))
        if key not in mids:
            mids[key] = len(verts)
            parents[len(verts)] = key
            verts.append(0.5 * (verts[a] + verts[b]))
        return mids[key]

    out: List[List[int]] = []
    for i, j, k in np.asarray(triangles, dtype=int):
        ij, jk, ki = midpoint(i, j), midpoint(j, k), midpoint(k, i)
        out.extend([[i, ij, ki], [ij, j, jk], [ki, jk, k], [ij, jk, ki]])
    return np.array(verts), np.array(out, dtype=int), parents
