"""
基本図形 (点・線分・折れ線・単純多角形) と交差判定
"""

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from ..core.errors import GeometryError
from .predicates import Number, on_closed_segment, orient_sign


class Point2(NamedTuple):
    """平面上の点 (浮動小数または有理数)"""
    x: Number
    y: Number

    def as_float(self) -> "Point2":
        return Point2(float(self.x), float(self.y))


def as_point(p: Sequence[Number]) -> Point2:
    return p if isinstance(p, Point2) else Point2(p[0], p[1])


def as_array(points: Iterable[Sequence[Number]]) -> np.ndarray:
    """点列を (n, 2) の float 配列へ"""
    return np.array([[float(p[0]), float(p[1])] for p in points], dtype=float).reshape(-1, 2)


def distance(a: Sequence[Number], b: Sequence[Number]) -> float:
    return float(np.hypot(float(a[0]) - float(b[0]), float(a[1]) - float(b[1])))


@dataclass(frozen=True)
class Segment:
    """線分 [a, b] (a ≠ b)"""
    a: Point2
    b: Point2

    def __post_init__(self) -> None:
        if self.a[0] == self.b[0] and self.a[1] == self.b[1]:
            raise GeometryError("zero-length segment", {"point": tuple(self.a)})

    @property
    def length(self) -> float:
        return distance(self.a, self.b)

    def point_at(self, t: float) -> Point2:
        return Point2(
            float(self.a[0]) + t * (float(self.b[0]) - float(self.a[0])),
            float(self.a[1]) + t * (float(self.b[1]) - float(self.a[1])),
        )


@dataclass(frozen=True)
class Intersection:
    """線分交差の記述子: kind は empty / point / segment"""
    kind: str
    points: Tuple[Point2, ...] = ()

    @property
    def is_empty(self) -> bool:
        return self.kind == "empty"


EMPTY = Intersection("empty")


def _canonical(s: Segment) -> Tuple[Point2, Point2]:
    a, b = s.a, s.b
    return (a, b) if (a[0], a[1]) <= (b[0], b[1]) else (b, a)


def _collinear_overlap(s1: Segment, s2: Segment) -> Intersection:
    a, b = _canonical(s1)
    c, d = _canonical(s2)
    lo = max((a[0], a[1]), (c[0], c[1]))
    hi = min((b[0], b[1]), (d[0], d[1]))
    if lo > hi:
        return EMPTY
    if lo == hi:
        return Intersection("point", (Point2(*lo),))
    return Intersection("segment", (Point2(*lo), Point2(*hi)))


def segment_intersection(s1: Segment, s2: Segment, exact: bool = False) -> Intersection:
    """二線分の交差を分類する (引数の順序に対して対称)"""
    # 対称性のため正準順序で計算する
    if (_canonical(s2), s2.a) < (_canonical(s1), s1.a):
        s1, s2 = s2, s1
    a, b = s1.a, s1.b
    c, d = s2.a, s2.b
    o1 = orient_sign(a, b, c)
    o2 = orient_sign(a, b, d)
    o3 = orient_sign(c, d, a)
    o4 = orient_sign(c, d, b)
    if o1 == 0 and o2 == 0:
        return _collinear_overlap(s1, s2)
    if o1 * o2 > 0 or o3 * o4 > 0:
        return EMPTY
    # 端点が相手の線分上にある場合はその端点を返す
    for p, flag in ((c, o1), (d, o2)):
        if flag == 0 and on_closed_segment(p, a, b):
            return Intersection("point", (p,))
    for p, flag in ((a, o3), (b, o4)):
        if flag == 0 and on_closed_segment(p, c, d):
            return Intersection("point", (p,))
    if exact:
        ax, ay, bx, by = (Fraction(v) for v in (a[0], a[1], b[0], b[1]))
        cx, cy, dx, dy = (Fraction(v) for v in (c[0], c[1], d[0], d[1]))
        den = (bx - ax) * (dy - cy) - (by - ay) * (dx - cx)
        t = ((cx - ax) * (dy - cy) - (cy - ay) * (dx - cx)) / den
        return Intersection("point", (Point2(ax + t * (bx - ax), ay + t * (by - ay)),))
    ax, ay, bx, by = float(a[0]), float(a[1]), float(b[0]), float(b[1])
    cx, cy, dx, dy = float(c[0]), float(c[1]), float(d[0]), float(d[1])
    den = (bx - ax) * (dy - cy) - (by - ay) * (dx - cx)
    t = ((cx - ax) * (dy - cy) - (cy - ay) * (dx - cx)) / den
    t = min(1.0, max(0.0, t))
    return Intersection("point", (Point2(ax + t * (bx - ax), ay + t * (by - ay)),))


def segments_touch(a: Sequence[Number], b: Sequence[Number], c: Sequence[Number], d: Sequence[Number]) -> bool:
    """閉線分 [a,b] と [c,d] が共有点を持つか (高速版)"""
    o1 = orient_sign(a, b, c)
    o2 = orient_sign(a, b, d)
    o3 = orient_sign(c, d, a)
    o4 = orient_sign(c, d, b)
    if o1 * o2 < 0 and o3 * o4 < 0:
        return True
    return (
        (o1 == 0 and on_closed_segment(c, a, b))
        or (o2 == 0 and on_closed_segment(d, a, b))
        or (o3 == 0 and on_closed_segment(a, c, d))
        or (o4 == 0 and on_closed_segment(b, c, d))
    )


def sweep_candidate_pairs(boxes: np.ndarray) -> Iterator[Tuple[int, int]]:
    """外接矩形 (xmin, ymin, xmax, ymax) が重なる組を列挙する"""
    if len(boxes) == 0:
        return
    order = np.argsort(boxes[:, 0], kind="stable")
    active: List[int] = []
    for idx in order:
        xmin = boxes[idx, 0]
        active = [j for j in active if boxes[j, 2] >= xmin]
        for j in active:
            if boxes[j, 1] <= boxes[idx, 3] and boxes[idx, 1] <= boxes[j, 3]:
                yield (min(j, int(idx)), max(j, int(idx)))
        active.append(int(idx))


def segment_boxes(starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    return np.column_stack(
        [
            np.minimum(starts[:, 0], ends[:, 0]),
            np.minimum(starts[:, 1], ends[:, 1]),
            np.maximum(starts[:, 0], ends[:, 0]),
            np.maximum(starts[:, 1], ends[:, 1]),
        ]
    )


@dataclass(frozen=True)
class Polyline:
    """折れ線 (連続する頂点は相異なる)"""
    vertices: Tuple[Point2, ...]
    injective: bool = False

    def __post_init__(self) -> None:
        if len(self.vertices) < 2:
            raise GeometryError("polyline needs at least two vertices")
        for i in range(len(self.vertices) - 1):
            p, q = self.vertices[i], self.vertices[i + 1]
            if p[0] == q[0] and p[1] == q[1]:
                raise GeometryError("repeated consecutive vertex", {"index": i})

    @classmethod
    def from_points(cls, points: Iterable[Sequence[Number]], injective: bool = False) -> "Polyline":
        return cls(tuple(as_point(p) for p in points), injective)

    @property
    def segments(self) -> List[Segment]:
        return [Segment(self.vertices[i], self.vertices[i + 1]) for i in range(len(self.vertices) - 1)]

    def array(self) -> np.ndarray:
        return as_array(self.vertices)

    def cumulative_lengths(self) -> np.ndarray:
        pts = self.array()
        steps = np.hypot(*(np.diff(pts, axis=0).T))
        return np.concatenate([[0.0], np.cumsum(steps)])

    @property
    def length(self) -> float:
        return float(self.cumulative_lengths()[-1])

    def point_at_length(self, s: Union[float, np.ndarray]) -> np.ndarray:
        """弧長 s の位置 (ベクトル化)"""
        pts = self.array()
        cum = self.cumulative_lengths()
        s_arr = np.clip(np.atleast_1d(np.asarray(s, dtype=float)), 0.0, cum[-1])
        idx = np.clip(np.searchsorted(cum, s_arr, side="right") - 1, 0, len(pts) - 2)
        seg = cum[idx + 1] - cum[idx]
        t = np.where(seg > 0, (s_arr - cum[idx]) / np.where(seg > 0, seg, 1.0), 0.0)
        out = pts[idx] + t[:, None] * (pts[idx + 1] - pts[idx])
        return out if np.ndim(s) else out[0]

    def point_at(self, t: Union[float, np.ndarray]) -> np.ndarray:
        """正規化パラメータ t ∈ [0,1] (定速)"""
        return self.point_at_length(np.asarray(t, dtype=float) * self.length)

    def parameter_of(self, point: Sequence[Number], tol: float = 1e-9) -> float:
        """折れ線上の点の正規化パラメータ (最初に通過する位置)"""
        pts = self.array()
        cum = self.cumulative_lengths()
        p = np.array([float(point[0]), float(point[1])])
        for i in range(len(pts) - 1):
            a, b = pts[i], pts[i + 1]
            d = b - a
            t = min(1.0, max(0.0, float((p - a) @ d) / float(d @ d)))
            if np.hypot(*(a + t * d - p)) <= tol:
                return float((cum[i] + t * (cum[i + 1] - cum[i])) / cum[-1])
        raise GeometryError("point is not on the polyline", {"point": (float(p[0]), float(p[1]))})

    def subpath(self, t0: float, t1: float) -> "Polyline":
        """正規化パラメータ区間 [t0, t1] の部分折れ線"""
        if not 0.0 <= t0 < t1 <= 1.0:
            raise GeometryError("subpath needs 0 <= t0 < t1 <= 1", {"t0": t0, "t1": t1})
        cum = self.cumulative_lengths()
        total = cum[-1]
        s0, s1 = t0 * total, t1 * total
        arr = self.array()
        pts = [self.point_at_length(s0)]
        for k in range(1, len(cum) - 1):
            if s0 < cum[k] < s1 and np.hypot(*(arr[k] - pts[-1])) > 0:
                pts.append(arr[k])
        end = self.point_at_length(s1)
        if np.hypot(*(end - pts[-1])) > 0:
            pts.append(end)
        return Polyline.from_points(pts)

    def reversed(self) -> "Polyline":
        return Polyline(tuple(reversed(self.vertices)), self.injective)


def is_injective_polyline(p: Polyline, closed: bool = False) -> Tuple[bool, Optional[Tuple[int, int]]]:
    """自己交差の有無と最初の違反ペア (線分番号) を返す"""
    pts = p.array()
    if closed:
        starts, ends = pts, np.roll(pts, -1, axis=0)
    else:
        starts, ends = pts[:-1], pts[1:]
    n = len(starts)
    verts = list(p.vertices)
    for i, j in sweep_candidate_pairs(segment_boxes(starts, ends)):
        adjacent = j == i + 1 or (closed and i == 0 and j == n - 1)
        a, b = verts[i], verts[(i + 1) % len(verts)]
        c, d = verts[j], verts[(j + 1) % len(verts)]
        if not adjacent:
            if segments_touch(a, b, c, d):
                return False, (i, j)
            continue
        shared = b if j == i + 1 else a
        hit = segment_intersection(Segment(a, b), Segment(c, d))
        if hit.kind != "point" or tuple(hit.points[0]) != tuple(shared):
            return False, (i, j)
    return True, None


def signed_area(points: Sequence[Sequence[Number]]) -> float:
    """靴紐公式による符号付き面積"""
    pts = as_array(points)
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


@dataclass(frozen=True)
class SimplePolygon:
    """反時計回りの単純多角形 (始点は繰り返さない)"""
    vertices: Tuple[Point2, ...]

    def __post_init__(self) -> None:
        if len(self.vertices) < 3:
            raise GeometryError("polygon needs at least three vertices")
        line = Polyline(self.vertices)
        ok, pair = is_injective_polyline(line, closed=True)
        if not ok:
            raise GeometryError("polygon boundary is not simple", {"segments": pair})
        if signed_area(self.vertices) <= 0:
            raise GeometryError("polygon must be counterclockwise with positive area")

    @classmethod
    def from_points(cls, points: Iterable[Sequence[Number]], orient: bool = False) -> "SimplePolygon":
        pts = [as_point(p) for p in points]
        if len(pts) > 1 and tuple(pts[0]) == tuple(pts[-1]):
            pts = pts[:-1]
        if orient and signed_area(pts) < 0:
            pts.reverse()
        return cls(tuple(pts))

    def array(self) -> np.ndarray:
        return as_array(self.vertices)

    @property
    def area(self) -> float:
        return signed_area(self.vertices)

    @property
    def boundary(self) -> Polyline:
        return Polyline(self.vertices + (self.vertices[0],))

    def edges(self) -> List[Tuple[Point2, Point2]]:
        n = len(self.vertices)
        return [(self.vertices[i], self.vertices[(i + 1) % n]) for i in range(n)]

    @property
    def diameter(self) -> float:
        pts = self.array()
        diff = pts[:, None, :] - pts[None, :, :]
        return float(np.sqrt((diff ** 2).sum(axis=2)).max())
