"""
直線グリッドと非直線グリッド

直線グリッドは Q(0,1) を貫く縦線・横線の和、非直線グリッドは単射な折れ線の和で、
異なる 2 本は高々 1 点でしか交わらない。
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy.spatial import cKDTree

from ..core.errors import GeometryError, ValidationError
from ..geom.primitives import Point2, Polyline, Segment, is_injective_polyline, segment_boxes, segment_intersection
from ..mapcat.measures import Rect

# 交点の同一視に使う許容差
CROSSING_TOL = 1e-12

Pair = Tuple[int, int]


@dataclass(frozen=True)
class NonStraightGrid:
    """折れ線 γ_i の族と交点表 X_{i,j}"""
    curves: Tuple[Polyline, ...]
    crossings: Dict[Pair, Point2] = field(default_factory=dict, compare=False)

    @classmethod
    def from_curves(cls, curves: Iterable[Polyline]) -> "NonStraightGrid":
        """交点表を計算して作る (妥当性は validate_nonstraight_grid で確かめる)"""
        curve_tuple = tuple(curves)
        crossings: Dict[Pair, Point2] = {}
        for i in range(len(curve_tuple)):
            for j in range(i + 1, len(curve_tuple)):
                points, _ = _pair_contacts(curve_tuple[i], curve_tuple[j])
                if points:
                    crossings[(i, j)] = points[0]
        return cls(curve_tuple, crossings)

    @property
    def n_curves(self) -> int:
        return len(self.curves)

    def crossing_points(self) -> List[Point2]:
        return [self.crossings[k] for k in sorted(self.crossings)]


@dataclass(frozen=True)
class StraightGrid:
    """縦線 {x_i}×[-1,1] と横線 [-1,1]×{y_j} の和"""
    x_coords: Tuple[float, ...] = ()
    y_coords: Tuple[float, ...] = ()

    def __post_init__(self) -> None:
        for name in ("x_coords", "y_coords"):
            values = tuple(sorted(float(v) for v in getattr(self, name)))
            for v in values:
                if not -1.0 < v < 1.0:
                    raise ValidationError(f"grid coordinate {v} is not inside (-1, 1)", {"axis": name})
            for a, b in zip(values, values[1:]):
                if a == b:
                    raise ValidationError(f"repeated grid coordinate {a}", {"axis": name})
            object.__setattr__(self, name, values)

    @property
    def n_lines(self) -> int:
        return len(self.x_coords) + len(self.y_coords)

    def lines(self) -> List[Polyline]:
        """縦線 (下から上) のあとに横線 (左から右)"""
        vertical = [Polyline.from_points([(x, -1.0), (x, 1.0)], injective=True) for x in self.x_coords]
        horizontal = [Polyline.from_points([(-1.0, y), (1.0, y)], injective=True) for y in self.y_coords]
        return vertical + horizontal

    def segments(self) -> List[Segment]:
        return [line.segments[0] for line in self.lines()]

    def to_nonstraight(self) -> NonStraightGrid:
        lines = self.lines()
        nx = len(self.x_coords)
        crossings = {
            (i, nx + j): Point2(x, y)
            for i, x in enumerate(self.x_coords)
            for j, y in enumerate(self.y_coords)
        }
        return NonStraightGrid(tuple(lines), crossings)

    def crossings(self) -> List[Point2]:
        return [Point2(x, y) for x in self.x_coords for y in self.y_coords]

    def cells(self) -> List[Rect]:
        """グリッド線で区切られた長方形 (下の行から左→右)"""
        xs = (-1.0,) + self.x_coords + (1.0,)
        ys = (-1.0,) + self.y_coords + (1.0,)
        return [Rect(x0, x1, y0, y1) for y0, y1 in zip(ys, ys[1:]) for x0, x1 in zip(xs, xs[1:])]

    def contains_point(self, p: Sequence[float], tol: float = 0.0) -> bool:
        return any(abs(float(p[0]) - x) <= tol for x in self.x_coords) or any(
            abs(float(p[1]) - y) <= tol for y in self.y_coords
        )


def generate_straight_grid(segments: Iterable[Segment]) -> StraightGrid:
    """軸平行な線分をすべて含む最小の直線グリッド"""
    xs: set = set()
    ys: set = set()
    for n, seg in enumerate(segments):
        ax, ay = float(seg.a[0]), float(seg.a[1])
        bx, by = float(seg.b[0]), float(seg.b[1])
        if max(abs(ax), abs(ay), abs(bx), abs(by)) > 1.0:
            raise ValidationError("segment leaves the closed square", {"segment": n})
        if ay == by:
            if abs(ay) == 1.0:
                raise ValidationError("segment lies on the boundary of the square", {"segment": n})
            ys.add(ay)
        elif ax == bx:
            if abs(ax) == 1.0:
                raise ValidationError("segment lies on the boundary of the square", {"segment": n})
            xs.add(ax)
        else:
            raise GeometryError("segment is not axis-parallel", {"segment": n, "a": (ax, ay), "b": (bx, by)})
    return StraightGrid(tuple(sorted(xs)), tuple(sorted(ys)))


def _pair_contacts(c1: Polyline, c2: Polyline) -> Tuple[List[Point2], List[Tuple[Point2, Point2]]]:
    """2 本の折れ線の共有点 (相異なる点) と重なり区間"""
    points: List[Point2] = []
    overlaps: List[Tuple[Point2, Point2]] = []
    a1 = c1.array()
    a2 = c2.array()
    lo1, hi1 = a1.min(axis=0), a1.max(axis=0)
    lo2, hi2 = a2.min(axis=0), a2.max(axis=0)
    if np.any(hi1 < lo2) or np.any(hi2 < lo1):
        return points, overlaps
    b1 = segment_boxes(a1[:-1], a1[1:])
    b2 = segment_boxes(a2[:-1], a2[1:])
    # 外接矩形が重なる線分の組だけを厳密に調べる
    hit_x = (b1[:, None, 0] <= b2[None, :, 2]) & (b2[None, :, 0] <= b1[:, None, 2])
    hit_y = (b1[:, None, 1] <= b2[None, :, 3]) & (b2[None, :, 1] <= b1[:, None, 3])
    segs1, segs2 = c1.segments, c2.segments
    for i, j in zip(*np.nonzero(hit_x & hit_y)):
        hit = segment_intersection(segs1[i], segs2[j])
        if hit.kind == "segment":
            overlaps.append((hit.points[0], hit.points[1]))
        elif hit.kind == "point":
            p = hit.points[0]
            if not any(abs(float(p[0]) - float(q[0])) <= CROSSING_TOL and abs(float(p[1]) - float(q[1])) <= CROSSING_TOL for q in points):
                points.append(p)
    return points, overlaps


@dataclass(frozen=True)
class GridValidation:
    """validate_nonstraight_grid の結果"""
    ok: bool
    crossings: Dict[Pair, Point2]
    failures: Tuple[Tuple[str, Dict[str, Any]], ...] = ()

    def __bool__(self) -> bool:
        return self.ok


def validate_nonstraight_grid(g: NonStraightGrid) -> GridValidation:
    """各曲線の単射性と、2 本ずつの交わりが高々 1 点であることを全探索で確かめる"""
    failures: List[Tuple[str, Dict[str, Any]]] = []
    crossings: Dict[Pair, Point2] = {}
    for i, curve in enumerate(g.curves):
        pts = curve.array()
        if np.abs(pts).max() > 1.0:
            failures.append(("curve leaves the closed square", {"curve": i}))
        ok, pair = is_injective_polyline(curve)
        if not ok:
            failures.append(("curve is not injective", {"curve": i, "segments": pair}))
    for i in range(g.n_curves):
        for j in range(i + 1, g.n_curves):
            points, overlaps = _pair_contacts(g.curves[i], g.curves[j])
            if overlaps:
                a, b = overlaps[0]
                failures.append(("curves overlap", {"pair": (i, j), "from": tuple(a), "to": tuple(b)}))
                continue
            if len(points) > 1:
                failures.append(("curves meet more than once", {"pair": (i, j), "points": [tuple(p) for p in points[:3]]}))
                continue
            if points:
                crossings[(i, j)] = points[0]
    keys = sorted(crossings)
    if len(keys) > 1:
        coords = np.array([[float(crossings[k][0]), float(crossings[k][1])] for k in keys])
        for a, b in sorted(cKDTree(coords).query_pairs(CROSSING_TOL, p=np.inf)):
            failures.append(("distinct pairs share a crossing", {"pairs": (keys[a], keys[b]), "point": tuple(coords[a])}))
    if failures:
        logger.debug(f"Non-straight grid rejected: {failures[0][0]} ({len(failures)} failures)")
    return GridValidation(not failures, crossings, tuple(failures))
