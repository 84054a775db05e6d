"""
非直線グリッドから直線グリッドへの移し替え

Γ の各交点をらせんで置き換え、大きなジャンプ (|f⁺ − f⁻| ≥ σ/40) は
短い迂回路でまたぎ、残りの弧は境界の変動が σ/4 未満の長方形の列で覆って
L 字の 2 辺でつなぐ。こうしてできる軸平行な折れ線の族 Γ̂ を含む最小の
直線グリッドが Γ̃ になる。

対応 g: Γ̂ → Γ は、両側で h の値が一致する照合点 (らせんの打ち切り点、
長方形の角、迂回路の端点とジャンプの埋め区間の両端) の間で、代表の
パラメータについて一定速度になるように決める。
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from ..core.errors import Certificate, StageFailure, ValidationError
from ..geom.primitives import (
    Polyline,
    Segment,
    as_point,
    is_injective_polyline,
    segment_boxes,
    segment_intersection,
    sweep_candidate_pairs,
)
from ..grid.admissibility import TAU_DENSITY, AdmissibilityReport, check_admissible
from ..grid.grids import NonStraightGrid, StraightGrid, generate_straight_grid
from ..mapcat.catalogue import TestMap
from ..mapcat.measures import Rect, distance_to_jumps
from ..mapcat.onedbv import Jump1D, OneDBV, line_variation, restrict_to_polyline
from ..utils.sampling import DEFAULT_BUDGET
from .rectangles import rect_side_variations
from .representative import TAU_REP, ArcRep, CurveRep, GeomRep, build_geom_rep, split_curve
from .spiral import SpiralReplacement, spiral_replacement

JUMP_THRESHOLD_FACTOR = 40.0
TRANSFER_FACTOR = 4.0
# 迂回路の端点の誤差は 4(σ/BYPASS_SCALE)² 以下
BYPASS_SCALE = 100.0
# らせんの大きさ r ≤ σ / (SPIRAL_FACTOR·(Lip + 1))
SPIRAL_FACTOR = 128.0
# 長方形の列を作るときの最小の刻み (弧パラメータ)
_MIN_STEP = 1e-12

HFunction = Callable[[int, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Bypass:
    """大きなジャンプをまたぐ迂回路"""
    arc: int
    jump: Tuple[float, float]
    crossing: Tuple[float, float]
    entry: Tuple[float, float]
    exit: Tuple[float, float]
    size: float
    endpoint_errors: Tuple[float, float]


@dataclass(frozen=True)
class ArcPath:
    """Γ の 1 本の弧に対応する Γ̂ の折れ線と、その上の h_Γ̃"""
    arc: int
    curve: int
    path: Polyline
    rep: CurveRep
    arc_keys: np.ndarray
    path_keys: np.ndarray
    rectangles: int = 0
    bypasses: int = 0

    def to_path(self, u: np.ndarray) -> np.ndarray:
        """弧の代表パラメータ u → 折れ線のパラメータ (g⁻¹)"""
        return np.interp(u, self.arc_keys, self.path_keys)

    def to_arc(self, t: np.ndarray) -> np.ndarray:
        return np.interp(t, self.path_keys, self.arc_keys)


@dataclass(frozen=True)
class Transfer:
    """直線グリッド Γ̃、その部分 Γ̂ と対応 g"""
    source: GeomRep
    grid: StraightGrid
    paths: Tuple[ArcPath, ...]
    sigma: float
    spirals: Tuple[SpiralReplacement, ...] = ()
    bypasses: Tuple[Bypass, ...] = ()
    admissibility: Optional[AdmissibilityReport] = field(default=None, compare=False)
    transfer_factor: float = TRANSFER_FACTOR

    @property
    def sub_grid(self) -> Tuple[Polyline, ...]:
        """Γ̂"""
        return tuple(p.path for p in self.paths)

    @property
    def h_tolerance(self) -> float:
        """H に許す ‖H − h_Γ̃‖∞ の上限"""
        return self.sigma / self.transfer_factor

    def g(self, arc: int, t: np.ndarray) -> np.ndarray:
        """Γ̂ の点 (折れ線パラメータ t) → Γ の点"""
        return self.source.arcs[arc].domain_point(self.paths[arc].to_arc(np.asarray(t, dtype=float)))

    def h_straight(self, arc: int, t: np.ndarray) -> np.ndarray:
        return self.paths[arc].rep.evaluate(t)

    def distortion(self, samples: int = 200) -> float:
        """‖g − id‖∞ (標本)"""
        t = np.linspace(0.0, 1.0, samples)
        worst = 0.0
        for a, p in enumerate(self.paths):
            gap = np.hypot(*(p.path.point_at(t) - self.g(a, t)).T)
            worst = max(worst, float(gap.max()))
        return worst

    def guarantee_error(self, H: Optional[HFunction] = None, samples: int = 200) -> float:
        """max |H∘g⁻¹ − h_Γ| を弧ごとに samples 点で測る (H の既定は h_Γ̃)"""
        evaluate = H if H is not None else self.h_straight
        u = np.linspace(0.0, 1.0, samples)
        worst = 0.0
        for a, (arc, p) in enumerate(zip(self.source.arcs, self.paths)):
            gap = np.hypot(*(evaluate(a, p.to_path(u)) - arc.at(u)).T)
            worst = max(worst, float(gap.max()))
        return worst

    def check_guarantee(self, H: HFunction, samples: int = 200) -> Certificate:
        """‖H − h_Γ̃‖ < σ/4 の H について ‖H∘g⁻¹ − h_Γ‖ < σ を確かめる"""
        t = np.linspace(0.0, 1.0, samples)
        closeness = max(
            float(np.hypot(*(H(a, t) - self.h_straight(a, t)).T).max()) for a in range(len(self.paths))
        )
        if closeness >= self.h_tolerance:
            raise ValidationError(
                "H is not close enough to the straight-grid representative",
                {"distance": closeness, "limit": self.h_tolerance},
            )
        error = self.guarantee_error(H, samples)
        if error < self.sigma:
            return Certificate.passed()
        return Certificate.failed("transferred error reaches sigma", error=error, sigma=self.sigma)


class _Obstacles:
    """すでに置いた Γ̂ の線分 (交差判定用)"""

    def __init__(self) -> None:
        self._starts: List[np.ndarray] = []
        self._ends: List[np.ndarray] = []
        self._boxes: Optional[np.ndarray] = None

    def add(self, points: Sequence[np.ndarray]) -> None:
        for a, b in zip(points[:-1], points[1:]):
            self._starts.append(np.asarray(a, dtype=float))
            self._ends.append(np.asarray(b, dtype=float))
        self._boxes = None

    def clear_of(self, a: np.ndarray, b: np.ndarray, allowed: Sequence[np.ndarray]) -> bool:
        """[a, b] が既存の線分と allowed の点以外で交わらないか"""
        if not self._starts:
            return True
        if self._boxes is None:
            self._boxes = segment_boxes(np.array(self._starts), np.array(self._ends))
        box = self._boxes
        near = np.flatnonzero(
            (box[:, 0] <= max(a[0], b[0]))
            & (box[:, 2] >= min(a[0], b[0]))
            & (box[:, 1] <= max(a[1], b[1]))
            & (box[:, 3] >= min(a[1], b[1]))
        )
        seg = Segment(as_point(a), as_point(b))
        for k in near:
            hit = segment_intersection(seg, Segment(as_point(self._starts[k]), as_point(self._ends[k])))
            if hit.is_empty:
                continue
            if hit.kind != "point":
                return False
            p = hit.points[0]
            if not any(float(p[0]) == q[0] and float(p[1]) == q[1] for q in allowed):
                return False
        return True


@dataclass
class _Draft:
    """組み立て途中の Γ̂ の折れ線と照合点"""
    points: List[np.ndarray] = field(default_factory=list)
    # ("anchor", 頂点番号, 弧の鍵) または ("fill", ジャンプの横断点, 鍵⁻, 鍵⁺)
    events: List[tuple] = field(default_factory=list)
    rectangles: int = 0
    bypasses: int = 0

    def add(self, p: np.ndarray) -> None:
        q = np.asarray(p, dtype=float)
        if not self.points or np.any(self.points[-1] != q):
            self.points.append(q)

    def anchor(self, p: np.ndarray, key: float) -> None:
        self.add(p)
        self.events.append(("anchor", len(self.points) - 1, float(key)))

    def last_direction(self) -> Optional[str]:
        if len(self.points) < 2:
            return None
        a, b = self.points[-2], self.points[-1]
        return "h" if a[1] == b[1] else "v"


def _rep_key(D: OneDBV, s: float) -> float:
    """弧パラメータ s (連続点) での代表のパラメータ (s + l(s)) / (1 + L(1))"""
    return float((s + float(D.variation(s, inclusive=False))) / (1.0 + D.total_variation))


def _fill_keys(D: OneDBV, s: float) -> Tuple[float, float]:
    """s に最も近い節点のジャンプが埋められる代表パラメータの区間"""
    k = int(np.argmin(np.abs(D.knots - s * D.length)))
    lower, upper = D.knot_variations()
    base = float(D.knots[k] / D.length)
    period = 1.0 + D.total_variation
    return (base + float(lower[k])) / period, (base + float(upper[k])) / period


def _l_shape(P: np.ndarray, Q: np.ndarray, first: str) -> List[np.ndarray]:
    corner = np.array([Q[0], P[1]]) if first == "h" else np.array([P[0], Q[1]])
    out = [P]
    for p in (corner, Q):
        if np.any(p != out[-1]):
            out.append(p)
    return out


def _boundary_variation(f: TestMap, P: np.ndarray, Q: np.ndarray) -> float:
    x0, x1 = sorted((float(P[0]), float(Q[0])))
    y0, y1 = sorted((float(P[1]), float(Q[1])))
    try:
        if x0 == x1 or y0 == y1:
            return 2.0 * line_variation(f, P, Q)
        return float(sum(rect_side_variations(f, Rect(x0, x1, y0, y1))))
    except ValidationError:
        return float("inf")


def _crossing_jump_size(f: TestMap, a: np.ndarray, b: np.ndarray, t: float) -> float:
    return f.jump_size_at(a + t * (b - a)) if f.jumps else 0.0


def _rays(curve: Polyline, t: float) -> List[Tuple[int, np.ndarray]]:
    """交点から曲線に沿って出る 2 本の向き: (+1, 前向き), (−1, 後ろ向き)"""
    pts = curve.array()
    cum = curve.cumulative_lengths()
    s = t * cum[-1]
    tol = 1e-12 * max(1.0, float(cum[-1]))
    if s <= tol or s >= cum[-1] - tol:
        raise ValidationError("crossing at a curve end", {"t": t})
    kf = int(np.searchsorted(cum, s + tol, side="right") - 1)
    kb = int(np.searchsorted(cum, s - tol, side="left") - 1)
    forward = pts[kf + 1] - pts[kf]
    backward = pts[kb] - pts[kb + 1]
    return [(1, forward / np.hypot(*forward)), (-1, backward / np.hypot(*backward))]


def _crossing_room(grid: NonStraightGrid, f: TestMap, X: np.ndarray) -> float:
    """X から他の頂点・交点・ジャンプ集合・正方形の境界までの距離"""
    special = [c.array() for c in grid.curves]
    if grid.crossings:
        special.append(np.array([[float(p[0]), float(p[1])] for p in grid.crossings.values()]))
    pts = np.vstack(special)
    d = np.hypot(*(pts - X).T)
    room = float(d[d > 1e-12].min(initial=np.inf))
    if f.jumps:
        room = min(room, float(distance_to_jumps(f, X[None, :])[0]))
    return min(room, 1.0 - float(np.abs(X).max()))


class _Builder:
    """Γ̂ の折れ線を弧ごとに組み立てる"""

    def __init__(self, f: TestMap, sigma: float, big: float) -> None:
        self.f = f
        self.sigma = sigma
        self.big = big
        self.lip = f.lipschitz_bound()
        self.obstacles = _Obstacles()

    def leg_ok(self, a: np.ndarray, b: np.ndarray, allowed: Sequence[np.ndarray]) -> bool:
        coord = a[1] if a[1] == b[1] else a[0]
        if abs(coord) >= 1.0:
            return False
        if self.f.jump_overlaps(a, b):
            return False
        for t, _ in self.f.jump_crossings(a, b):
            if _crossing_jump_size(self.f, a, b, t) >= self.big:
                return False
        return self.obstacles.clear_of(a, b, allowed)

    def legs_ok(self, pts: List[np.ndarray], allowed: Sequence[np.ndarray]) -> bool:
        return all(self.leg_ok(a, b, allowed) for a, b in zip(pts[:-1], pts[1:]))

    def fits(self, P: np.ndarray, Q: np.ndarray, allowed: Sequence[np.ndarray]) -> bool:
        if _boundary_variation(self.f, P, Q) >= self.sigma / 4.0:
            return False
        return any(self.legs_ok(_l_shape(P, Q, o), allowed) for o in "hv")

    def cover(
        self,
        arc: int,
        p0: np.ndarray,
        p1: np.ndarray,
        start: Tuple[np.ndarray, float],
        end: Tuple[np.ndarray, float],
    ) -> List[Tuple[np.ndarray, float]]:
        """[start, end] の部分を、条件を満たす最大の刻みから貪欲に長方形で覆い、逆順削除で極小にする"""
        S, ua = start
        E, ub = end
        if not ua < ub:
            raise StageFailure("rectangle cover has an empty interval", {"arc": arc, "from": ua, "to": ub})
        allowed = (S, E)
        chain: List[Tuple[np.ndarray, float]] = [(S, ua)]
        u = ua
        step = ub - ua
        while u < ub:
            step = min(2.0 * step, ub - u)
            while True:
                nu = ub if step >= ub - u else u + step
                Q = E if nu == ub else p0 + nu * (p1 - p0)
                if self.fits(chain[-1][0], Q, allowed):
                    break
                step *= 0.5
                if step < _MIN_STEP:
                    P = chain[-1][0]
                    raise StageFailure(
                        "rectangle cover fails",
                        {"arc": arc, "u": u, "pair": ((float(P[0]), float(P[1])), (float(Q[0]), float(Q[1])))},
                    )
            chain.append((Q, nu))
            u = nu
        k = len(chain) - 2
        while k >= 1:
            if self.fits(chain[k - 1][0], chain[k + 1][0], allowed):
                del chain[k]
            k -= 1
        return chain

    def staircase(
        self,
        arc: int,
        D: OneDBV,
        p0: np.ndarray,
        p1: np.ndarray,
        start: Tuple[np.ndarray, float],
        end: Tuple[np.ndarray, float],
        draft: _Draft,
    ) -> None:
        chain = self.cover(arc, p0, p1, start, end)
        allowed = (start[0], end[0])
        for (P, _), (Q, u) in zip(chain[:-1], chain[1:]):
            prev = draft.last_direction()
            order = ("v", "h") if prev == "h" else ("h", "v")
            for o in order:
                pts = _l_shape(P, Q, o)
                if self.legs_ok(pts, allowed):
                    break
            else:
                raise StageFailure(
                    "rectangle cover breaks the intersection rules",
                    {"arc": arc, "pair": ((float(P[0]), float(P[1])), (float(Q[0]), float(Q[1])))},
                )
            for p in pts[1:-1]:
                draft.add(p)
            draft.anchor(Q, 1.0 if u == 1.0 else _rep_key(D, u))
            draft.rectangles += 1

    def bypass(
        self,
        arc: int,
        D: OneDBV,
        p0: np.ndarray,
        p1: np.ndarray,
        jump: Jump1D,
        room: float,
    ) -> Tuple[Bypass, List[np.ndarray], float, float]:
        """ジャンプ点 J の前後 b の点 A, B を、J を 1 回だけ横切る軸平行な 3 辺でつなぐ"""
        length = D.length
        cap = 4.0 * (self.sigma / BYPASS_SCALE) ** 2
        b = min(0.5 * cap / (self.lip + 1.0), 0.25 * room * length)
        J = p0 + jump.t * (p1 - p0)
        sA, sB = jump.t - b / length, jump.t + b / length
        A, B = p0 + sA * (p1 - p0), p0 + sB * (p1 - p0)
        found = self.f.jump_piece_at(J, tol=1e-9)
        normal = found[0].normal if found is not None else (p1 - p0)
        order = "hv" if abs(normal[0]) >= abs(normal[1]) else "vh"
        for o in order:
            if o == "h":
                raw = [A, np.array([A[0], J[1]]), np.array([B[0], J[1]]), B]
            else:
                raw = [A, np.array([J[0], A[1]]), np.array([J[0], B[1]]), B]
            pts = [raw[0]]
            for p in raw[1:]:
                if np.any(p != pts[-1]):
                    pts.append(p)
            crossing = self._single_crossing(pts)
            if crossing is None:
                continue
            if not all(self.obstacles.clear_of(x, y, (A, B)) for x, y in zip(pts[:-1], pts[1:])):
                continue
            errors = (
                float(np.hypot(*(D.value(sA) - jump.left))),
                float(np.hypot(*(D.value(sB) - jump.right))),
            )
            if max(errors) > cap:
                raise StageFailure(
                    "bypass endpoints are too far from the one-sided limits",
                    {"arc": arc, "errors": errors, "limit": cap},
                )
            record = Bypass(
                arc=arc,
                jump=(float(J[0]), float(J[1])),
                crossing=(float(crossing[0]), float(crossing[1])),
                entry=(float(A[0]), float(A[1])),
                exit=(float(B[0]), float(B[1])),
                size=jump.size,
                endpoint_errors=errors,
            )
            return record, pts, sA, sB
        raise StageFailure("no bypass crosses the jump exactly once", {"arc": arc, "point": (float(J[0]), float(J[1]))})

    def _single_crossing(self, pts: List[np.ndarray]) -> Optional[np.ndarray]:
        hits: List[np.ndarray] = []
        for a, b in zip(pts[:-1], pts[1:]):
            coord = a[1] if a[1] == b[1] else a[0]
            if abs(coord) >= 1.0 or self.f.jump_overlaps(a, b):
                return None
            hits.extend(a + t * (b - a) for t, _ in self.f.jump_crossings(a, b))
        if len(hits) != 1 or self.f.jump_size_at(hits[0]) < self.big:
            return None
        return hits[0]

    def arc_path(
        self,
        a: int,
        arc: ArcRep,
        start: Optional[Polyline],
        end: Optional[Polyline],
    ) -> Tuple[_Draft, List[Bypass]]:
        """start は X の近くの起点から打ち切り点までのらせん、end は打ち切り点から起点まで"""
        ends = arc.domain.array()
        p0, p1 = ends[0], ends[-1]
        length = arc.domain.length
        D = restrict_to_polyline(self.f, arc.domain)
        draft = _Draft()
        if start is not None:
            pts = start.array()
            draft.anchor(pts[0], 0.0)
            for p in pts[1:-1]:
                draft.add(p)
            u_s = float(np.hypot(*(pts[-1] - p0))) / length
            draft.anchor(pts[-1], _rep_key(D, u_s))
            S = pts[-1]
        else:
            S, u_s = p0, 0.0
            draft.anchor(S, 0.0)
        if end is not None:
            tail = end.array()
            E = tail[0]
            u_e = 1.0 - float(np.hypot(*(E - p1))) / length
        else:
            tail = None
            E, u_e = p1, 1.0

        big = [j for j in D.jumps if j.size >= self.big]
        for j in big:
            if not u_s < j.t < u_e:
                raise StageFailure("large jump inside a spiral", {"arc": a, "t": j.t})
        stops = [u_s] + [j.t for j in big] + [u_e]
        bypasses: List[Bypass] = []
        cursor: Tuple[np.ndarray, float] = (S, u_s)
        for n, j in enumerate(big):
            room = min(j.t - stops[n], stops[n + 2] - j.t)
            record, pts, sA, sB = self.bypass(a, D, p0, p1, j, room)
            self.obstacles.add(pts)
            self.staircase(a, D, p0, p1, cursor, (pts[0], sA), draft)
            for p in pts[1:-1]:
                draft.add(p)
            lo, hi = _fill_keys(D, j.t)
            draft.events.append(("fill", np.array(record.crossing), lo, hi))
            draft.anchor(pts[-1], _rep_key(D, sB))
            draft.bypasses += 1
            bypasses.append(record)
            cursor = (pts[-1], sB)
        self.staircase(a, D, p0, p1, cursor, (E, u_e), draft)
        if tail is not None:
            for p in tail[1:-1]:
                draft.add(p)
            draft.anchor(tail[-1], 1.0)
        self.obstacles.add(draft.points)
        return draft, bypasses


def _crossing_spirals(
    rep: GeomRep,
    f: TestMap,
    sigma: float,
    lip: float,
    rng: np.random.Generator,
    budget: int,
    tau_density: float,
) -> Tuple[List[SpiralReplacement], Dict[Tuple[int, int], List[Tuple[float, Polyline]]]]:
    """交点ごとのらせん置換と、(曲線, 向き) → [(交点のパラメータ, 起点から打ち切り点までの折れ線)]"""
    grid = rep.grid
    spirals: List[SpiralReplacement] = []
    pieces: Dict[Tuple[int, int], List[Tuple[float, Polyline]]] = {}
    for (i, j), point in sorted(grid.crossings.items()):
        X = np.array([float(point[0]), float(point[1])])
        keys: List[Tuple[int, int, float]] = []
        dirs: List[np.ndarray] = []
        for c in (i, j):
            t = grid.curves[c].parameter_of(X)
            for sign, d in _rays(grid.curves[c], t):
                keys.append((c, sign, t))
                dirs.append(d)
        room = _crossing_room(grid, f, X)
        r = min(sigma / (SPIRAL_FACTOR * (lip + 1.0)), room / 32.0)
        out = spiral_replacement(X, dirs, r, f, sigma, rng=rng, budget=budget, tau_density=tau_density)
        spirals.append(out)
        for (c, sign, t), piece in zip(keys, out.pieces):
            pieces.setdefault((c, sign), []).append((t, piece))
    return spirals, pieces


def _piece_at(table: Dict[Tuple[int, int], List[Tuple[float, Polyline]]], curve: int, sign: int, t: float) -> Optional[Polyline]:
    for s, piece in table.get((curve, sign), []):
        if abs(s - t) <= 1e-9:
            return piece
    return None


def _check_disjoint(paths: List[Polyline]) -> None:
    """各折れ線が単射で、異なる折れ線は共有する端点でしか交わらないこと"""
    for n, p in enumerate(paths):
        ok, pair = is_injective_polyline(p)
        if not ok:
            raise StageFailure("transferred path is not injective", {"arc": n, "segments": pair})
    owner: List[int] = []
    segments: List[Segment] = []
    for n, p in enumerate(paths):
        for s in p.segments:
            owner.append(n)
            segments.append(s)
    starts = np.array([[float(s.a[0]), float(s.a[1])] for s in segments])
    ends = np.array([[float(s.b[0]), float(s.b[1])] for s in segments])
    tips = [{tuple(map(float, p.vertices[0])), tuple(map(float, p.vertices[-1]))} for p in paths]
    for i, j in sweep_candidate_pairs(segment_boxes(starts, ends)):
        a, b = owner[i], owner[j]
        if a == b:
            continue
        hit = segment_intersection(segments[i], segments[j])
        if hit.is_empty:
            continue
        point = tuple(map(float, hit.points[0]))
        if hit.kind == "point" and point in tips[a] and point in tips[b]:
            continue
        raise StageFailure("transferred paths intersect", {"pair": (a, b), "point": point})


def _adaptive_radii(f: TestMap, grid: StraightGrid) -> Tuple[float, ...]:
    """交点でのジャンプ集合までの距離より小さい 3 つの半径 2⁻ʲ"""
    top = 2.0 ** -16
    if f.jumps and grid.x_coords and grid.y_coords:
        xx, yy = np.meshgrid(grid.x_coords, grid.y_coords)
        d = float(distance_to_jumps(f, np.column_stack([xx.ravel(), yy.ravel()])).min())
        while top * 2.0 * np.sqrt(2.0) >= d and top > 2.0 ** -60:
            top *= 0.5
    return (top, 0.5 * top, 0.25 * top)


def _grid_cuts(path: Polyline, grid: StraightGrid) -> List[float]:
    """Γ̃ の交点になる折れ線上のパラメータ"""
    xs = np.array(grid.x_coords)
    ys = np.array(grid.y_coords)
    pts = path.array()
    cum = path.cumulative_lengths()
    out: List[float] = []
    for k in range(len(pts) - 1):
        a, b = pts[k], pts[k + 1]
        axis = 0 if a[1] == b[1] else 1
        coords = xs if axis == 0 else ys
        lo, hi = sorted((a[axis], b[axis]))
        sel = coords[(coords >= lo) & (coords <= hi)]
        out.extend(((cum[k] + np.abs(sel - a[axis])) / cum[-1]).tolist())
    return out


def _path_fill(D_path: OneDBV, rep: CurveRep, t: float) -> Tuple[float, float]:
    """折れ線上のジャンプ横断点 t で h_Γ̃ が埋める区間 (折れ線パラメータ)"""
    k = int(np.clip(np.searchsorted(rep.cuts, t, side="right") - 1, 0, len(rep.arcs) - 1))
    c0, c1 = float(rep.cuts[k]), float(rep.cuts[k + 1])
    lo, hi = _fill_keys(D_path.slice(c0, c1), (t - c0) / (c1 - c0))
    return c0 + lo * (c1 - c0), c0 + hi * (c1 - c0)


def _finish_path(a: int, arc: ArcRep, draft: _Draft, grid: StraightGrid, f: TestMap) -> ArcPath:
    path = Polyline.from_points(draft.points)
    cum = path.cumulative_lengths()
    anchors = [cum[e[1]] / cum[-1] for e in draft.events if e[0] == "anchor"]
    D_path = restrict_to_polyline(f, path)
    rep = split_curve(D_path, anchors + _grid_cuts(path, grid), a)
    pairs: List[Tuple[float, float]] = []
    for e in draft.events:
        if e[0] == "anchor":
            pairs.append((e[2], float(cum[e[1]] / cum[-1])))
        else:
            t_lo, t_hi = _path_fill(D_path, rep, path.parameter_of(e[1]))
            pairs += [(e[2], t_lo), (e[3], t_hi)]
    keys_a: List[float] = []
    keys_p: List[float] = []
    for u, t in pairs:
        if not keys_a or (u > keys_a[-1] and t > keys_p[-1]):
            keys_a.append(u)
            keys_p.append(t)
    if keys_a[-1] < 1.0 or keys_p[-1] < 1.0:
        keys_a[-1], keys_p[-1] = 1.0, 1.0
    return ArcPath(
        arc=a,
        curve=arc.curve,
        path=path,
        rep=rep,
        arc_keys=np.array(keys_a),
        path_keys=np.array(keys_p),
        rectangles=draft.rectangles,
        bypasses=draft.bypasses,
    )


def transfer_nonstraight_to_straight(
    f: TestMap,
    g: NonStraightGrid,
    sigma: float,
    rng: Optional[np.random.Generator] = None,
    jump_threshold_factor: float = JUMP_THRESHOLD_FACTOR,
    transfer_factor: float = TRANSFER_FACTOR,
    budget: int = DEFAULT_BUDGET,
    tau_rep: float = TAU_REP,
    tau_density: float = TAU_DENSITY,
) -> Transfer:
    """許容的な非直線グリッド Γ から、f に対して良い直線グリッド Γ̃ と Γ̂ ⊂ Γ̃、対応 g: Γ̂ → Γ を作る"""
    if sigma <= 0.0:
        raise ValidationError("sigma must be positive", {"sigma": sigma})
    for n, curve in enumerate(g.curves):
        for p in (curve.vertices[0], curve.vertices[-1]):
            if abs(float(p[0])) == 1.0 and abs(float(p[1])) == 1.0:
                raise ValidationError("grid curve ends at a corner of the square", {"curve": n})
    source = build_geom_rep(f, g, tau_rep=tau_rep, tau_density=tau_density)
    generator = rng if rng is not None else np.random.default_rng(0)
    builder = _Builder(f, sigma, sigma / jump_threshold_factor)

    spirals, pieces = _crossing_spirals(source, f, sigma, builder.lip, generator, budget, tau_density)
    for s in spirals:
        for piece in s.pieces:
            builder.obstacles.add(piece.array())

    drafts: List[_Draft] = []
    bypasses: List[Bypass] = []
    for a, arc in enumerate(source.arcs):
        start = _piece_at(pieces, arc.curve, 1, arc.t0)
        end = _piece_at(pieces, arc.curve, -1, arc.t1)
        draft, found = builder.arc_path(a, arc, start, end.reversed() if end is not None else None)
        drafts.append(draft)
        bypasses += found

    polylines = [Polyline.from_points(d.points) for d in drafts]
    _check_disjoint(polylines)
    grid = generate_straight_grid(s for p in polylines for s in p.segments)
    report = check_admissible(grid, f, _adaptive_radii(f, grid), tau_density=tau_density)
    if not report.ok:
        cond, message, witness = report.failures[0]
        raise StageFailure(f"straight grid is not admissible: {message}", {"conditions": report.failed_conditions, **witness})

    paths = tuple(_finish_path(a, arc, d, grid, f) for a, (arc, d) in enumerate(zip(source.arcs, drafts)))
    out = Transfer(
        source=source,
        grid=grid,
        paths=paths,
        sigma=sigma,
        spirals=tuple(spirals),
        bypasses=tuple(bypasses),
        admissibility=report,
        transfer_factor=transfer_factor,
    )
    logger.info(
        f"Transferred {len(paths)} arcs to a straight grid with {grid.n_lines} lines: "
        f"{len(spirals)} spirals, {len(bypasses)} bypasses, "
        f"{sum(p.rectangles for p in paths)} rectangles"
    )
    return out
