"""
交点のらせん置換

交点 X から出る 4 本の半直線を、X の近くの共通の起点から出る 4 本の
軸平行な折れ線で置き換える。折れ線は基本らせん γ₁* とその時計回り
90°, 180°, 270° 回転を縮小したもので、最初に当たったまだ使われていない
半直線のところで打ち切る。
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from ..core.errors import ValidationError
from ..geom.primitives import Point2, Polyline, Segment, as_point, segment_intersection
from ..grid.admissibility import TAU_DENSITY, density_vanishes
from ..mapcat.catalogue import TestMap
from ..mapcat.measures import density_ratios
from ..mapcat.onedbv import restrict_to_polyline
from ..utils.sampling import DEFAULT_BUDGET, Rejected, SamplingLedger, rejection_sample

BASE_SPIRAL = np.array(
    [[0.0, 0.0], [1.0, 0.0], [1.0, 2.0], [-3.0, 2.0], [-3.0, -4.0], [5.0, -4.0], [5.0, 6.0], [-7.0, 6.0]]
)
# 起点のずれ |u|₁ ≤ δr
ANCHOR_DELTA = 1.0 / 16.0
# 半直線は X + [0, 16r]·v で打ち切って扱う
RAY_REACH = 16.0
# らせんの密度判定に使う半径
_DENSITY_RADII = tuple(2.0 ** -k for k in range(14, 17))


def rotate_cw(points: np.ndarray, quarter_turns: int) -> np.ndarray:
    """時計回りに 90°·quarter_turns 回す ((x, y) → (y, −x) の繰り返し)"""
    out = np.array(points, dtype=float)
    for _ in range(quarter_turns % 4):
        out = np.column_stack([out[:, 1], -out[:, 0]])
    return out


# γ₁*, γ₂*, γ₃*, γ₄* は最初の向きが +x, −y, −x, +y
SPIRALS = tuple(rotate_cw(BASE_SPIRAL, k) for k in range(4))
# 象限 P1..P4 (0..3) に使うらせん: P1 → γ₁*, P2 → γ₄*, P3 → γ₃*, P4 → γ₂*
QUADRANT_SPIRAL = (0, 3, 2, 1)


def quadrant_of(v: Sequence[float]) -> int:
    """P1 = {x > 0, y ≥ 0}, P2 = {x ≤ 0, y > 0}, P3 = {x < 0, y ≤ 0}, P4 = {x ≥ 0, y < 0}"""
    x, y = float(v[0]), float(v[1])
    if x > 0 and y >= 0:
        return 0
    if x <= 0 and y > 0:
        return 1
    if x < 0 and y <= 0:
        return 2
    if x >= 0 and y < 0:
        return 3
    raise ValidationError("zero ray direction")


def start_quadrant(counts: Sequence[int]) -> int:
    """らせんを置き始める象限"""
    top = max(counts)
    leaders = [q for q in range(4) if counts[q] == top]
    if len(leaders) == 1:
        return (leaders[0] + 1) % 4
    if top == 1:
        return 0
    doubles = [q for q in range(4) if counts[q] == 2]
    if len(doubles) == 2:
        a, b = doubles
        if (a + 1) % 4 == b:
            return (b + 1) % 4
        if (b + 1) % 4 == a:
            return (a + 1) % 4
    occupied = [q for q in range(4) if counts[q] > 0]
    return (occupied[0] + 1) % 4


@dataclass(frozen=True)
class SpiralReplacement:
    """打ち切ったらせん (入力の半直線の順に並ぶ) と共通の起点"""
    center: Point2
    anchor: Point2
    r: float
    pieces: Tuple[Polyline, ...]
    hits: Tuple[Point2, ...]
    oscillations: Tuple[float, ...]
    attempts: int = 1

    @property
    def hit_distances(self) -> Tuple[float, ...]:
        """X から各半直線上の打ち切り点までの距離"""
        c = np.array(self.center)
        return tuple(float(np.hypot(*(np.array(h) - c))) for h in self.hits)


def oscillation(f: TestMap, piece: Polyline) -> float:
    """折れ線上の f の振動 (片側極限を含む値の集合の直径)"""
    restriction = restrict_to_polyline(f, piece)
    values = np.vstack([restriction.left, restriction.right])
    diff = values[:, None, :] - values[None, :, :]
    return float(np.sqrt((diff ** 2).sum(axis=2)).max())


def _first_hit(path: np.ndarray, rays: List[Tuple[int, Segment]]) -> Optional[Tuple[int, int, np.ndarray]]:
    """らせんに沿って最初に当たる半直線: (線分番号, 半直線番号, 点)"""
    for k in range(len(path) - 1):
        seg = Segment(as_point(path[k]), as_point(path[k + 1]))
        best: Optional[Tuple[float, int, np.ndarray]] = None
        for idx, ray in rays:
            hit = segment_intersection(seg, ray)
            if hit.is_empty:
                continue
            for p in hit.points:
                q = np.array([float(p[0]), float(p[1])])
                d = float(np.hypot(*(q - path[k])))
                if best is None or d < best[0]:
                    best = (d, idx, q)
        if best is not None:
            return k, best[1], best[2]
    return None


def _truncate(path: np.ndarray, k: int, point: np.ndarray) -> np.ndarray:
    head = path[: k + 1]
    if np.hypot(*(point - head[-1])) > 0.0:
        return np.vstack([head, point])
    return head


def _contacts(a: Polyline, b: Polyline) -> List[Point2]:
    out: List[Point2] = []
    for s in a.segments:
        for t in b.segments:
            hit = segment_intersection(s, t, exact=True)
            out.extend(hit.points)
    return out


def _place(
    X: np.ndarray,
    rays: np.ndarray,
    r: float,
    anchor: np.ndarray,
    f: TestMap,
    sigma: float,
) -> SpiralReplacement:
    """起点を固定してらせんを打ち切り、検査する (不合格なら Rejected)"""
    quadrants = [quadrant_of(v) for v in rays]
    counts = [quadrants.count(q) for q in range(4)]
    start = start_quadrant(counts)
    ray_segments = [Segment(as_point(X), as_point(X + RAY_REACH * r * v)) for v in rays]
    untaken = list(range(len(rays)))
    pieces: Dict[int, Polyline] = {}
    hits: Dict[int, np.ndarray] = {}
    for step in range(4):
        q = (start + step) % 4
        path = anchor[None, :] + r * SPIRALS[QUADRANT_SPIRAL[q]]
        found = _first_hit(path, [(i, ray_segments[i]) for i in untaken])
        if found is None:
            raise Rejected("spiral misses every free ray", quadrant=q + 1)
        k, idx, point = found
        if np.hypot(*(point - anchor)) == 0.0:
            raise Rejected("anchor lies on a ray", ray=idx)
        piece = _truncate(path, k, point)
        if np.abs(piece).max() >= 1.0:
            raise Rejected("spiral leaves the square", quadrant=q + 1)
        pieces[idx] = Polyline.from_points(piece)
        hits[idx] = point
        untaken.remove(idx)

    order = sorted(pieces)
    anchor_pt = (float(anchor[0]), float(anchor[1]))
    for n, i in enumerate(order):
        for j in order[n + 1:]:
            for p in _contacts(pieces[i], pieces[j]):
                if (float(p[0]), float(p[1])) != anchor_pt:
                    raise Rejected("spirals meet away from the anchor", pair=(i, j), point=tuple(map(float, p)))
        for j in order:
            if j == i:
                continue
            rest = Polyline.from_points([hits[j], X + RAY_REACH * r * rays[j]])
            if _contacts(pieces[i], rest):
                raise Rejected("spiral meets another ray beyond its cut", piece=i, ray=j)

    osc = [oscillation(f, pieces[i]) for i in order]
    worst = max(osc)
    if worst > sigma / 4.0:
        raise Rejected("oscillation above sigma/4", worst, oscillation=worst)
    return SpiralReplacement(
        center=as_point(X),
        anchor=as_point(anchor),
        r=r,
        pieces=tuple(pieces[i] for i in order),
        hits=tuple(as_point(hits[i]) for i in order),
        oscillations=tuple(osc),
    )


def draw_anchor(X: np.ndarray, r: float, rng: np.random.Generator, delta: float = ANCHOR_DELTA) -> np.ndarray:
    """{|u|₁ ≤ δr} 上の一様分布で X + u を引く"""
    a, b = rng.uniform(-1.0, 1.0, 2)
    return X + delta * r * np.array([0.5 * (a + b), 0.5 * (a - b)])


def spiral_replacement(
    X: Sequence[float],
    rays: Sequence[Sequence[float]],
    r: float,
    f: TestMap,
    sigma: float,
    rng: Optional[np.random.Generator] = None,
    budget: int = DEFAULT_BUDGET,
    tau_density: float = TAU_DENSITY,
) -> SpiralReplacement:
    """交点 X の 4 本の半直線をらせんで置き換える"""
    x = np.array([float(X[0]), float(X[1])])
    dirs = np.array(rays, dtype=float).reshape(-1, 2)
    if len(dirs) != 4:
        raise ValidationError("a crossing has exactly four rays", {"rays": len(dirs)})
    if r <= 0.0 or sigma <= 0.0:
        raise ValidationError("scale and tolerance must be positive", {"r": r, "sigma": sigma})
    norms = np.hypot(*dirs.T)
    if np.any(np.abs(norms - 1.0) > 1e-9):
        raise ValidationError("rays must be unit vectors")
    for i in range(4):
        for j in range(i + 1, 4):
            if np.hypot(*(dirs[i] - dirs[j])) <= 1e-12:
                raise ValidationError("rays must be distinct", {"pair": (i, j)})
    ratios = [float(density_ratios(f, x[None, :], rho)[0]) for rho in _DENSITY_RADII]
    if f.jump_size_at(x) > 0.0 or not density_vanishes(ratios, tau_density):
        raise ValidationError("density of |Df| does not vanish at the crossing", {"point": tuple(x), "ratios": ratios})
    generator = rng if rng is not None else np.random.default_rng(0)

    def draw(gen: np.random.Generator) -> SpiralReplacement:
        return _place(x, dirs, r, draw_anchor(x, r, gen), f, sigma)

    ledger: SamplingLedger[SpiralReplacement] = rejection_sample(draw, generator, budget, what="spiral anchor")
    assert ledger.value is not None
    out = ledger.value
    logger.debug(
        f"Spiral replacement at ({x[0]:.6f}, {x[1]:.6f}): r={r:.3e}, "
        f"max oscillation {max(out.oscillations):.3e}, {ledger.attempts} draws"
    )
    return SpiralReplacement(out.center, out.anchor, out.r, out.pieces, out.hits, out.oscillations, ledger.attempts)
