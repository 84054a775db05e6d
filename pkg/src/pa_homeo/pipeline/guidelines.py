"""
跳びのある四角形の切片と案内線

𝒬 を方向 u に平行な細長い切片 S_m に切る。各切片では、∂𝒬 ∩ S_m の上の
f の変動が ε4^{-K} 未満か、境界との交わり S_m^± が十分短いかのどちらかが
成り立つように、切片を 2 等分し続ける。変動の小さい切片には u に平行な
案内線を 1 本引き、(切片の幅)·(線上の変動) ≤ |D_u f|(S_m) を満たす位置を選ぶ。
u = v と u = v⊥ の 2 方向について同じことをする。
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from ..core.errors import ValidationError
from ..extend.fibers import fiber_frame
from ..geom.polygon import clip_convex, polygon_area
from ..mapcat.catalogue import TestMap
from ..mapcat.onedbv import OneDBV, line_variation, restrict_to_polyline

# 案内線の候補の数 (切片の両端のすぐ内側から中点を挟んで等間隔)
GUIDE_SAMPLES = 3
# 候補を切片の端から内側へずらす割合 (角を通る長さ 0 の弦を避ける)
GUIDE_INSET = 1e-6
# 切片を 2 等分する回数の上限
MAX_SLICE_DEPTH = 48


@dataclass(frozen=True)
class Slice:
    """横断座標 ⟨x, w⟩ ∈ [lo, hi] の切片"""
    lo: float
    hi: float
    boundary_variation: float
    upper: float
    lower: float
    guide: Optional[float] = None
    guide_ends: Optional[np.ndarray] = None
    guide_variation: float = 0.0
    strip_variation: float = 0.0

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def split_ratio(self, small: float, thin: float) -> float:
        """< 1 なら変動が小さいか S^± が短い"""
        return min(self.boundary_variation / small, max(self.upper, self.lower) / thin)

    @property
    def helper_ratio(self) -> float:
        """(幅)·(案内線上の変動) / |D_u f|(S)"""
        product = self.width * self.guide_variation
        if product == 0.0:
            return 0.0
        return product / self.strip_variation if self.strip_variation > 0.0 else float("inf")


@dataclass(frozen=True)
class Guidelines:
    direction: np.ndarray
    slices: Tuple[Slice, ...]
    small: float
    thin: float

    @property
    def split_ratio(self) -> float:
        return max((s.split_ratio(self.small, self.thin) for s in self.slices), default=0.0)

    @property
    def helper_ratio(self) -> float:
        return max((s.helper_ratio for s in self.slices if s.guide is not None), default=0.0)

    def lines(self) -> List[np.ndarray]:
        return [s.guide_ends for s in self.slices if s.guide_ends is not None]


class _Boundary:
    """四角形の各辺への f の制限と、横断座標の区間に入る部分の測度"""

    def __init__(self, f: TestMap, quad: np.ndarray, u: np.ndarray, w: np.ndarray):
        self.quad = quad
        self.ends = [(quad[k], quad[(k + 1) % len(quad)]) for k in range(len(quad))]
        self.restrictions: List[OneDBV] = [restrict_to_polyline(f, [a, b]) for a, b in self.ends]
        # 外向き法線が u と同じ向きの辺が上側
        self.upper = [float(np.array([b[1] - a[1], a[0] - b[0]]) @ u) > 0.0 for a, b in self.ends]
        self.w = w

    def big_jumps(self, threshold: float) -> int:
        return int(sum(np.count_nonzero(r.jump_sizes() > threshold) for r in self.restrictions))

    def measure(self, lo: float, hi: float) -> Tuple[float, float, float]:
        """(変動, ℋ¹(S⁺), ℋ¹(S⁻))"""
        var = up = down = 0.0
        for (a, b), r, upper in zip(self.ends, self.restrictions, self.upper):
            sa, sb = float(a @ self.w), float(b @ self.w)
            if sa == sb:
                # u に平行な辺は横断方向の長さを持たない
                if lo <= sa <= hi:
                    var += r.total_variation
                continue
            l0, l1 = sorted(((lo - sa) / (sb - sa), (hi - sa) / (sb - sa)))
            l0, l1 = max(l0, 0.0), min(l1, 1.0)
            if l1 <= l0:
                continue
            var += float(r.variation(l1) - r.variation(l0, inclusive=False))
            length = (l1 - l0) * r.length
            if upper:
                up += length
            else:
                down += length
        return var, up, down


def _chord(quad: np.ndarray, w: np.ndarray, u: np.ndarray, s: float) -> Optional[np.ndarray]:
    """⟨x, w⟩ = s と 𝒬 の交わり (⟨x, u⟩ の昇順の 2 点)"""
    pts: List[np.ndarray] = []
    for k in range(len(quad)):
        a, b = quad[k], quad[(k + 1) % len(quad)]
        sa, sb = float(a @ w), float(b @ w)
        if min(sa, sb) <= s <= max(sa, sb) and sa != sb:
            pts.append(a + (s - sa) / (sb - sa) * (b - a))
    if len(pts) < 2:
        return None
    pts.sort(key=lambda p: float(p @ u))
    return np.array([pts[0], pts[-1]])


def _strip(quad: np.ndarray, w: np.ndarray, u: np.ndarray, lo: float, hi: float) -> np.ndarray:
    t = quad @ u
    a, b = float(t.min()) - 1.0, float(t.max()) + 1.0
    window = np.array([lo * w + a * u, hi * w + a * u, hi * w + b * u, lo * w + b * u])
    return clip_convex(quad, window)


def _guide(f: TestMap, quad: np.ndarray, w: np.ndarray, u: np.ndarray, part: Slice) -> Slice:
    """候補の中で線上の変動が最小の位置に案内線を引く

    凸な 𝒬 では弦の長さが横断座標の凹関数なので、両端の小さいほうは切片での平均以下
    """
    strip = _strip(quad, w, u, part.lo, part.hi)
    strip_var = f.measure(strip, "directional", u) if len(strip) >= 3 and polygon_area(strip) > 0.0 else 0.0
    best: Optional[Tuple[float, float, np.ndarray]] = None
    inset = GUIDE_INSET * part.width
    for s in np.linspace(part.lo + inset, part.hi - inset, GUIDE_SAMPLES):
        ends = _chord(quad, w, u, float(s))
        if ends is None:
            continue
        try:
            var = line_variation(f, ends[0], ends[1])
        except ValidationError:
            # 跳びの集合に乗った線は使わない
            continue
        if best is None or var < best[0]:
            best = (var, float(s), ends)
    if best is None:
        return Slice(part.lo, part.hi, part.boundary_variation, part.upper, part.lower, strip_variation=strip_var)
    var, s, ends = best
    return Slice(part.lo, part.hi, part.boundary_variation, part.upper, part.lower, s, ends, var, strip_var)


def choose_guidelines(
    f: TestMap,
    quad: np.ndarray,
    u: Sequence[float],
    eps: float,
    K: int,
    grid_variation: float,
    max_depth: int = MAX_SLICE_DEPTH,
) -> Guidelines:
    """u に平行な切片と案内線。grid_variation は格子全体の上の |D_τ f|"""
    fu, w = fiber_frame(u)
    quad = np.asarray(quad, dtype=float)
    boundary = _Boundary(f, quad, fu, w)
    small = eps * 4.0 ** -K
    thin = eps / (4.0 ** K * max(grid_variation, small) * max(boundary.big_jumps(small), 1))
    s = quad @ w
    stack = [(float(s.min()), float(s.max()), 0)]
    parts: List[Slice] = []
    while stack:
        lo, hi, depth = stack.pop()
        var, up, down = boundary.measure(lo, hi)
        part = Slice(lo, hi, var, up, down)
        if var < small or max(up, down) < thin or depth >= max_depth:
            parts.append(part)
            continue
        mid = 0.5 * (lo + hi)
        stack.extend([(mid, hi, depth + 1), (lo, mid, depth + 1)])
    slices = tuple(_guide(f, quad, w, fu, p) if p.boundary_variation < small else p for p in parts)
    out = Guidelines(fu, slices, small, thin)
    logger.debug(
        f"Guidelines along {tuple(np.round(fu, 6))}: {len(slices)} slices, "
        f"split ratio {out.split_ratio:.3g}, helper ratio {out.helper_ratio:.3g}"
    )
    return out


def jump_guidelines(
    f: TestMap, quad: np.ndarray, v: Sequence[float], eps: float, K: int, grid_variation: float
) -> Tuple[Guidelines, Guidelines]:
    """(v に平行な切片 S, v⊥ に平行な切片 T)"""
    fv = np.asarray(v, dtype=float)
    return (
        choose_guidelines(f, quad, fv, eps, K, grid_variation),
        choose_guidelines(f, quad, np.array([-fv[1], fv[0]]), eps, K, grid_variation),
    )
