"""
二進正方形の分類

レベル K の格子 {Q_i} (1 辺 2^{1-K}) の各正方形を次のどれかに分ける。

- G: 近くで f がほぼアフィンで、det ∇f が正
- T: 近くで f がほぼアフィンで、∇f が階数 1
- W: それ以外 (外周の輪もここに入れる)
- F: ジャンプ集合の被覆に重なる正方形とその 8 近傍
- E: F のうち、ジャンプ点 w を含み極分解 u⊗v がほぼ一定のもの

K は k_min から順に試し、すべての結論が確かめられた最小のレベルを採る。
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy.ndimage import binary_dilation

from ..core.errors import StageFailure, ValidationError
from ..mapcat.catalogue import SQUARE, TestMap, square_polygon
from ..mapcat.cells import JUMP_TOL, clip_segment_convex, measure_cells_in, measure_jumps_in
from ..mapcat.measures import Rect, distance_to_jumps
from .isolate import isolate_singular_support
from .ledger import Check, Ledger, first_failure

# α₀ = ε/2^j を試す回数
ALPHA0_STEPS = 8
# α はこれ以下に取る
ALPHA_CAP = 2.0 ** -9
# 階数 1 とみなす |det ∇f|
DET_TOL = 1e-12
# 正方形あたりの Z 判定の標本は Z_SAMPLES² 点
Z_SAMPLES = 8
# ジャンプ片上の極分解の一定性を測る Gauss-Legendre 点数
POLAR_NODES = 8

Index = Tuple[int, int]


class Category(str, Enum):
    GOOD = "G"
    FLAT = "T"
    WILD = "W"
    NEAR_JUMP = "F"
    JUMP = "E"


@dataclass(frozen=True)
class SquareClassification:
    """レベル K の分類結果。配列は [i, j] (i が x 方向) で引く"""
    K: int
    eps: float
    alpha0: float
    alpha: float
    labels: np.ndarray
    anchors: np.ndarray
    gradients: np.ndarray
    polars: Dict[Index, Tuple[np.ndarray, np.ndarray]]
    conclusions: Ledger
    cover: Tuple[Rect, ...] = ()
    f: Optional[TestMap] = field(default=None, compare=False, repr=False)

    @property
    def n(self) -> int:
        return 2 ** self.K

    @property
    def side(self) -> float:
        return 2.0 ** (1 - self.K)

    def rect(self, i: int, j: int) -> Rect:
        h = self.side
        return Rect(-1.0 + i * h, -1.0 + (i + 1) * h, -1.0 + j * h, -1.0 + (j + 1) * h)

    def center(self, i: int, j: int) -> np.ndarray:
        return self.rect(i, j).center

    def category(self, i: int, j: int) -> Category:
        return Category(self.labels[i, j])

    def mask(self, *categories: Category) -> np.ndarray:
        return np.isin(self.labels, [c.value for c in categories])

    def indices(self, *categories: Category) -> List[Index]:
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(self.mask(*categories)))]

    def counts(self) -> Dict[str, int]:
        return {c.value: int(self.mask(c).sum()) for c in Category}

    def in_z(self, i: int, j: int, points: np.ndarray) -> np.ndarray:
        """Z_{i,α}: 2Q_i の閉包のうち、f がアフィン近似から α⁴2^{-K} 以内でジャンプに乗らない点"""
        if self.f is None:
            raise ValidationError("classification carries no map")
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        c = self.center(i, j)
        inside = np.all(np.abs(pts - c) <= self.side * (1.0 + 1e-12), axis=1)
        if self.f.jumps:
            inside &= distance_to_jumps(self.f, pts) > 0.0
        if self.category(i, j) not in (Category.GOOD, Category.FLAT):
            return inside
        return inside & (_affine_error(self.f, self.anchors[i, j], self.gradients[i, j], pts) < self.alpha ** 4 * 2.0 ** -self.K)


def _affine_error(f: TestMap, w: np.ndarray, A: np.ndarray, pts: np.ndarray) -> np.ndarray:
    pred = f.evaluate(w) + (pts - w) @ A.T
    return np.hypot(*(f.evaluate(pts) - pred).T)


@dataclass
class _LevelData:
    """α₀ によらない正方形ごとの量"""
    K: int
    in_f: np.ndarray
    ring: np.ndarray
    anchors: np.ndarray
    gradients: np.ndarray
    deviation: np.ndarray
    ac: np.ndarray
    sing: np.ndarray
    polars: Dict[Index, Tuple[np.ndarray, np.ndarray]]
    polar_ratio: float


def _f_mask(cover: Sequence[Rect], K: int) -> np.ndarray:
    """被覆と正の面積で重なる正方形とその 8 近傍"""
    n = 2 ** K
    h = 2.0 ** (1 - K)
    mask = np.zeros((n, n), dtype=bool)
    for r in cover:
        i0 = max(0, int(np.floor((r.x0 + 1.0) / h)))
        i1 = min(n, int(np.ceil((r.x1 + 1.0) / h)))
        j0 = max(0, int(np.floor((r.y0 + 1.0) / h)))
        j1 = min(n, int(np.ceil((r.y1 + 1.0) / h)))
        mask[i0:i1, j0:j1] = True
    if not mask.any():
        return mask
    return binary_dilation(mask, structure=np.ones((3, 3), dtype=bool))


def polar_defect(f: TestMap, u: np.ndarray, v: np.ndarray, region: np.ndarray) -> float:
    """∫_{J_f ∩ region} |(f⁺ − f⁻)⊗ν − |f⁺ − f⁻| u⊗v| dℋ¹"""
    nodes, weights = np.polynomial.legendre.leggauss(POLAR_NODES)
    target = np.outer(u, v)
    total = 0.0
    for piece in f.jumps:
        hit = clip_segment_convex(piece.start, piece.end, region)
        if hit is None:
            continue
        t0, t1, _ = hit
        t = 0.5 * (t1 - t0) * nodes + 0.5 * (t0 + t1)
        jumps = np.outer(1.0 - t, piece.jump_start) + np.outer(t, piece.jump_end)
        size = np.hypot(*jumps.T)
        outer = jumps[:, :, None] * piece.normal[None, None, :]
        diff = outer - size[:, None, None] * target[None]
        values = np.sqrt((diff ** 2).sum(axis=(1, 2)))
        total += 0.5 * (t1 - t0) * piece.length * float(values @ weights)
    return total


def _jump_anchor(f: TestMap, rect: Rect) -> Optional[np.ndarray]:
    """閉正方形の中でジャンプが消えない点 (片の切り口の中点)"""
    poly = rect.polygon()
    for piece in f.jumps:
        hit = clip_segment_convex(piece.start, piece.end, poly)
        if hit is None or hit[1] - hit[0] <= 1e-12:
            continue
        t = 0.5 * (hit[0] + hit[1])
        if np.hypot(*piece.jump_at(t)) > JUMP_TOL:
            return piece.point_at(t)
    return None


def _level_data(f: TestMap, eps: float, K: int, cover: Sequence[Rect]) -> _LevelData:
    n = 2 ** K
    h = 2.0 ** (1 - K)
    coords = -1.0 + (np.arange(n) + 0.5) * h
    anchors = np.stack(np.meshgrid(coords, coords, indexing="ij"), axis=-1)
    in_f = _f_mask(cover, K)
    ring = np.zeros((n, n), dtype=bool)
    ring[[0, -1], :] = True
    ring[:, [0, -1]] = True
    gradients = f.gradients(anchors.reshape(-1, 2)).reshape(n, n, 2, 2)
    deviation = np.full((n, n), np.inf)
    ac = np.zeros((n, n))
    sing = np.zeros((n, n))
    polars: Dict[Index, Tuple[np.ndarray, np.ndarray]] = {}
    polar_ratio = 0.0
    for i in range(n):
        for j in range(n):
            c = anchors[i, j]
            square = square_polygon(c, 0.5 * h)
            ac[i, j] = measure_cells_in(f.cells, square, lambda cell: cell.frobenius)
            if f.jumps:
                sing[i, j] = measure_jumps_in(f.jumps, square)
            wide = square_polygon(c, 2.0 * h)
            if in_f[i, j]:
                w = _jump_anchor(f, Rect.square(c, 0.5 * h))
                if w is None:
                    continue
                u, v = f.polar_at(w)
                defect = polar_defect(f, u, v, square_polygon(c, h))
                bound = eps * measure_jumps_in(f.jumps, wide)
                if bound > 0 and defect <= bound:
                    anchors[i, j] = w
                    polars[(i, j)] = (u, v)
                    polar_ratio = max(polar_ratio, defect / bound)
                continue
            A = gradients[i, j]
            deviation[i, j] = measure_cells_in(f.cells, wide, lambda cell: float(np.linalg.norm(cell.matrix - A)))
            if f.jumps:
                deviation[i, j] += measure_jumps_in(f.jumps, wide)
    return _LevelData(K, in_f, ring, anchors, gradients, deviation, ac, sing, polars, polar_ratio)


def _labels(data: _LevelData, eps: float, alpha0: float, alpha: float) -> np.ndarray:
    n = 2 ** data.K
    labels = np.full((n, n), Category.WILD.value, dtype="<U1")
    norms = np.sqrt((data.gradients ** 2).sum(axis=(2, 3)))
    dets = np.linalg.det(data.gradients)
    near_affine = data.deviation <= eps * alpha ** 2 * 2.0 ** (-2 * data.K)
    bounded = (norms >= alpha0) & (norms <= 1.0 / alpha0)
    free = ~data.in_f & ~data.ring & near_affine & bounded
    labels[free & (dets > alpha0)] = Category.GOOD.value
    labels[free & (np.abs(dets) <= DET_TOL)] = Category.FLAT.value
    labels[data.in_f] = Category.NEAR_JUMP.value
    for i, j in data.polars:
        labels[i, j] = Category.JUMP.value
    return labels


def _z_defect(f: TestMap, data: _LevelData, labels: np.ndarray, alpha: float) -> float:
    """G・T の正方形ごとの |Q_i ∖ Z| の標本推定の最大値"""
    idx = np.argwhere(np.isin(labels, [Category.GOOD.value, Category.FLAT.value]))
    if len(idx) == 0:
        return 0.0
    h = 2.0 ** (1 - data.K)
    offsets = (np.arange(Z_SAMPLES) + 0.5) / Z_SAMPLES - 0.5
    grid = np.stack(np.meshgrid(offsets, offsets, indexing="ij"), axis=-1).reshape(-1, 2) * h
    w = data.anchors[idx[:, 0], idx[:, 1]]
    A = data.gradients[idx[:, 0], idx[:, 1]]
    pts = (w[:, None, :] + grid[None, :, :]).reshape(-1, 2)
    values = f.evaluate(pts).reshape(len(idx), -1, 2)
    pred = f.evaluate(w)[:, None, :] + np.einsum("mij,kj->mki", A, grid)
    bad = np.hypot(values[..., 0] - pred[..., 0], values[..., 1] - pred[..., 1]) >= alpha ** 4 * 2.0 ** -data.K
    if f.jumps:
        bad |= (distance_to_jumps(f, pts) <= 0.0).reshape(len(idx), -1)
    return float(bad.mean(axis=1).max() * h * h)


def _jump_conclusions(f: TestMap, eps: float, data: _LevelData) -> Ledger:
    ac_total = f.measure(SQUARE, "ac")
    sing_total = f.measure(SQUARE, "sing")
    outside = max(0.0, sing_total - float(data.sing[data.in_f].sum()))
    return {
        "ac_cover": Check(float(data.ac[data.in_f].sum()), 2.0 * eps * ac_total),
        "sing_outside": Check(outside, eps * sing_total),
        "sing_outside_ac": Check(outside, eps * eps * ac_total),
        "polar_constant": Check(data.polar_ratio, 1.0),
    }


def classify_dyadic(
    f: TestMap,
    eps: float,
    alpha: Optional[float] = None,
    k_min: int = 4,
    k_max: int = 12,
    cover: Optional[Sequence[Rect]] = None,
) -> SquareClassification:
    """結論がすべて確かめられる最小のレベル K で分類する"""
    if not 0.0 < eps < 1.0:
        raise ValidationError("eps must lie in (0, 1)", {"eps": eps})
    if not 1 <= k_min <= k_max:
        raise ValidationError("levels must satisfy 1 <= k_min <= k_max", {"k_min": k_min, "k_max": k_max})
    if alpha is not None and alpha <= 0:
        raise ValidationError("alpha must be positive", {"alpha": alpha})
    rects = tuple(isolate_singular_support(f, eps) if cover is None else cover)
    ac_total = f.measure(SQUARE, "ac")
    last: Tuple[str, Check] = ("none", Check(0.0, 0.0))
    for K in range(k_min, k_max + 1):
        data = _level_data(f, eps, K, rects)
        ledger = _jump_conclusions(f, eps, data)
        failed = first_failure(ledger)
        if failed is not None:
            last = failed
            logger.debug(f"Level K={K} rejected: {failed[0]} measured {failed[1].measured:.3e} > {failed[1].bound:.3e}")
            continue
        for step in range(1, ALPHA0_STEPS + 1):
            alpha0 = eps / 2.0 ** step
            cap = min(alpha0, ALPHA_CAP)
            if alpha is not None and alpha >= cap:
                last = ("alpha", Check(alpha, cap))
                continue
            a = 0.5 * cap if alpha is None else alpha
            labels = _labels(data, eps, alpha0, a)
            good = np.isin(labels, [Category.GOOD.value, Category.FLAT.value])
            wild = labels == Category.WILD.value
            norms = np.sqrt((data.gradients ** 2).sum(axis=(2, 3)))[good]
            level: Ledger = dict(ledger)
            level["gradient_bounds"] = Check(
                float(np.maximum(alpha0 - norms, norms - 1.0 / alpha0).max(initial=0.0)), 0.0
            )
            level["near_affine"] = Check(
                float((data.deviation[good] / (eps * a ** 2 * 2.0 ** (-2 * K))).max(initial=0.0)), 1.0
            )
            level["w_mass"] = Check(float(data.ac[wild].sum()), 8.0 * eps * (ac_total + 1.0))
            if level["w_mass"].ok:
                level["z_defect"] = Check(_z_defect(f, data, labels, a), 2.0 ** (-2 * K - 9))
            failed = first_failure(level)
            if failed is not None:
                last = failed
                continue
            out = SquareClassification(
                K, eps, alpha0, a, labels, data.anchors, data.gradients, dict(data.polars), level, rects, f
            )
            logger.info(f"Dyadic classification at K={K} (alpha0={alpha0:.3e}): {out.counts()}")
            return out
        logger.debug(f"Level K={K} rejected: {last[0]} does not hold for any alpha0")
    name, check = last
    raise StageFailure(
        "no dyadic level up to k_max verifies the classification",
        {"k_max": k_max, "conclusion": name, "measured": check.measured, "bound": check.bound},
    )
