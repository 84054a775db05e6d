"""
格子頂点のランダムな摂動

二進格子の内部頂点 V を Q(V, 2^{-K-2}) の中で一様に動かし、
すでに置いた 4 近傍との辺が条件を満たすまで引き直す。外周の頂点は動かさない。

辺の条件:
- lebesgue: 端点がジャンプに乗らず、密度が消える
- no_overlap: 辺がジャンプ片と重ならない
- transversal: ジャンプとの交点で |⟨Y − X, ν⟩| ≥ β|Y − X|
- edge_variation: 辺上の変動 ≤ C·2^K·max|Df|(2Q_i)
- affine_variation: G/T に接する辺で f − ∇f(w_i)x の変動が小さく、端点が Z に入る
- polar_direction: E に接する辺が v とも v⊥ とも平行でない
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from loguru import logger

from ..geom.primitives import Polyline
from ..grid.admissibility import DEFAULT_RADII, TAU_DENSITY, density_vanishes
from ..mapcat.catalogue import TestMap, square_polygon
from ..mapcat.measures import density_ratios, distance_to_jumps
from ..mapcat.onedbv import restrict_to_polyline
from ..utils.sampling import DEFAULT_BUDGET, Rejected, rejection_sample
from .classify import Category, Index, SquareClassification

# 辺が方向 v, v⊥ と平行とみなす |sin|
PARALLEL_TOL = 1e-6
# 密度を測る半径 (最後の 3 つ)
VERTEX_RADII = DEFAULT_RADII[-3:]


@dataclass(frozen=True)
class EdgeCheck:
    """受理した辺の記録"""
    a: Index
    b: Index
    variation: float
    variation_bound: float
    transversality: float
    affine_variation: float
    affine_bound: float
    crossings: int


@dataclass(frozen=True)
class PerturbedMesh:
    """摂動した頂点 X[i, j] と辺の台帳"""
    K: int
    points: np.ndarray
    edges: Tuple[EdgeCheck, ...]
    attempts: np.ndarray

    @property
    def n(self) -> int:
        return 2 ** self.K

    def vertex(self, i: int, j: int) -> np.ndarray:
        return self.points[i, j]

    def quad(self, i: int, j: int) -> np.ndarray:
        """Q_i の摂動 (反時計回りの 4 頂点)"""
        p = self.points
        return np.array([p[i, j], p[i + 1, j], p[i + 1, j + 1], p[i, j + 1]])

    def quad_areas(self) -> np.ndarray:
        p = self.points
        a, b, c, d = p[:-1, :-1], p[1:, :-1], p[1:, 1:], p[:-1, 1:]
        ring = (a, b, c, d)
        area = np.zeros(a.shape[:2])
        for k in range(4):
            u, v = ring[k], ring[(k + 1) % 4]
            area += u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]
        return 0.5 * area

    def tiling_defect(self) -> float:
        """|Σ area(quad) − 4|"""
        return abs(float(self.quad_areas().sum()) - 4.0)

    def rows(self) -> List[Polyline]:
        """内部の横曲線 (j = 1..N−1、左から右)"""
        return [Polyline.from_points(self.points[:, j]) for j in range(1, self.n)]

    def columns(self) -> List[Polyline]:
        """内部の縦曲線 (i = 1..N−1、下から上)"""
        return [Polyline.from_points(self.points[i, :]) for i in range(1, self.n)]

    @property
    def acceptance(self) -> float:
        inner = self.attempts[1:-1, 1:-1]
        return float((1.0 / inner).mean()) if inner.size else 1.0


def _adjacent_squares(a: Index, b: Index, n: int) -> List[Index]:
    """辺 a–b の両側の正方形"""
    (i0, j0), (i1, j1) = sorted((a, b))
    if j0 == j1:
        cands = [(i0, j0 - 1), (i0, j0)]
    else:
        cands = [(i0 - 1, j0), (i0, j0)]
    return [(i, j) for i, j in cands if 0 <= i < n and 0 <= j < n]


def affine_defect_variation(f: TestMap, X: np.ndarray, Y: np.ndarray, A: np.ndarray) -> float:
    """線分 [X, Y] 上の x ↦ f(x) − A x の 1 次元全変動"""
    D = restrict_to_polyline(f, [X, Y])
    pts = X + np.outer(D.knots / D.length, Y - X)
    lin = pts @ A.T
    left = D.left - lin
    right = D.right - lin
    pieces = np.hypot(*(left[1:] - right[:-1]).T).sum()
    jumps = np.hypot(*(D.right - D.left).T).sum()
    return float(pieces + jumps)


class _EdgeJudge:
    """辺と頂点の受理判定"""

    def __init__(self, f: TestMap, cls: SquareClassification, beta: float, C: float, tau_density: float):
        self.f = f
        self.cls = cls
        self.beta = beta
        self.C = C
        self.tau_density = tau_density
        n, h = cls.n, cls.side
        self.local_total = np.zeros((n, n))
        self.local_ac = np.zeros((n, n))
        for i in range(n):
            for j in range(n):
                region = square_polygon(cls.center(i, j), h)
                self.local_total[i, j] = f.measure(region, "total")
                if cls.labels[i, j] in (Category.GOOD.value, Category.FLAT.value):
                    self.local_ac[i, j] = f.measure(region, "ac")

    def vertex(self, X: np.ndarray, where: Index) -> None:
        if self.f.jumps and distance_to_jumps(self.f, X[None])[0] <= 0.0:
            raise Rejected("lebesgue", 1.0, vertex=where)
        ratios = [float(density_ratios(self.f, X[None], r)[0]) for r in VERTEX_RADII]
        if not density_vanishes(ratios, self.tau_density):
            raise Rejected("lebesgue", ratios[-1] / self.tau_density, vertex=where)

    def edge(self, X: np.ndarray, Y: np.ndarray, a: Index, b: Index) -> EdgeCheck:
        f, cls = self.f, self.cls
        length = float(np.hypot(*(Y - X)))
        if f.jump_overlaps(X, Y):
            raise Rejected("no_overlap", 1.0, edge=(a, b))
        crossings = f.jump_crossings(X, Y)
        trans = min((abs(float((Y - X) @ p.normal)) / length for _, p in crossings), default=1.0)
        if trans < self.beta:
            raise Rejected("transversal", self.beta - trans, edge=(a, b))
        squares = _adjacent_squares(a, b, cls.n)
        variation = float(restrict_to_polyline(f, [X, Y]).total_variation)
        bound = self.C * 2.0 ** cls.K * max(self.local_total[s] for s in squares)
        if variation > bound:
            raise Rejected("edge_variation", variation / bound, edge=(a, b))
        affine_var, affine_bound = 0.0, np.inf
        direction = (Y - X) / length
        for s in squares:
            label = cls.labels[s]
            if label in (Category.GOOD.value, Category.FLAT.value):
                value = affine_defect_variation(f, X, Y, cls.gradients[s])
                limit = self.C * cls.eps * self.local_ac[s] * 2.0 ** cls.K
                if value > limit:
                    raise Rejected("affine_variation", value / max(limit, 1e-300), edge=(a, b), square=s)
                if not np.all(cls.in_z(s[0], s[1], np.array([X, Y]))):
                    raise Rejected("affine_variation", 1.0, edge=(a, b), square=s, reason="endpoint outside Z")
                affine_var, affine_bound = max(affine_var, value), min(affine_bound, limit)
            elif label == Category.JUMP.value:
                _, v = cls.polars[s]
                sin = abs(float(direction[0] * v[1] - direction[1] * v[0]))
                cos = abs(float(direction @ v))
                if sin <= PARALLEL_TOL or cos <= PARALLEL_TOL:
                    raise Rejected("polar_direction", 1.0 - min(sin, cos), edge=(a, b), square=s)
        return EdgeCheck(a, b, variation, bound, trans, affine_var, affine_bound, len(crossings))


def perturb_vertices(
    f: TestMap,
    cls: SquareClassification,
    beta: float = 0.05,
    C: float = 64.0,
    budget: int = DEFAULT_BUDGET,
    rng: Optional[np.random.Generator] = None,
    tau_density: float = TAU_DENSITY,
) -> PerturbedMesh:
    """内部頂点を行ごとに置いていく。予算切れは頂点と条件を添えて SamplingExhausted"""
    generator = rng if rng is not None else np.random.default_rng(0)
    n = cls.n
    h = cls.side
    r = 2.0 ** (-cls.K - 2)
    lattice = -1.0 + h * np.arange(n + 1)
    points = np.stack(np.meshgrid(lattice, lattice, indexing="ij"), axis=-1)
    attempts = np.ones((n + 1, n + 1), dtype=int)
    judge = _EdgeJudge(f, cls, beta, C, tau_density)
    edges: List[EdgeCheck] = []
    for j in range(1, n):
        for i in range(1, n):
            V = points[i, j].copy()
            neighbours = [(i - 1, j), (i, j - 1)]
            if i == n - 1:
                neighbours.append((n, j))
            if j == n - 1:
                neighbours.append((i, n))

            def draw(gen: np.random.Generator) -> Tuple[np.ndarray, List[EdgeCheck]]:
                X = V + gen.uniform(-r, r, size=2)
                judge.vertex(X, (i, j))
                return X, [judge.edge(points[nb], X, nb, (i, j)) for nb in neighbours]

            ledger = rejection_sample(draw, generator, budget, what=f"vertex ({i}, {j})")
            X, checks = ledger.value  # type: ignore[misc]
            points[i, j] = X
            attempts[i, j] = ledger.attempts
            edges.extend(checks)
    mesh = PerturbedMesh(cls.K, points, tuple(edges), attempts)
    inner = attempts[1:-1, 1:-1]
    logger.info(
        f"Perturbed {inner.size} vertices at K={cls.K}: mean draws {float(inner.mean()) if inner.size else 1.0:.2f}, "
        f"acceptance {mesh.acceptance:.2f}, tiling defect {mesh.tiling_defect():.2e}"
    )
    return mesh
