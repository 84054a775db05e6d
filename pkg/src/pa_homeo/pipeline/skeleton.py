"""
摂動した格子の骨格上の単射な境界写像 φ

内部の横曲線・縦曲線を非直線グリッドとして h を作り、写像の種類に応じた
単射な σ-近似 H を φ とする。外周では恒等写像。各四角形の境界への制限を
BoundaryData にまとめ、辺の変動・幅などの結論を台帳に記録する。
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from loguru import logger
from scipy.spatial import cKDTree

from ..core.errors import GeometryError, StageFailure, ValidationError
from ..extend.boundary import BREAK_TOL, BoundaryData
from ..extend.widths import width_integral
from ..grid.admissibility import DEFAULT_RADII, TAU_CONT, TAU_DENSITY
from ..grid.grids import NonStraightGrid
from ..mapcat.catalogue import TestMap, square_polygon
from ..rep.providers import HApprox, certify_h, provider_for
from ..rep.representative import TAU_REP, GeomRep, build_geom_rep
from .classify import Category, Index, SquareClassification
from .guidelines import Guidelines, jump_guidelines
from .ledger import Check, Ledger, require
from .perturb import PerturbedMesh

# H の曲線端点が外周の頂点と一致するとみなす距離
ENDPOINT_TOL = 1e-9
# 交点の像の最小距離の上限
RHO_CAP = 0.01

SideKey = Tuple[str, int, int]


@dataclass(frozen=True)
class SideMap:
    """骨格の辺 1 本の上の φ の折れ点 (始点の頂点から終点の頂点へ)"""
    domain: np.ndarray
    image: np.ndarray


@dataclass(frozen=True)
class SkeletonMap:
    K: int
    sigma: float
    closeness: float
    vertex_images: np.ndarray
    sides: Dict[SideKey, SideMap]
    boundaries: Dict[Index, BoundaryData]
    ledger: Ledger
    relinearized: Dict[Index, float] = field(default_factory=dict)
    rep: Optional[GeomRep] = field(default=None, compare=False, repr=False)
    H: Optional[HApprox] = field(default=None, compare=False, repr=False)
    guidelines: Dict[Index, Tuple[Guidelines, Guidelines]] = field(default_factory=dict, compare=False, repr=False)

    def boundary(self, i: int, j: int) -> BoundaryData:
        return self.boundaries[(i, j)]


def skeleton_sigma(eps: float, rho: float, K: int) -> float:
    """σ = ε²ρ / (12(2^K + 1))"""
    return eps * eps * rho / (12.0 * (2 ** K + 1))


def crossing_separation(images: np.ndarray) -> float:
    """異なる交点の像どうしの最小距離 (RHO_CAP で頭打ち)"""
    if len(images) < 2:
        return RHO_CAP
    dist, _ = cKDTree(images).query(images, k=min(len(images), 8))
    positive = dist[:, 1:][dist[:, 1:] > 0.0]
    return min(float(positive.min()) if positive.size else RHO_CAP, RHO_CAP)


def _side(
    H: HApprox, curve: int, T: np.ndarray, k: int, X0: np.ndarray, X1: np.ndarray, Y0: np.ndarray, Y1: np.ndarray
) -> SideMap:
    t0, t1 = T[k], T[k + 1]
    p = H.params[curve]
    inner = (p > t0) & (p < t1)
    frac = (p[inner] - t0) / (t1 - t0)
    domain = np.vstack([X0, X0 + np.outer(frac, X1 - X0), X1])
    image = np.vstack([Y0, H.points[curve][inner], Y1])
    # 定義域で BREAK_TOL 以内に寄った点と、像が隣と同じ点は落とす
    keep = [0]
    for m in range(1, len(domain) - 1):
        near = min(np.hypot(*(domain[m] - domain[keep[-1]])), np.hypot(*(domain[-1] - domain[m])))
        if near > BREAK_TOL and np.any(image[m] != image[keep[-1]]) and np.any(image[m] != image[-1]):
            keep.append(m)
    keep.append(len(domain) - 1)
    return SideMap(domain[keep], image[keep])


def _identity_side(X0: np.ndarray, X1: np.ndarray) -> SideMap:
    pts = np.array([X0, X1])
    return SideMap(pts, pts.copy())


def _relinearize(side: SideMap) -> Tuple[SideMap, float]:
    """端点だけを残し、捨てた像の点の弦からの最大距離を返す"""
    a, b = side.image[0], side.image[-1]
    d = b - a
    dev = 0.0
    if len(side.image) > 2:
        t = np.clip(((side.image[1:-1] - a) @ d) / max(float(d @ d), 1e-300), 0.0, 1.0)
        dev = float(np.hypot(*(side.image[1:-1] - (a + np.outer(t, d))).T).max())
    return SideMap(side.domain[[0, -1]], side.image[[0, -1]]), dev


def _quad_boundary(sides: Dict[SideKey, SideMap], i: int, j: int) -> Tuple[np.ndarray, np.ndarray]:
    """下 → 右 → 上 (逆向き) → 左 (逆向き) の順に辺をつなぐ"""
    parts = [
        (sides[("h", i, j)], False),
        (sides[("v", i + 1, j)], False),
        (sides[("h", i, j + 1)], True),
        (sides[("v", i, j)], True),
    ]
    dom: List[np.ndarray] = []
    img: List[np.ndarray] = []
    for side, backwards in parts:
        d, m = (side.domain[::-1], side.image[::-1]) if backwards else (side.domain, side.image)
        dom.append(d[:-1])
        img.append(m[:-1])
    return np.vstack(dom), np.vstack(img)


def build_boundary_map(
    f: TestMap,
    cls: SquareClassification,
    mesh: PerturbedMesh,
    eps: float,
    C: float = 64.0,
    tau_rep: float = TAU_REP,
    tau_cont: float = TAU_CONT,
    tau_density: float = TAU_DENSITY,
) -> SkeletonMap:
    """骨格上の φ を作って四角形ごとの境界データに分ける"""
    n = mesh.n
    X = mesh.points
    rows, cols = mesh.rows(), mesh.columns()
    curves = rows + cols
    rep: Optional[GeomRep] = None
    H: Optional[HApprox] = None
    images = X.copy()
    sigma, closeness = skeleton_sigma(eps, RHO_CAP, mesh.K), 0.0
    endpoint_gap = 0.0
    if curves:
        try:
            rep = build_geom_rep(f, NonStraightGrid.from_curves(curves), tau_rep, DEFAULT_RADII, tau_cont, tau_density)
        except ValidationError as e:
            raise StageFailure(f"perturbed skeleton is not admissible: {e.message}", e.witness) from e
        row_T = [r.cumulative_lengths() / r.length for r in rows]
        col_T = [c.cumulative_lengths() / c.length for c in cols]
        interior = np.vstack([rep.evaluate(j - 1, row_T[j - 1][1:n]) for j in range(1, n)])
        sigma = skeleton_sigma(eps, crossing_separation(interior), mesh.K)
        H = provider_for(f.kind)(rep, sigma)
        try:
            closeness = certify_h(rep, H, sigma)
        except ValidationError as e:
            raise StageFailure(f"boundary approximation rejected: {e.message}", e.witness) from e
        for j in range(1, n):
            images[1:n, j] = H.evaluate(j - 1, row_T[j - 1][1:n])
        for i in range(1, n):
            across = H.evaluate(n - 2 + i, col_T[i - 1][1:n])
            gap = float(np.hypot(*(across - images[i, 1:n]).T).max())
            if gap > ENDPOINT_TOL:
                raise StageFailure("row and column images disagree at a crossing", {"column": i, "gap": gap})
        for c, line in enumerate(curves):
            ends = H.evaluate(c, np.array([0.0, 1.0]))
            endpoint_gap = max(endpoint_gap, float(np.hypot(*(ends - line.array()[[0, -1]]).T).max()))
        if endpoint_gap > ENDPOINT_TOL:
            raise StageFailure("boundary approximation moves the outer square", {"gap": endpoint_gap})

    sides: Dict[SideKey, SideMap] = {}
    for j in range(n + 1):
        for i in range(n):
            if j in (0, n) or H is None:
                sides[("h", i, j)] = _identity_side(X[i, j], X[i + 1, j])
            else:
                sides[("h", i, j)] = _side(H, j - 1, row_T[j - 1], i, X[i, j], X[i + 1, j], images[i, j], images[i + 1, j])
    for i in range(n + 1):
        for j in range(n):
            if i in (0, n) or H is None:
                sides[("v", i, j)] = _identity_side(X[i, j], X[i, j + 1])
            else:
                sides[("v", i, j)] = _side(H, n - 2 + i, col_T[i - 1], j, X[i, j], X[i, j + 1], images[i, j], images[i, j + 1])

    relinearized: Dict[Index, float] = {}
    for i, j in cls.indices(Category.GOOD):
        worst = 0.0
        for key in (("h", i, j), ("h", i, j + 1), ("v", i, j), ("v", i + 1, j)):
            sides[key], dev = _relinearize(sides[key])
            worst = max(worst, dev)
        relinearized[(i, j)] = worst

    boundaries: Dict[Index, BoundaryData] = {}
    broken: List[Tuple[Index, str]] = []
    for i in range(n):
        for j in range(n):
            dom, img = _quad_boundary(sides, i, j)
            try:
                boundaries[(i, j)] = BoundaryData(dom, img)
            except GeometryError as e:
                broken.append(((i, j), e.message))
                logger.error(f"Boundary map is not injective on quadrilateral ({i}, {j}): {e}")

    grid_variation = float(sum(rep.ledger().values())) if rep is not None else 0.0
    side_ratio, worst_square = side_variation_ratio(f, cls, boundaries, eps, C)
    guides = {
        (i, j): jump_guidelines(f, mesh.quad(i, j), cls.polars[(i, j)][1], eps, cls.K, grid_variation)
        for i, j in cls.indices(Category.JUMP)
        if (i, j) in cls.polars
    }
    ledger: Ledger = {
        "injective": Check(float(len(broken)), 0.0),
        "close": Check(closeness, sigma),
        "boundary_identity": Check(endpoint_gap, ENDPOINT_TOL),
        "side_variation": Check(side_ratio, 1.0),
        "linear_sides": Check(max(relinearized.values(), default=0.0), eps * 4.0 ** -cls.K),
        "vertex_values": Check(vertex_gap(f, cls, mesh, images), sigma),
        "width": Check(width_ratio(f, cls, mesh, boundaries, eps, C), 1.0),
        "width_perp": Check(perp_width_ratio(f, cls, boundaries, eps, C), 1.0),
        "slices": Check(max((max(s.split_ratio, t.split_ratio) for s, t in guides.values()), default=0.0), 1.0),
        "guidelines": Check(max((max(s.helper_ratio, t.helper_ratio) for s, t in guides.values()), default=0.0), 1.0),
        "flat_boundary": Check(flat_boundary_ratio(f, cls, boundaries, eps, C), 1.0),
    }
    witness: Dict[str, object] = {"K": cls.K, "square": broken[0][0] if broken else worst_square}
    if broken:
        witness["reason"] = broken[0][1]
    require(ledger, "boundary map", **witness)
    logger.info(
        f"Boundary map on {n * n} quadrilaterals: sigma={sigma:.3e}, closeness={closeness:.3e}, "
        f"worst side ratio {side_ratio:.3g}, {len(guides)} squares with guidelines"
    )
    return SkeletonMap(cls.K, sigma, closeness, images, sides, boundaries, ledger, relinearized, rep, H, guides)


def _ratio(measured: float, budget: float) -> float:
    if measured == 0.0:
        return 0.0
    return measured / budget if budget > 0.0 else float("inf")


def side_variation_ratio(
    f: TestMap, cls: SquareClassification, boundaries: Dict[Index, BoundaryData], eps: float, C: float
) -> Tuple[float, Optional[Index]]:
    """max |D_τφ|(∂𝒬_i) / (C 2^K |Df|(2Q_i) + ε) とその四角形"""
    worst, where = 0.0, None
    for (i, j), bd in boundaries.items():
        local = f.measure(square_polygon(cls.center(i, j), cls.side), "total")
        ratio = bd.boundary_variation() / (C * 2.0 ** cls.K * local + eps)
        if ratio > worst:
            worst, where = ratio, (i, j)
    return worst, where


def vertex_gap(f: TestMap, cls: SquareClassification, mesh: PerturbedMesh, images: np.ndarray) -> float:
    """G の四角形の頂点での max |φ(X_V) − f(X_V)|"""
    worst = 0.0
    for i, j in cls.indices(Category.GOOD):
        corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)]
        X = np.array([mesh.points[c] for c in corners])
        Y = np.array([images[c] for c in corners])
        worst = max(worst, float(np.hypot(*(Y - f.evaluate(X)).T).max()))
    return worst


def width_ratio(
    f: TestMap,
    cls: SquareClassification,
    mesh: PerturbedMesh,
    boundaries: Dict[Index, BoundaryData],
    eps: float,
    C: float,
) -> float:
    """v 方向の幅の積分 / ((1 + ε)|Df|(𝒬_i) + Cε4^{-K})"""
    worst = 0.0
    for (i, j), (_, v) in cls.polars.items():
        if (i, j) not in boundaries:
            continue
        budget = (1.0 + eps) * f.measure(mesh.quad(i, j), "total") + C * eps * 4.0 ** -cls.K
        worst = max(worst, width_integral(boundaries[(i, j)], v) / budget)
    return worst


def perp_width_ratio(
    f: TestMap, cls: SquareClassification, boundaries: Dict[Index, BoundaryData], eps: float, C: float
) -> float:
    """v⊥ 方向の幅の積分 / (Cε|D^s f|(4Q_i) + Cε4^{-K})"""
    worst = 0.0
    for (i, j), (_, v) in cls.polars.items():
        if (i, j) not in boundaries:
            continue
        sing = f.measure(square_polygon(cls.center(i, j), 2.0 * cls.side), "sing")
        budget = C * eps * sing + C * eps * 4.0 ** -cls.K
        worst = max(worst, width_integral(boundaries[(i, j)], (-v[1], v[0])) / budget)
    return worst


def flat_deviation(bd: BoundaryData, A: np.ndarray) -> float:
    """∫_{∂𝒬} |∂_τφ − Aτ| dℋ¹"""
    dv, iv = bd.side_vectors()
    return float(np.hypot(*(iv - dv @ np.asarray(A, dtype=float).T).T).sum())


def flat_boundary_budget(f: TestMap, cls: SquareClassification, i: int, j: int, eps: float, C: float) -> float:
    """Cε2^K|Df|(2Q_i)"""
    return C * eps * 2.0 ** cls.K * f.measure(square_polygon(cls.center(i, j), cls.side), "total")


def flat_boundary_ratio(
    f: TestMap, cls: SquareClassification, boundaries: Dict[Index, BoundaryData], eps: float, C: float
) -> float:
    """T の四角形での ∫_{∂𝒬_i}|∂_τφ − ∇f(w_i)τ| / Cε2^K|Df|(2Q_i)"""
    worst = 0.0
    for i, j in cls.indices(Category.FLAT):
        if (i, j) not in boundaries:
            continue
        deviation = flat_deviation(boundaries[(i, j)], cls.gradients[i, j])
        worst = max(worst, _ratio(deviation, flat_boundary_budget(f, cls, i, j, eps, C)))
    return worst
