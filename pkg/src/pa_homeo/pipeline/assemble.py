"""
四角形ごとの拡張を貼り合わせて Q(0,1) 全体の区分アフィン同相写像 g を作る

- G: 2 枚のアフィン片 (だめなら HP)
- T: 特異値分解で diag(d, 0) に回してからファイバー拡張 (だめなら HP)
- E: 方向 v, v⊥ の成分ごとの拡張
- W と F∖E: HP 拡張

隣の四角形が辺の上に置いた頂点は、境界の三角形を対頂点から扇形に割って取り込む。
"""

from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np
from loguru import logger
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from ..core.errors import Certificate, StageFailure, ValidationError
from ..extend.affine import affine_corner_extension
from ..extend.boundary import BoundaryData
from ..extend.componentwise import extend_componentwise
from ..extend.degenerate import extend_degenerate
from ..extend.hp import MAX_ROUNDS, extend_hp
from ..extend.report import Extension, ExtensionReport
from ..geom.pa_map import PAHomeo, certify_homeomorphism
from ..geom.triangulation import Triangulation, boundary_edges
from ..mapcat.catalogue import TestMap
from ..utils.workpool import WorkPool
from .classify import Category, Index, SquareClassification
from .perturb import PerturbedMesh
from .skeleton import SkeletonMap, flat_boundary_budget

# 同じ頂点とみなす距離
MERGE_TOL = 1e-13
# 辺の内部の点とみなす (辺の長さに対する) 距離
HANGING_TOL = 1e-10
# 外周上の像を恒等写像に戻してよい距離
SNAP_TOL = 1e-9


@dataclass(frozen=True)
class Assembly:
    """g と三角形ごとの持ち主の正方形"""
    g: PAHomeo
    owners: np.ndarray
    labels: np.ndarray
    reports: Dict[Index, ExtensionReport]
    certificate: Certificate
    boundary_snap: float = 0.0

    def region(self, *categories: Category) -> np.ndarray:
        return np.isin(self.labels, [c.value for c in categories])

    def kinds(self) -> Dict[str, int]:
        out: Dict[str, int] = {}
        for report in self.reports.values():
            out[report.kind] = out.get(report.kind, 0) + 1
        return out


def _rotation(u: np.ndarray) -> np.ndarray:
    """第 1 列が u の回転行列"""
    return np.array([[u[0], -u[1]], [u[1], u[0]]])


def extend_flat(bd: BoundaryData, A: np.ndarray, budget: float, r0: float) -> Extension:
    """∇f ≈ d·u₁v₁ᵀ の四角形: 回して diag(d, 0) の拡張を作り、回し戻す

    δ = budget / r₀ とし、境界での ∫|D_τφ − diag(d,0)τ| < δ r₀ と
    ‖D_τφ‖∞ ≤ d + 2δ は extend_degenerate が確かめる。満たさなければ ValidationError。
    """
    U, S, Vt = np.linalg.svd(A)
    d = float(S[0])
    delta = budget / r0
    if not 0.0 < delta < d:
        raise ValidationError("flat budget must lie strictly between 0 and d r0", {"delta": delta, "d": d, "r0": r0})
    R_img, R_dom = _rotation(U[:, 0]), _rotation(Vt[0])
    turned = BoundaryData(bd.domain @ R_dom, bd.image @ R_img)
    ext = extend_degenerate(turned, d, delta, r0)
    verts = ext.g.domain.vertices @ R_dom.T
    imgs = ext.g.images @ R_img.T
    # 境界の折れ点は元の座標に戻す
    tree = cKDTree(bd.domain)
    dist, idx = tree.query(verts)
    exact = dist <= 1e-12 * max(1.0, bd.diameter)
    verts[exact] = bd.domain[idx[exact]]
    imgs[exact] = bd.image[idx[exact]]
    g = PAHomeo(Triangulation(verts, ext.g.domain.triangles), imgs)
    return Extension(g, ext.report, ext.certificate)


def _extend_square(
    item: Tuple[Index, str, BoundaryData, Dict[str, object]],
) -> Extension:
    (i, j), label, bd, data = item
    refinement = int(data["refinement"])  # type: ignore[arg-type]
    try:
        if label == Category.GOOD.value:
            try:
                return affine_corner_extension(bd)
            except (ValidationError, StageFailure) as e:
                logger.debug(f"Affine corner extension unavailable on ({i}, {j}): {e}")
                return extend_hp(bd, refinement)
        if label == Category.FLAT.value:
            try:
                return extend_flat(bd, data["gradient"], float(data["budget"]), float(data["side"]))  # type: ignore[arg-type]
            except ValidationError as e:
                logger.warning(f"Degenerate extension preconditions fail on ({i}, {j}): {e}; using HP")
                return extend_hp(bd, refinement)
        if label == Category.JUMP.value:
            return extend_componentwise(bd, float(data["theta"]), float(data["slack"]))  # type: ignore[arg-type]
        return extend_hp(bd, refinement)
    except StageFailure as e:
        raise StageFailure(
            f"extension failed on square ({i}, {j}): {e.message}",
            {"square": (i, j), "category": label, **e.witness},
        ) from e


def _merge(pieces: List[PAHomeo]) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """各片の頂点を近さで同一視して (頂点, 像, 三角形, 三角形の片番号) を返す"""
    verts = np.vstack([p.domain.vertices for p in pieces])
    imgs = np.vstack([p.images for p in pieces])
    offsets = np.cumsum([0] + [p.domain.n_vertices for p in pieces])
    tris = np.vstack([p.domain.triangles + offsets[k] for k, p in enumerate(pieces)])
    piece_of = np.concatenate([np.full(p.domain.n_triangles, k) for k, p in enumerate(pieces)])
    pairs = np.array(sorted(cKDTree(verts).query_pairs(MERGE_TOL)), dtype=int).reshape(-1, 2)
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(len(verts), len(verts)))
    _, labels = connected_components(graph, directed=False)
    _, first, remap = np.unique(labels, return_index=True, return_inverse=True)
    return verts[first], imgs[first], remap.ravel()[tris], piece_of


def _on_outer(points: np.ndarray) -> np.ndarray:
    return np.abs(points).max(axis=1) >= 1.0 - 1e-12


def conformize(verts: np.ndarray, tris: np.ndarray, piece_of: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """片の境界辺の内部に乗った他の片の頂点で、その辺を持つ三角形を扇形に割る"""
    edges = boundary_edges(tris)
    inner = ~(_on_outer(verts[edges[:, 0]]) & _on_outer(verts[edges[:, 1]]) & (
        np.isclose(verts[edges[:, 0]], verts[edges[:, 1]]).any(axis=1)
    ))
    edges = edges[inner]
    if len(edges) == 0:
        return tris, piece_of
    candidates = np.unique(edges)
    tree = cKDTree(verts[candidates])
    hanging: Dict[Tuple[int, int], List[int]] = {}
    for a, b in edges:
        pa, pb = verts[a], verts[b]
        d = pb - pa
        length = float(np.hypot(*d))
        near = candidates[tree.query_ball_point(0.5 * (pa + pb), 0.5 * length * (1.0 + 1e-9))]
        if len(near) == 0:
            continue
        rel = verts[near] - pa
        t = (rel @ d) / (length * length)
        off = np.abs(rel[:, 0] * d[1] - rel[:, 1] * d[0]) / length
        hit = (t > HANGING_TOL) & (t < 1.0 - HANGING_TOL) & (off <= HANGING_TOL * length) & (near != a) & (near != b)
        if hit.any():
            order = np.argsort(t[hit])
            hanging[(int(a), int(b))] = [int(v) for v in near[hit][order]]
    if not hanging:
        return tris, piece_of
    out = [list(map(int, t)) for t in tris]
    owner = list(map(int, piece_of))
    k = 0
    while k < len(out):
        tri = out[k]
        for r in range(3):
            a, b, c = tri[r], tri[(r + 1) % 3], tri[(r + 2) % 3]
            points = hanging.get((a, b))
            if points is None:
                continue
            chain = [a] + points + [b]
            fan = [[chain[m], chain[m + 1], c] for m in range(len(chain) - 1)]
            out[k] = fan[0]
            out.extend(fan[1:])
            owner.extend([owner[k]] * (len(fan) - 1))
            break
        else:
            k += 1
    logger.debug(f"Conformized {len(hanging)} hanging edges")
    return np.array(out, dtype=int), np.array(owner, dtype=int)


def assemble_homeo(
    f: TestMap,
    cls: SquareClassification,
    mesh: PerturbedMesh,
    skeleton: SkeletonMap,
    eps: float,
    refinement: int = MAX_ROUNDS,
    workers: int = 1,
    C: float = 64.0,
) -> Assembly:
    """正方形ごとの拡張を作り、貼り合わせて全体を検証する"""
    n = cls.n
    items: List[Tuple[Index, str, BoundaryData, Dict[str, object]]] = []
    for i in range(n):
        for j in range(n):
            label = str(cls.labels[i, j])
            data: Dict[str, object] = {"refinement": refinement, "eps": eps, "side": cls.side}
            if label == Category.FLAT.value:
                data["gradient"] = cls.gradients[i, j]
                data["budget"] = flat_boundary_budget(f, cls, i, j, eps, C)
            if label == Category.JUMP.value:
                _, v = cls.polars[(i, j)]
                quad = mesh.quad(i, j)
                area = 0.5 * abs(float(np.sum(quad[:, 0] * np.roll(quad[:, 1], -1) - np.roll(quad[:, 0], -1) * quad[:, 1])))
                data["theta"] = float(np.arctan2(v[1], v[0]))
                data["slack"] = eps * (f.measure(quad, "total") + area)
            items.append(((i, j), label, skeleton.boundary(i, j), data))
    extensions = WorkPool(workers).map(_extend_square, items)
    reports = {item[0]: ext.report for item, ext in zip(items, extensions)}
    verts, imgs, tris, piece_of = _merge([ext.g for ext in extensions])
    tris, piece_of = conformize(verts, tris, piece_of)
    outer = _on_outer(verts)
    snap = float(np.hypot(*(imgs[outer] - verts[outer]).T).max(initial=0.0))
    if snap > SNAP_TOL:
        raise StageFailure("assembled map is not the identity on the outer square", {"distance": snap})
    imgs[outer] = verts[outer]
    g = PAHomeo(Triangulation(verts, tris), imgs)
    cert = certify_homeomorphism(g)
    if not cert:
        raise StageFailure(f"assembled map is not a homeomorphism: {cert.reason}", cert.witness)
    owners = np.array([items[k][0][0] * n + items[k][0][1] for k in piece_of], dtype=int)
    labels = np.array([items[k][1] for k in piece_of], dtype="<U1")
    out = Assembly(g, owners, labels, reports, cert, snap)
    logger.info(f"Assembled homeomorphism: {g.domain.n_triangles} triangles, extensions {out.kinds()}")
    return out
