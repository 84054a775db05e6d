"""
全変動型の同相拡張

像多角形 𝒫 を三角形分割し、その組合せ構造を凸な 𝒬 へ凸結合 (Tutte 型) 埋め込みで
写してから対応を逆にたどって 𝒬 → 𝒫 の区分アフィン写像を得る。
境界の 2 頂点を結ぶ内部辺 (分割辺) は中点で割ってから埋め込む。
"""

from typing import Dict, List, Optional, Tuple

import numpy as np
from loguru import logger
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import spsolve

from ..core.errors import Certificate, StageFailure
from ..geom.pa_map import PAHomeo, certify_homeomorphism, pa_total_variation
from ..geom.polygon import chebyshev_center, in_open_kernel
from ..geom.triangulation import Triangulation, edge_map, refine_4to1, signed_areas, triangulate_simple_polygon
from .boundary import BoundaryData
from .report import RATIO_BOUND, Extension, ExtensionReport

MAX_ROUNDS = 12
# これを超える細分は打ち切る
MAX_TRIANGLES = 200_000


class _Mesh:
    """像側の三角形分割と、境界頂点の定義域での位置 (内部頂点は NaN)"""

    def __init__(self, points: np.ndarray, triangles: np.ndarray, anchors: np.ndarray):
        self.points = np.asarray(points, dtype=float)
        self.triangles = np.asarray(triangles, dtype=int)
        self.anchors = np.asarray(anchors, dtype=float)

    @property
    def boundary(self) -> np.ndarray:
        return ~np.isnan(self.anchors[:, 0])


def kernel_point(bd: BoundaryData) -> Optional[np.ndarray]:
    """扇形分割の中心。定義域の重心のアフィン最小二乗像、だめなら Chebyshev 中心"""
    img = bd.image
    center = img.mean(axis=0)
    if in_open_kernel(img, center):
        return center
    cheb, radius = chebyshev_center(img)
    if cheb is not None and radius > 0 and in_open_kernel(img, cheb):
        return cheb
    return None


def _initial_mesh(bd: BoundaryData) -> Tuple[_Mesh, str]:
    n = bd.n
    center = kernel_point(bd)
    if center is not None:
        tris = np.array([[i, (i + 1) % n, n] for i in range(n)])
        anchors = np.vstack([bd.domain, [[np.nan, np.nan]]])
        return _Mesh(np.vstack([bd.image, center]), tris, anchors), "fan"
    tri = triangulate_simple_polygon(bd.image_polygon)
    anchors = np.full((tri.n_vertices, 2), np.nan)
    anchors[:n] = bd.domain
    return _Mesh(tri.vertices, tri.triangles, anchors), "tutte"


def split_dividing_edges(mesh: _Mesh) -> _Mesh:
    """両端が境界にある内部辺を中点で割り、その辺を持つ三角形を重心から扇形に分け直す"""
    on_boundary = mesh.boundary
    dividing = {
        e for e, owners in edge_map(mesh.triangles).items()
        if len(owners) == 2 and on_boundary[e[0]] and on_boundary[e[1]]
    }
    if not dividing:
        return mesh
    points: List[np.ndarray] = list(mesh.points)
    anchors: List[np.ndarray] = list(mesh.anchors)
    mids: Dict[Tuple[int, int], int] = {}
    out: List[List[int]] = []

    def add(p: np.ndarray) -> int:
        points.append(p)
        anchors.append(np.array([np.nan, np.nan]))
        return len(points) - 1

    for tri in mesh.triangles:
        tri = [int(k) for k in tri]
        edges = [(tri[r], tri[(r + 1) % 3]) for r in range(3)]
        if not any((min(a, b), max(a, b)) in dividing for a, b in edges):
            out.append(tri)
            continue
        cycle: List[int] = []
        for a, b in edges:
            cycle.append(a)
            key = (min(a, b), max(a, b))
            if key in dividing:
                if key not in mids:
                    mids[key] = add(0.5 * (mesh.points[a] + mesh.points[b]))
                cycle.append(mids[key])
        g = add(mesh.points[tri].mean(axis=0))
        out.extend([cycle[m], cycle[(m + 1) % len(cycle)], g] for m in range(len(cycle)))
    return _Mesh(np.array(points), np.array(out, dtype=int), np.array(anchors))


def tutte_positions(mesh: _Mesh) -> np.ndarray:
    """境界頂点を固定した一様重みの凸結合埋め込み"""
    pos = mesh.anchors.copy()
    inner = np.flatnonzero(~mesh.boundary)
    if len(inner) == 0:
        return pos
    slot = np.full(len(pos), -1, dtype=int)
    slot[inner] = np.arange(len(inner))
    edges = list(edge_map(mesh.triangles))
    degree = np.zeros(len(pos))
    rows: List[int] = []
    cols: List[int] = []
    rhs = np.zeros((len(inner), 2))
    for a, b in edges:
        for u, w in ((a, b), (b, a)):
            if slot[u] < 0:
                continue
            degree[u] += 1.0
            if slot[w] >= 0:
                rows.append(slot[u])
                cols.append(slot[w])
            else:
                rhs[slot[u]] += pos[w]
    vals = [-1.0] * len(rows) + list(degree[inner])
    rows += list(range(len(inner)))
    cols += list(range(len(inner)))
    lap = coo_matrix((vals, (rows, cols)), shape=(len(inner), len(inner))).tocsr()
    sol = spsolve(lap, rhs)
    pos[inner] = np.asarray(sol).reshape(-1, 2)
    return pos


def _refine(mesh: _Mesh) -> _Mesh:
    points, tris, parents = refine_4to1(mesh.points, mesh.triangles)
    edges = edge_map(mesh.triangles)
    anchors = np.vstack([mesh.anchors, np.full((len(points) - len(mesh.anchors), 2), np.nan)])
    for child, (a, b) in parents.items():
        if len(edges[(a, b)]) == 1:
            anchors[child] = 0.5 * (mesh.anchors[a] + mesh.anchors[b])
    return _Mesh(points, tris, anchors)


def _embed(mesh: _Mesh) -> Tuple[Optional[PAHomeo], Certificate]:
    pos = tutte_positions(mesh)
    if not np.all(np.isfinite(pos)):
        return None, Certificate.failed("embedding system is singular")
    if np.any(signed_areas(pos, mesh.triangles) <= 0):
        return None, Certificate.failed("embedding folds a triangle")
    try:
        g = PAHomeo(Triangulation(pos, mesh.triangles), mesh.points)
    except np.linalg.LinAlgError:
        return None, Certificate.failed("embedding has a degenerate triangle")
    return g, certify_homeomorphism(g)


def hp_ratio(g: PAHomeo, bd: BoundaryData) -> float:
    """∫|Dg| / (diam 𝒬 · ∫|D_τφ|)"""
    return pa_total_variation(g) / (bd.diameter * bd.boundary_variation())


def extend_hp(bd: BoundaryData, max_rounds: int = MAX_ROUNDS) -> Extension:
    """境界写像 φ を全変動の比が小さい区分アフィン同相写像に拡張する"""
    mesh, construction = _initial_mesh(bd)
    last = Certificate.failed("no embedding attempted")
    for rounds in range(max_rounds + 1):
        mesh = split_dividing_edges(mesh)
        g, cert = _embed(mesh)
        if g is not None and cert:
            ratio = hp_ratio(g, bd)
            logger.debug(
                f"HP extension certified after {rounds} refinements: "
                f"{g.domain.n_triangles} triangles, ratio={ratio:.4g}"
            )
            report = ExtensionReport(
                "hp", ratio, RATIO_BOUND - ratio, g.domain.n_triangles, rounds,
                {"construction": construction, "total_variation": pa_total_variation(g)},
            )
            return Extension(g, report, cert)
        last = cert
        logger.debug(f"HP embedding rejected in round {rounds}: {cert.reason}")
        if rounds == max_rounds or 4 * len(mesh.triangles) > MAX_TRIANGLES:
            break
        mesh = _refine(mesh)
    raise StageFailure(
        "HP extension did not certify within the refinement budget",
        {"rounds": rounds, "reason": last.reason, **last.witness},
    )
