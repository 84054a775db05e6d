"""
g と f の比較量

L¹ 距離は g の三角形と f のセルの重なり (凸多角形) ごとに 4×4 の
退化 Gauss 則で積分する。微分の差は重なりごとに定数なので厳密に求まる。
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy.spatial import cKDTree

from ..core.errors import Certificate
from ..geom.pa_map import PAHomeo, pa_directional_variation, pa_total_variation
from ..geom.polygon import clip_convex, polygon_area
from ..mapcat.catalogue import SQUARE, TestMap

# 退化 Gauss 則の 1 方向の点数
GAUSS_POINTS = 4
# 単射性を確かめる標本点の数
INJECTIVITY_SAMPLES = 10_000
# 他の像三角形の内部にあるとみなす重心座標の下限
INJECTIVITY_TOL = 1e-9
# |D₁g| + |D₂g| ≤ √2 |Dg| の許容差
MSTRICT_TOL = 1e-9


@dataclass(frozen=True)
class RowMetrics:
    l1: float
    ac_gap: float
    sing_ratio: float
    mstrict_gap: float
    strict_gap: float
    total_variation: float
    jump_variation: float
    mstrict_consistent: bool


class Overlay:
    """g の三角形と f のセルの重なり (三角形番号, セル番号, 凸多角形)"""

    def __init__(self, g: PAHomeo, f: TestMap):
        self.g = g
        self.f = f
        self.pieces: List[Tuple[int, int, np.ndarray]] = []
        v = g.domain.vertices
        tris = g.domain.triangles
        owner = f.cell_index(v)
        corner_cells = owner[tris]
        whole = (corner_cells == corner_cells[:, :1]).all(axis=1) & (corner_cells[:, 0] >= 0)
        # セルは凸なので 3 頂点が同じセルなら三角形ごと含まれる
        self.whole = np.flatnonzero(whole)
        self.whole_cells = corner_cells[whole, 0]
        boxes = [(c.polygon.min(axis=0), c.polygon.max(axis=0)) for c in f.cells]
        for t in np.flatnonzero(~whole):
            tri = v[tris[t]]
            lo, hi = tri.min(axis=0), tri.max(axis=0)
            for k, (clo, chi) in enumerate(boxes):
                if np.any(clo >= hi) or np.any(chi <= lo):
                    continue
                piece = clip_convex(tri, f.cells[k].polygon)
                if len(piece) >= 3 and polygon_area(piece) > 0.0:
                    self.pieces.append((int(t), k, piece))


def _collapsed_gauss(n: int = GAUSS_POINTS) -> Tuple[np.ndarray, np.ndarray]:
    """参照三角形 (0,0),(1,0),(0,1) 上の点と重み (重みの和 1/2)"""
    x, w = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (x + 1.0)
    ws = 0.5 * w
    S, T = np.meshgrid(s, s, indexing="ij")
    W = np.outer(ws, ws) * (1.0 - S)
    pts = np.column_stack([S.ravel(), (T * (1.0 - S)).ravel()])
    return pts, W.ravel()


def _integrate_affine_norm(tris: np.ndarray, M: np.ndarray, c: np.ndarray) -> float:
    """Σ_T ∫_T |M_T x + c_T| dx (tris は (m, 3, 2))"""
    if len(tris) == 0:
        return 0.0
    ref, w = _collapsed_gauss()
    a, b, cc = tris[:, 0], tris[:, 1], tris[:, 2]
    e1, e2 = b - a, cc - a
    det = np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    pts = a[:, None, :] + ref[None, :, 0:1] * e1[:, None, :] + ref[None, :, 1:2] * e2[:, None, :]
    vals = np.einsum("mij,mkj->mki", M, pts) + c[:, None, :]
    return float((np.hypot(vals[..., 0], vals[..., 1]) @ w * det).sum())


def _fan(poly: np.ndarray) -> np.ndarray:
    return np.array([[poly[0], poly[k], poly[k + 1]] for k in range(1, len(poly) - 1)])


def l1_distance(g: PAHomeo, f: TestMap, overlay: Optional[Overlay] = None) -> float:
    """∫_Q |g − f|"""
    ov = overlay or Overlay(g, f)
    tris = g.domain.triangles
    base = g.domain.vertices[tris[:, 0]]
    offset = g.images[tris[:, 0]] - np.einsum("mij,mj->mi", g.jacobians, base)
    mats = np.array([c.matrix for c in f.cells])
    shifts = np.array([c.offset for c in f.cells])
    t = ov.whole
    total = _integrate_affine_norm(
        g.domain.vertices[tris[t]], g.jacobians[t] - mats[ov.whole_cells], offset[t] - shifts[ov.whole_cells]
    )
    parts: List[np.ndarray] = []
    owners: List[Tuple[int, int]] = []
    for tri, k, piece in ov.pieces:
        for sub in _fan(piece):
            parts.append(sub)
            owners.append((tri, k))
    if parts:
        tri_idx = np.array([o[0] for o in owners])
        cell_idx = np.array([o[1] for o in owners])
        total += _integrate_affine_norm(
            np.array(parts), g.jacobians[tri_idx] - mats[cell_idx], offset[tri_idx] - shifts[cell_idx]
        )
    return total


def ac_gap(g: PAHomeo, f: TestMap, jump_region: np.ndarray, overlay: Optional[Overlay] = None) -> float:
    """∫_{Q∖E} |Dg − ∇f| + ∫_E |∇f|"""
    ov = overlay or Overlay(g, f)
    mats = np.array([c.matrix for c in f.cells])
    norms = np.array([c.frobenius for c in f.cells])
    areas = g.domain.areas()
    in_e = np.asarray(jump_region, dtype=bool)
    t = ov.whole
    diff = np.sqrt(((g.jacobians[t] - mats[ov.whole_cells]) ** 2).sum(axis=(1, 2)))
    weight = np.where(in_e[t], norms[ov.whole_cells], diff)
    total = float(weight @ areas[t])
    for tri, k, piece in ov.pieces:
        area = polygon_area(piece)
        if in_e[tri]:
            total += norms[k] * area
        else:
            total += float(np.linalg.norm(g.jacobians[tri] - mats[k])) * area
    return total


def sing_ratio(g: PAHomeo, f: TestMap, jump_region: np.ndarray, eps: float, C: float) -> float:
    """|Dg|(E) / ((1 + Cε)|D^s f|(Q) + Cε)"""
    return pa_total_variation(g, np.asarray(jump_region, dtype=bool)) / (
        (1.0 + C * eps) * f.measure(SQUARE, "sing") + C * eps
    )


def crack_opening(g: PAHomeo, center: Sequence[float], normal: Sequence[float], r: float) -> float:
    """⟨g(p + rν) − g(p − rν), ν⟩ − 2r"""
    p = np.asarray(center, dtype=float)
    nu = np.asarray(normal, dtype=float)
    ends = g.evaluate(np.array([p + r * nu, p - r * nu]))
    return float((ends[0] - ends[1]) @ nu) - 2.0 * r


def sample_injectivity(g: PAHomeo, rng: np.random.Generator, samples: int = INJECTIVITY_SAMPLES) -> Certificate:
    """三角形の内部の標本点の像を像三角形の中で探す

    元の三角形以外の像三角形の内部にも入っていれば、その点は 2 つの点の像になっている。
    """
    tris = g.domain.triangles
    a, b, c = (g.images[tris[:, k]] for k in range(3))
    det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    flat = np.flatnonzero(np.abs(det) <= 1e-300)
    if flat.size:
        return Certificate.failed("image triangle is degenerate", triangle=int(flat[0]))
    which = rng.integers(0, len(tris), size=samples)
    bary = rng.dirichlet(np.ones(3), size=samples)
    dom = np.einsum("pc,pcd->pd", bary, g.domain.vertices[tris[which]])
    img = np.einsum("pc,pcd->pd", bary, g.images[tris[which]])
    # 重心からどの頂点よりも遠い三角形は点を含まない
    centers = (a + b + c) / 3.0
    reach = float(np.max([np.hypot(*(p - centers).T).max() for p in (a, b, c)]))
    tree = cKDTree(centers)
    for n, candidates in enumerate(tree.query_ball_point(img, reach)):
        idx = np.array([s for s in candidates if s != which[n]], dtype=int)
        if idx.size == 0:
            continue
        y = img[n]
        l1 = ((y[0] - a[idx, 0]) * (c[idx, 1] - a[idx, 1]) - (y[1] - a[idx, 1]) * (c[idx, 0] - a[idx, 0])) / det[idx]
        l2 = ((b[idx, 0] - a[idx, 0]) * (y[1] - a[idx, 1]) - (b[idx, 1] - a[idx, 1]) * (y[0] - a[idx, 0])) / det[idx]
        lam = np.minimum(np.minimum(l1, l2), 1.0 - l1 - l2)
        inside = np.flatnonzero(lam > INJECTIVITY_TOL)
        if inside.size:
            s = int(idx[inside[0]])
            w = np.array([1.0 - l1[inside[0]] - l2[inside[0]], l1[inside[0]], l2[inside[0]]])
            other = w @ g.domain.vertices[tris[s]]
            return Certificate.failed(
                "two sample points share an image",
                first=tuple(dom[n]),
                second=tuple(other),
                triangles=(int(which[n]), s),
            )
    return Certificate.passed()


def measure_metrics(g: PAHomeo, f: TestMap, jump_region: np.ndarray, eps: float, C: float) -> RowMetrics:
    overlay = Overlay(g, f)
    tv = pa_total_variation(g)
    partial_g = pa_directional_variation(g, (1.0, 0.0)) + pa_directional_variation(g, (0.0, 1.0))
    partial_f = f.measure(SQUARE, "directional", (1.0, 0.0)) + f.measure(SQUARE, "directional", (0.0, 1.0))
    out = RowMetrics(
        l1=l1_distance(g, f, overlay),
        ac_gap=ac_gap(g, f, jump_region, overlay),
        sing_ratio=sing_ratio(g, f, jump_region, eps, C),
        mstrict_gap=abs(partial_g - partial_f),
        strict_gap=abs(tv - f.measure(SQUARE, "total")),
        total_variation=tv,
        jump_variation=pa_total_variation(g, np.asarray(jump_region, dtype=bool)),
        mstrict_consistent=bool(partial_g <= np.sqrt(2.0) * tv + MSTRICT_TOL),
    )
    logger.debug(f"Metrics: L1={out.l1:.3e}, ac_gap={out.ac_gap:.3e}, strict_gap={out.strict_gap:.3e}")
    return out
