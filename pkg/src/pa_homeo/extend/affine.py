"""
良い正方形の角の拡張: 四角形を対角線で 2 つの三角形に分け、それぞれアフィンに写す
"""

from typing import List, Tuple

import numpy as np

from ..core.errors import GeometryError, StageFailure, ValidationError
from ..geom.pa_map import PAHomeo, certify_homeomorphism
from ..geom.polygon import is_convex
from ..geom.triangulation import Triangulation
from .boundary import CONVEX_TOL, TURN_TOL, BoundaryData, chord_heights, turn_sines
from .hp import hp_ratio
from .report import RATIO_BOUND, Extension, ExtensionReport

# 辺の上で φ が線形かどうかの許容差 (像の直径に対する比)
LINEAR_TOL = 1e-9


def corner_indices(bd: BoundaryData) -> List[int]:
    """定義域の折れ点のうち真に曲がっているもの"""
    bent = (turn_sines(bd.domain) > TURN_TOL) & (chord_heights(bd.domain) > CONVEX_TOL)
    return [int(i) for i in np.flatnonzero(bent)]


def _check_linear_sides(bd: BoundaryData, corners: List[int]) -> None:
    scale = max(1.0, float(np.ptp(bd.image, axis=0).max()))
    n = bd.n
    for k, c0 in enumerate(corners):
        c1 = corners[(k + 1) % len(corners)]
        a, b = bd.domain[c0], bd.domain[c1]
        fa, fb = bd.image[c0], bd.image[c1]
        i = (c0 + 1) % n
        while i != c1:
            t = float((bd.domain[i] - a) @ (b - a)) / float((b - a) @ (b - a))
            if np.hypot(*(bd.image[i] - (fa + t * (fb - fa)))) > LINEAR_TOL * scale:
                raise ValidationError("boundary map is not linear on a side", {"side": k, "break_point": i})
            i = (i + 1) % n


def _affine(src: np.ndarray, dst: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """src の 3 点を dst へ写す (A, b)"""
    e = np.array([src[1] - src[0], src[2] - src[0]])
    f = np.array([dst[1] - dst[0], dst[2] - dst[0]])
    a = np.linalg.solve(e, f).T
    return a, dst[0] - a @ src[0]


def affine_corner_extension(bd: BoundaryData) -> Extension:
    """4 辺で線形な φ を、像の四角形が凸なら 2 枚のアフィン片で拡張する"""
    corners = corner_indices(bd)
    if len(corners) != 4:
        raise ValidationError("domain is not a quadrilateral", {"corners": len(corners)})
    _check_linear_sides(bd, corners)
    quad = bd.image[corners]
    if not is_convex(quad, strict=True):
        raise GeometryError("image quadrilateral is not convex")
    dom_quad = bd.domain[corners]
    # 短い方の対角線で分ける
    split = 0 if np.hypot(*(dom_quad[2] - dom_quad[0])) <= np.hypot(*(dom_quad[3] - dom_quad[1])) else 1
    n = bd.n
    vertices: List[np.ndarray] = list(bd.domain)
    images: List[np.ndarray] = list(bd.image)
    triangles: List[Tuple[int, int, int]] = []
    for half in range(2):
        k0 = (split + 2 * half) % 4
        tri = [corners[(k0 + r) % 4] for r in range(3)]
        cycle = [tri[0]]
        i = tri[0]
        while i != tri[2]:
            i = (i + 1) % n
            cycle.append(i)
        if len(cycle) == 3:
            triangles.append((tri[0], tri[1], tri[2]))
            continue
        # 辺に折れ点があるときだけ重心から扇形に分ける
        a, b = _affine(bd.domain[tri], bd.image[tri])
        center = bd.domain[tri].mean(axis=0)
        vertices.append(center)
        images.append(a @ center + b)
        g_idx = len(vertices) - 1
        triangles.extend((cycle[m], cycle[(m + 1) % len(cycle)], g_idx) for m in range(len(cycle)))
    g = PAHomeo(Triangulation(np.array(vertices), np.array(triangles)), np.array(images))
    cert = certify_homeomorphism(g)
    if not cert:
        raise StageFailure(f"affine corner extension failed to certify: {cert.reason}", cert.witness)
    ratio = hp_ratio(g, bd)
    report = ExtensionReport("affine", ratio, RATIO_BOUND - ratio, g.domain.n_triangles, 0, {"diagonal": split})
    return Extension(g, report, cert)
