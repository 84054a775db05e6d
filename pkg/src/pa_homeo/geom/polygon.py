"""
多角形ユーティリティ: 包含判定、凸クリッピング (Sutherland-Hodgman)、
直線による分割、核 (Chebyshev 中心)
"""

from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog

from .predicates import on_closed_segment, orient_sign

Array = np.ndarray

INSIDE = 1
ON_BOUNDARY = 0
OUTSIDE = -1


def locate_point(poly: Array, p: Sequence[float]) -> int:
    """多角形 poly (n,2) に対する p の位置 (INSIDE / ON_BOUNDARY / OUTSIDE)"""
    n = len(poly)
    px, py = float(p[0]), float(p[1])
    inside = False
    for i in range(n):
        a = poly[i]
        b = poly[(i + 1) % n]
        if on_closed_segment((px, py), a, b):
            return ON_BOUNDARY
        if (a[1] > py) != (b[1] > py):
            x_cross = a[0] + (py - a[1]) * (b[0] - a[0]) / (b[1] - a[1])
            if px < x_cross:
                inside = not inside
    return INSIDE if inside else OUTSIDE


def polygon_area(poly: Array) -> float:
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_centroid(poly: Array) -> Array:
    x, y = poly[:, 0], poly[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    if abs(area) < 1e-300:
        return poly.mean(axis=0)
    return np.array([((x + xn) * cross).sum(), ((y + yn) * cross).sum()]) / (6.0 * area)


def clip_halfplane(poly: Array, normal: Array, offset: float) -> Array:
    """{x : <normal, x> <= offset} で凸多角形を切り取る"""
    if len(poly) == 0:
        return poly
    values = poly @ normal - offset
    out: List[Array] = []
    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        vp, vq = values[i], values[(i + 1) % n]
        if vp <= 0:
            out.append(p)
        if (vp < 0 < vq) or (vq < 0 < vp):
            t = vp / (vp - vq)
            out.append(p + t * (q - p))
    if len(out) < 3:
        return np.zeros((0, 2))
    return np.array(out)


def clip_convex(subject: Array, window: Array) -> Array:
    """凸多角形 subject を反時計回りの凸多角形 window で切り取る"""
    result = np.asarray(subject, dtype=float)
    m = len(window)
    for i in range(m):
        a, b = window[i], window[(i + 1) % m]
        edge = b - a
        # 左側 (内側) を残す: cross(edge, x - a) >= 0 ⇔ <n, x> <= <n, a>
        normal = np.array([edge[1], -edge[0]])
        result = clip_halfplane(result, normal, float(normal @ a))
        if len(result) == 0:
            break
    return result


def clip_rectangle(subject: Array, x0: float, x1: float, y0: float, y1: float) -> Array:
    window = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float)
    return clip_convex(subject, window)


def split_convex(poly: Array, point: Array, direction: Array) -> Tuple[Array, Array]:
    """直線 point + t·direction で凸多角形を左右に分割"""
    normal = np.array([direction[1], -direction[0]], dtype=float)
    offset = float(normal @ point)
    left = clip_halfplane(poly, normal, offset)
    right = clip_halfplane(poly, -normal, -offset)
    return left, right


def is_convex(poly: Array, strict: bool = False) -> bool:
    """反時計回りの多角形が凸か"""
    n = len(poly)
    for i in range(n):
        s = orient_sign(poly[i], poly[(i + 1) % n], poly[(i + 2) % n])
        if s < 0 or (strict and s == 0):
            return False
    return polygon_area(poly) > 0


def chebyshev_center(poly: Array) -> Tuple[Optional[Array], float]:
    """核 (全辺の左側半平面の共通部分) の Chebyshev 中心と半径

    核が空なら (None, 0.0)
    """
    n = len(poly)
    a_rows = []
    b_rows = []
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        edge = q - p
        length = float(np.hypot(*edge))
        if length == 0:
            continue
        normal = np.array([edge[1], -edge[0]]) / length
        a_rows.append([normal[0], normal[1], 1.0])
        b_rows.append(float(normal @ p))
    res = linprog(
        c=[0.0, 0.0, -1.0],
        A_ub=np.array(a_rows),
        b_ub=np.array(b_rows),
        bounds=[(None, None), (None, None), (0.0, None)],
        method="highs",
    )
    if not res.success or res.x[2] <= 1e-12:
        return None, 0.0
    return np.array(res.x[:2]), float(res.x[2])


def in_open_kernel(poly: Array, c: Array) -> bool:
    """c が全辺の厳密に左側にあるか (扇形分割が正向きになる条件)"""
    n = len(poly)
    return all(orient_sign(poly[i], poly[(i + 1) % n], c) > 0 for i in range(n))


def point_segment_distance(p: Array, a: Array, b: Array) -> float:
    ab = b - a
    denom = float(ab @ ab)
    t = 0.0 if denom == 0 else min(1.0, max(0.0, float((p - a) @ ab) / denom))
    return float(np.hypot(*(a + t * ab - p)))
