"""
幾何述語 (向き判定・incircle)
浮動小数で計算し、行列式が τ_geom 未満のときだけ有理数で再計算する
"""

from fractions import Fraction
from typing import Optional, Sequence, Union

Number = Union[float, Fraction]
PointLike = Sequence[Number]

# 浮動小数の行列式がこれより小さいとき厳密計算へ切り替える
TAU_GEOM = 1e-10


def set_tau_geom(tau: float) -> None:
    """厳密計算へ切り替えるしきい値を変える (符号の結果は変わらない)"""
    global TAU_GEOM
    if not tau > 0:
        raise ValueError(f"tau_geom must be positive: {tau}")
    TAU_GEOM = tau


def _orient_exact(a: PointLike, b: PointLike, c: PointLike) -> Fraction:
    ax, ay = Fraction(a[0]), Fraction(a[1])
    bx, by = Fraction(b[0]), Fraction(b[1])
    cx, cy = Fraction(c[0]), Fraction(c[1])
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def orient2d(a: PointLike, b: PointLike, c: PointLike, tau: Optional[float] = None) -> float:
    """a→b→c の符号付き面積の2倍 (反時計回りで正)"""
    tau = TAU_GEOM if tau is None else tau
    det = (float(b[0]) - float(a[0])) * (float(c[1]) - float(a[1])) - (
        float(b[1]) - float(a[1])
    ) * (float(c[0]) - float(a[0]))
    if abs(det) >= tau:
        return det
    return float(_orient_exact(a, b, c))


def orient_sign(a: PointLike, b: PointLike, c: PointLike, tau: Optional[float] = None) -> int:
    """向きの符号 (+1 左回り, 0 同一直線, -1 右回り)"""
    tau = TAU_GEOM if tau is None else tau
    det = (float(b[0]) - float(a[0])) * (float(c[1]) - float(a[1])) - (
        float(b[1]) - float(a[1])
    ) * (float(c[0]) - float(a[0]))
    if abs(det) >= tau:
        return 1 if det > 0 else -1
    exact = _orient_exact(a, b, c)
    if exact > 0:
        return 1
    if exact < 0:
        return -1
    return 0


def incircle(a: PointLike, b: PointLike, c: PointLike, d: PointLike) -> float:
    """d が反時計回りの三角形 abc の外接円の内側なら正"""
    adx, ady = float(a[0]) - float(d[0]), float(a[1]) - float(d[1])
    bdx, bdy = float(b[0]) - float(d[0]), float(b[1]) - float(d[1])
    cdx, cdy = float(c[0]) - float(d[0]), float(c[1]) - float(d[1])
    alift = adx * adx + ady * ady
    blift = bdx * bdx + bdy * bdy
    clift = cdx * cdx + cdy * cdy
    return (
        alift * (bdx * cdy - cdx * bdy)
        + blift * (cdx * ady - adx * cdy)
        + clift * (adx * bdy - bdx * ady)
    )


def on_closed_segment(p: PointLike, a: PointLike, b: PointLike) -> bool:
    """p が閉線分 [a, b] 上にあるか"""
    if orient_sign(a, b, p) != 0:
        return False
    return (
        min(a[0], b[0]) <= p[0] <= max(a[0], b[0])
        and min(a[1], b[1]) <= p[1] <= max(a[1], b[1])
    )


def point_in_closed_triangle(p: PointLike, a: PointLike, b: PointLike, c: PointLike) -> bool:
    """p が閉三角形 abc (向き不問) に含まれるか"""
    s1 = orient_sign(a, b, p)
    s2 = orient_sign(b, c, p)
    s3 = orient_sign(c, a, p)
    has_neg = s1 < 0 or s2 < 0 or s3 < 0
    has_pos = s1 > 0 or s2 > 0 or s3 > 0
    return not (has_neg and has_pos)
