"""
測地幅の積分

方向 v に平行なファイバーの両端 X_*, X^* (⟨X_*, v⟩ < ⟨X^*, v⟩) について
d_𝒫(φ(X^*), φ(X_*)) を横断方向に積分する。
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy.integrate import quad

from ..geom.geodesic import GeodesicSolver
from .boundary import BoundaryData
from .fibers import cut_range, fiber_chain, fiber_frame

QUAD_EPSREL = 1e-4
QUAD_EPSABS = 1e-9
QUAD_LIMIT = 200


class _Width:
    def __init__(self, bd: BoundaryData, v: Sequence[float], solver: Optional[GeodesicSolver] = None):
        self.bd = bd
        self.v, _ = fiber_frame(v)
        self.solver = solver or GeodesicSolver(bd.image_polygon)

    def __call__(self, s: float) -> float:
        _, imgs = fiber_chain(self.bd, self.v, s)
        if len(imgs) < 2:
            return 0.0
        return self.solver.distance(imgs[0], imgs[-1])

    def euclidean(self, s: float) -> float:
        _, imgs = fiber_chain(self.bd, self.v, s)
        return float(np.hypot(*(imgs[-1] - imgs[0])))


def _integrate(fn, breaks: np.ndarray) -> Tuple[float, float]:
    value = err = 0.0
    for s0, s1 in zip(breaks[:-1], breaks[1:]):
        part, part_err = quad(fn, float(s0), float(s1), epsabs=QUAD_EPSABS / len(breaks), epsrel=QUAD_EPSREL, limit=QUAD_LIMIT)
        value += part
        err += part_err
    return value, err


def width_integral_with_error(
    bd: BoundaryData, v: Sequence[float], solver: Optional[GeodesicSolver] = None
) -> Tuple[float, float]:
    """(積分値, quad の誤差見積もり)"""
    width = _Width(bd, v, solver)
    value, err = _integrate(width, cut_range(bd, width.v))
    if err > QUAD_EPSREL * value + QUAD_EPSABS:
        logger.warning(f"Width quadrature along {tuple(width.v)} is coarse: value={value:.6g}, error={err:.3g}")
    return value, err


def width_integral(bd: BoundaryData, v: Sequence[float], solver: Optional[GeodesicSolver] = None) -> float:
    """∫_{π_v(𝒬)} d_𝒫(φ(X^*), φ(X_*)) dℋ¹(X)"""
    return width_integral_with_error(bd, v, solver)[0]


def straight_width_integral(bd: BoundaryData, v: Sequence[float]) -> float:
    """同じ積分を測地距離の代わりにユークリッド距離で"""
    width = _Width(bd, v)
    return _integrate(width.euclidean, cut_range(bd, width.v))[0]


@dataclass(frozen=True)
class WidthProfile:
    """v と v⊥ の両方向の幅関数の標本と積分"""
    direction: np.ndarray
    s: np.ndarray
    widths: np.ndarray
    integral: float
    s_perp: np.ndarray
    widths_perp: np.ndarray
    integral_perp: float


def width_profile(bd: BoundaryData, theta: float, samples: int = 64) -> WidthProfile:
    v = np.array([np.cos(theta), np.sin(theta)])
    vp = np.array([-np.sin(theta), np.cos(theta)])
    solver = GeodesicSolver(bd.image_polygon)
    out = []
    for d in (v, vp):
        width = _Width(bd, d, solver)
        span = cut_range(bd, width.v)
        s = np.linspace(span[0], span[-1], samples)
        out.append((s, np.array([width(float(x)) for x in s]), width_integral(bd, d, solver)))
    (s, w, i), (sp, wp, ip) = out
    return WidthProfile(v, s, w, i, sp, wp, ip)
