"""
ほぼ階数 1 の境界写像の拡張

境界で D_τφ ≈ diag(d, 0)τ のとき、縦のファイバー (ほぼ潰れる方向) に沿った
薄いスラブで拡張し、‖Dg − diag(d, 0)‖_{L¹} を δ r₀² と比べて報告する。
"""

from typing import Tuple

import numpy as np
from loguru import logger

from ..core.errors import ValidationError
from ..geom.pa_map import PAHomeo, certify_homeomorphism
from .boundary import BoundaryData
from .fibers import fiber_extension
from .hp import extend_hp
from .report import RATIO_BOUND, Extension, ExtensionReport

# 縦ファイバーの細分は 2^k − 1 本ずつ、k はこの回数まで
FIBER_ROUNDS = 6
VERTICAL = (0.0, 1.0)


def degenerate_preconditions(bd: BoundaryData, d: float, delta: float, r0: float) -> Tuple[float, float]:
    """(∫_{∂𝒬}|D_τφ − diag(d,0)τ|, ‖D_τφ‖_∞)。前提を満たさなければ ValidationError"""
    if d <= 0 or delta <= 0 or r0 <= 0:
        raise ValidationError("d, delta and r0 must be positive", {"d": d, "delta": delta, "r0": r0})
    dv, iv = bd.side_vectors()
    target = np.column_stack([d * dv[:, 0], np.zeros(len(dv))])
    deviation = float(np.hypot(*(iv - target).T).sum())
    sup = float(np.hypot(*bd.tangential_derivatives().T).max())
    if deviation >= delta * r0:
        raise ValidationError(
            "boundary derivative is not close to diag(d, 0)",
            {"deviation": deviation, "bound": delta * r0},
        )
    if sup > d + 2.0 * delta:
        raise ValidationError("tangential derivative exceeds d + 2 delta", {"sup": sup, "bound": d + 2.0 * delta})
    extent = np.ptp(bd.domain, axis=0)
    if np.any(extent < 0.5 * r0) or np.any(extent > 2.0 * r0):
        raise ValidationError(
            "domain is not comparable to a square of side r0",
            {"width": float(extent[0]), "height": float(extent[1]), "r0": r0},
        )
    return deviation, sup


def l1_deviation(g: PAHomeo, d: float) -> float:
    """‖Dg − diag(d, 0)‖_{L¹(𝒬)} (フロベニウスノルム)"""
    diff = g.jacobians - np.array([[d, 0.0], [0.0, 0.0]])
    return float(np.dot(g.domain.areas(), np.sqrt((diff ** 2).sum(axis=(1, 2)))))


def extend_degenerate(
    bd: BoundaryData, d: float, delta: float, r0: float, max_rounds: int = FIBER_ROUNDS
) -> Extension:
    deviation, sup = degenerate_preconditions(bd, d, delta, r0)
    for rounds in range(max_rounds + 1):
        g = fiber_extension(bd, VERTICAL, 2 ** rounds - 1)
        if g is None:
            continue
        cert = certify_homeomorphism(g)
        if cert:
            construction = "fibers"
            break
        logger.debug(f"Degenerate slab extension rejected in round {rounds}: {cert.reason}")
    else:
        logger.warning("Vertical fiber slabs did not certify; falling back to the HP extension")
        g, _, cert = extend_hp(bd)
        construction = "hp"
    l1 = l1_deviation(g, d)
    ratio = l1 / (delta * r0 ** 2)
    report = ExtensionReport(
        "degenerate", ratio, RATIO_BOUND - ratio, g.domain.n_triangles, rounds,
        {"construction": construction, "l1": l1, "boundary_deviation": deviation, "sup": sup},
    )
    return Extension(g, report, cert)
