"""
方向ごとの変動を測地幅で抑える拡張

候補を v 方向のファイバー、v⊥ 方向のファイバー、HP 拡張の順に試し、
|⟨Dg, v⟩|(𝒬) ≤ W_v + ε と |⟨Dg, v⊥⟩|(𝒬) ≤ W_{v⊥} + ε を実測で満たした最初のものを返す。
"""

from typing import Iterator, Optional, Tuple

import numpy as np
from loguru import logger

from ..core.errors import StageFailure
from ..geom.geodesic import GeodesicSolver
from ..geom.pa_map import PAHomeo, certify_homeomorphism, pa_directional_variation
from .boundary import BoundaryData
from .fibers import fiber_extension
from .hp import extend_hp
from .report import Extension, ExtensionReport
from .widths import width_integral

FIBER_ROUNDS = 6


def _candidates(
    bd: BoundaryData, v: np.ndarray, vp: np.ndarray, max_rounds: int, solver: GeodesicSolver
) -> Iterator[Tuple[str, int, Optional[PAHomeo]]]:
    for name, u in (("fibers_v", v), ("fibers_vperp", vp)):
        for rounds in range(max_rounds + 1):
            yield name, rounds, fiber_extension(bd, u, 2 ** rounds - 1, route="geodesic", solver=solver)
    yield "hp", 0, None


def extend_componentwise(bd: BoundaryData, theta: float, eps: float, max_rounds: int = FIBER_ROUNDS) -> Extension:
    v = np.array([np.cos(theta), np.sin(theta)])
    vp = np.array([-np.sin(theta), np.cos(theta)])
    solver = GeodesicSolver(bd.image_polygon)
    budget_v = width_integral(bd, v, solver) + eps
    budget_vp = width_integral(bd, vp, solver) + eps
    best = -np.inf
    for name, rounds, g in _candidates(bd, v, vp, max_rounds, solver):
        if name == "hp":
            try:
                g, hp_report, cert = extend_hp(bd)
            except StageFailure as e:
                logger.debug(f"Componentwise HP fallback failed: {e}")
                continue
            rounds = hp_report.rounds
        elif g is None:
            continue
        else:
            cert = certify_homeomorphism(g)
            if not cert:
                logger.debug(f"Componentwise candidate {name} round {rounds} rejected: {cert.reason}")
                continue
        var_v = pa_directional_variation(g, v)
        var_vp = pa_directional_variation(g, vp)
        slack = min(budget_v - var_v, budget_vp - var_vp)
        best = max(best, slack)
        logger.debug(
            f"Componentwise candidate {name} round {rounds}: "
            f"|<Dg,v>|={var_v:.6g}/{budget_v:.6g}, |<Dg,v_perp>|={var_vp:.6g}/{budget_vp:.6g}"
        )
        if slack >= 0:
            report = ExtensionReport(
                "componentwise", max(var_v / budget_v, var_vp / budget_vp), slack, g.domain.n_triangles, rounds,
                {
                    "candidate": name,
                    "variation_v": var_v,
                    "variation_vperp": var_vp,
                    "budget_v": budget_v,
                    "budget_vperp": budget_vp,
                },
            )
            return Extension(g, report, cert)
    raise StageFailure(
        "componentwise inequalities did not hold within the refinement budget",
        {"best_slack": best, "budget_v": budget_v, "budget_vperp": budget_vp},
    )
