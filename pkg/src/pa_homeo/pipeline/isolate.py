"""
ジャンプ集合を小さな正方形の有限和で覆う

ある二進レベルで、ジャンプ片に触れる閉正方形をすべて集める。
被覆の絶対連続部分の質量が小さく、被覆の外に残る特異部分も小さくなる
最初のレベルを返す。
"""

import math
from typing import List, Set, Tuple

import numpy as np
from loguru import logger

from ..core.errors import StageFailure, ValidationError
from ..mapcat.catalogue import SQUARE, TestMap
from ..mapcat.cells import clip_segment_convex
from ..mapcat.measures import Rect

# 被覆を探す最大の二進レベル (1 辺 2^{1-level})
MAX_LEVEL = 24


def level_side(level: int) -> float:
    return 2.0 ** (1 - level)


def jump_cover(f: TestMap, level: int) -> List[Rect]:
    """レベル level の二進正方形のうち、閉包がジャンプ片に触れるもの (行優先の順)"""
    n = 2 ** level
    side = level_side(level)
    hits: Set[Tuple[int, int]] = set()
    for piece in f.jumps:
        lo = np.minimum(piece.start, piece.end)
        hi = np.maximum(piece.start, piece.end)
        ix0, iy0 = (max(0, int(math.floor((v + 1.0) / side)) - 1) for v in lo)
        ix1, iy1 = (min(n - 1, int(math.ceil((v + 1.0) / side))) for v in hi)
        for j in range(iy0, iy1 + 1):
            for i in range(ix0, ix1 + 1):
                rect = Rect(-1.0 + i * side, -1.0 + (i + 1) * side, -1.0 + j * side, -1.0 + (j + 1) * side)
                if clip_segment_convex(piece.start, piece.end, rect.polygon()) is not None:
                    hits.add((j, i))
    return [
        Rect(-1.0 + i * side, -1.0 + (i + 1) * side, -1.0 + j * side, -1.0 + (j + 1) * side)
        for j, i in sorted(hits)
    ]


def isolate_singular_support(f: TestMap, eps: float, max_level: int = MAX_LEVEL) -> List[Rect]:
    """|D^a f|(F̃) ≤ ε·min{1, |D^a f|(Q), |D^s f|(Q)} かつ
    |D^s f|(Q∖F̃) ≤ ε|D^s f|(Q), ≤ ε²|D^a f|(Q) を満たす正方形の族

    ジャンプがなければ空の族
    """
    if not 0.0 < eps < 1.0:
        raise ValidationError("eps must lie in (0, 1)", {"eps": eps})
    if not f.jumps:
        return []
    ac_total = f.measure(SQUARE, "ac")
    sing_total = f.measure(SQUARE, "sing")
    ac_bound = eps * min(1.0, ac_total, sing_total)
    outside_bound = min(eps * sing_total, eps * eps * ac_total) if ac_total > 0 else eps * sing_total
    worst: Tuple[float, float] = (math.inf, math.inf)
    for level in range(1, max_level + 1):
        cover = jump_cover(f, level)
        ac_cover = sum(f.measure(r.polygon(), "ac") for r in cover)
        outside = max(0.0, sing_total - sum(f.measure(r.polygon(), "sing") for r in cover))
        worst = (ac_cover, outside)
        if ac_cover <= ac_bound and outside <= outside_bound * (1.0 + 1e-12):
            logger.info(
                f"Jump set isolated at level {level}: {len(cover)} squares, "
                f"|D^a f|(cover)={ac_cover:.3e} (bound {ac_bound:.3e})"
            )
            return cover
        logger.debug(f"Isolation level {level} too coarse: |D^a f|(cover)={ac_cover:.3e}, outside={outside:.3e}")
    raise StageFailure(
        "jump set could not be isolated",
        {"max_level": max_level, "ac_cover": worst[0], "ac_bound": ac_bound, "outside": worst[1]},
    )
