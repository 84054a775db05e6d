"""
HP 拡張のベンチマーク用コーパス

正方形 [-1, 1]² の境界に 8〜32 個の折れ点を置き、原点からの動径を
ランダムに伸縮した星形の像への境界写像を作る。
"""

from typing import List, Optional, Tuple

import numpy as np
from loguru import logger

from ..core.errors import PaHomeoError
from ..utils.sampling import derive_rng
from ..utils.workpool import WorkPool
from .boundary import BoundaryData
from .hp import extend_hp
from .report import ExtensionReport

MIN_BREAKS = 8
MAX_BREAKS = 32
JITTER = 0.3

_CORNERS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])


def _perimeter_point(u: float) -> np.ndarray:
    """周長パラメータ u ∈ [0, 8) の正方形境界上の点 (左下から反時計回り)"""
    side = int(u // 2.0)
    t = (u - 2.0 * side) / 2.0
    a, b = _CORNERS[side], _CORNERS[(side + 1) % 4]
    return a + t * (b - a)


def random_star_boundary(rng: np.random.Generator, breaks: Optional[int] = None) -> BoundaryData:
    m = int(rng.integers(MIN_BREAKS, MAX_BREAKS + 1)) if breaks is None else breaks
    extra = np.sort(rng.uniform(0.0, 8.0, size=max(0, m - 4)))
    params = np.unique(np.concatenate([[0.0, 2.0, 4.0, 6.0], extra]))
    domain = np.array([_perimeter_point(float(u)) for u in params])
    scale = 1.0 + rng.uniform(-JITTER, JITTER, size=len(domain))
    return BoundaryData(domain, domain * scale[:, None])


def bench_corpus(n: int, seed: int) -> List[BoundaryData]:
    return [random_star_boundary(derive_rng(seed, k)) for k in range(n)]


def _run_one(item: Tuple[int, BoundaryData]) -> ExtensionReport:
    k, bd = item
    try:
        return extend_hp(bd).report
    except PaHomeoError as e:
        logger.warning(f"Bench case {k} failed: {e}")
        return ExtensionReport("hp", float("nan"), float("nan"), 0, -1, {"error": str(e)})


def run_bench(n: int, seed: int, workers: int = 1) -> List[ExtensionReport]:
    """コーパスに HP 拡張をかけた結果 (入力順)"""
    corpus = bench_corpus(n, seed)
    reports = WorkPool(workers).map(_run_one, list(enumerate(corpus)))
    ratios = [r.ratio for r in reports if np.isfinite(r.ratio)]
    if ratios:
        logger.info(f"Extension bench: {len(ratios)}/{n} certified, max ratio {max(ratios):.6g}")
    return reports
