"""
ε の減少列に沿ってパイプラインを回し、収束表を作る

1 行ごとに 分離 → 分類 → 摂動 → 境界写像 → 貼り合わせ → 計測。
K は行ごとに真に増やす。
"""

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from ..config.settings import RunConfig
from ..core.errors import StageFailure, ValidationError
from ..mapcat.catalogue import TestMap
from ..utils.sampling import derive_rng
from .assemble import Assembly, assemble_homeo
from .classify import Category, SquareClassification, classify_dyadic
from .isolate import isolate_singular_support
from .metrics import RowMetrics, measure_metrics, sample_injectivity
from .perturb import PerturbedMesh, perturb_vertices
from .skeleton import SkeletonMap, build_boundary_map

COLUMNS = ("eps", "K", "L1", "ac_gap", "sing_ratio", "mstrict_gap", "strict_gap", "cert")

# 行ごとの乱数の用途
STAGE_PERTURB = 1
STAGE_INJECTIVITY = 2

# 行をまたいで下がるべき量
TREND_COLUMNS = ("l1", "ac_gap", "strict_gap")
# 行をまたいで真に下がるべき量
STRICT_COLUMNS = ("l1", "ac_gap")
# これ以下の誤差は収束済みとみなす
CONVERGED = 1e-9
# 判定ごとに見る列
ACCEPTANCE_COLUMNS = {
    "l1_decreasing": "l1",
    "ac_gap_decreasing": "ac_gap",
    "ac_gap_bound": "ac_gap",
    "singular_bound": "sing_ratio",
}


@dataclass(frozen=True)
class ConvergenceRow:
    eps: float
    K: int
    metrics: RowMetrics
    cert: str = "pass"

    def cells(self) -> Tuple[str, ...]:
        m = self.metrics
        return (
            f"{self.eps:g}",
            str(self.K),
            f"{m.l1:.9e}",
            f"{m.ac_gap:.9e}",
            f"{m.sing_ratio:.9e}",
            f"{m.mstrict_gap:.9e}",
            f"{m.strict_gap:.9e}",
            self.cert,
        )


@dataclass(frozen=True)
class RowRun:
    """1 行ぶんの中間成果物"""
    classification: SquareClassification
    mesh: PerturbedMesh
    skeleton: SkeletonMap
    assembly: Assembly
    metrics: RowMetrics


@dataclass(frozen=True)
class ConvergenceReport:
    kind: str
    rows: Tuple[ConvergenceRow, ...]
    runs: Tuple[RowRun, ...] = field(default=(), compare=False, repr=False)
    C: float = 64.0

    def column(self, name: str) -> List[float]:
        return [float(getattr(r.metrics, name)) for r in self.rows]

    def trends(self) -> Dict[str, bool]:
        """各量が行を追って増えていないか"""
        out: Dict[str, bool] = {}
        for name in TREND_COLUMNS:
            values = self.column(name)
            out[name] = all(b <= a + 1e-12 * max(1.0, abs(a)) for a, b in zip(values, values[1:]))
        return out

    @property
    def levels(self) -> List[int]:
        return [r.K for r in self.rows]

    def acceptance(self) -> Dict[str, List[int]]:
        """面積狭義収束の各条件で落ちた行の番号 (空なら成立)

        L1 と ac_gap は真に減少、最後の行で ac_gap ≤ Cε、各行で sing_ratio ≤ 1
        """
        out: Dict[str, List[int]] = {}
        for name in STRICT_COLUMNS:
            values = self.column(name)
            out[f"{name}_decreasing"] = [
                k + 1 for k, (a, b) in enumerate(zip(values, values[1:])) if not (b < a or b <= CONVERGED)
            ]
        last = self.rows[-1] if self.rows else None
        over = last is not None and last.metrics.ac_gap > self.C * last.eps
        out["ac_gap_bound"] = [len(self.rows) - 1] if over else []
        out["singular_bound"] = [k for k, r in enumerate(self.rows) if r.metrics.sing_ratio > 1.0]
        return out

    @property
    def accepted(self) -> bool:
        return not any(self.acceptance().values())


def run_row(f: TestMap, eps: float, config: RunConfig, row: int, k_min: int) -> RowRun:
    """1 つの ε について g_ε を作って計測する"""
    run, consts, budgets = config.run, config.constants, config.budgets
    cover = isolate_singular_support(f, eps)
    cls = classify_dyadic(f, eps, k_min=k_min, k_max=run.k_max, cover=cover)
    mesh = perturb_vertices(
        f,
        cls,
        beta=consts.beta,
        C=consts.C,
        budget=budgets.perturbation,
        rng=derive_rng(run.seed, row, STAGE_PERTURB),
        tau_density=consts.tau_density,
    )
    skeleton = build_boundary_map(
        f, cls, mesh, eps, C=consts.C, tau_rep=consts.tau_rep, tau_cont=consts.tau_cont, tau_density=consts.tau_density
    )
    assembly = assemble_homeo(
        f, cls, mesh, skeleton, eps, refinement=budgets.refinement, workers=run.workers, C=consts.C
    )
    sampled = sample_injectivity(assembly.g, derive_rng(run.seed, row, STAGE_INJECTIVITY))
    if not sampled:
        raise StageFailure(f"sampled injectivity check failed at eps={eps:g}: {sampled.reason}", sampled.witness)
    metrics = measure_metrics(assembly.g, f, assembly.region(Category.JUMP), eps, consts.C)
    return RowRun(cls, mesh, skeleton, assembly, metrics)


def run_sequence(f: TestMap, eps_list: Sequence[float], config: Optional[RunConfig] = None) -> ConvergenceReport:
    """ε_list (真に減少) の各値で近似を作り、1 行ずつ表にする"""
    cfg = config or RunConfig()
    values = [float(e) for e in eps_list]
    if not values:
        raise ValidationError("eps list must not be empty")
    for e in values:
        if not 0.0 < e < 1.0:
            raise ValidationError("eps must lie in (0, 1)", {"eps": e})
    for a, b in zip(values, values[1:]):
        if not b < a:
            raise ValidationError("eps list must be strictly decreasing", {"eps": values})

    rows: List[ConvergenceRow] = []
    runs: List[RowRun] = []
    k_floor = cfg.run.k_min
    for index, eps in enumerate(values):
        if k_floor > cfg.run.k_max:
            raise StageFailure(
                "no dyadic level left for a strictly increasing K", {"eps": eps, "k_max": cfg.run.k_max}
            )
        logger.info(f"Row {index}: eps={eps:g}, K >= {k_floor}")
        result = run_row(f, eps, cfg, index, k_floor)
        cert = "pass" if result.assembly.certificate and result.metrics.mstrict_consistent else "fail"
        if not result.metrics.mstrict_consistent:
            logger.error(f"Row {index}: |D1 g| + |D2 g| exceeds sqrt(2)|Dg|")
        rows.append(ConvergenceRow(eps, result.classification.K, result.metrics, cert))
        runs.append(result)
        k_floor = result.classification.K + 1
        m = result.metrics
        logger.info(
            f"Row {index} done: K={result.classification.K}, L1={m.l1:.3e}, ac_gap={m.ac_gap:.3e}, "
            f"sing_ratio={m.sing_ratio:.3f}, strict_gap={m.strict_gap:.3e}"
        )

    report = ConvergenceReport(f.kind, tuple(rows), tuple(runs), cfg.constants.C)
    failed = report.acceptance()
    for name, bad in failed.items():
        if bad:
            column = ACCEPTANCE_COLUMNS[name]
            logger.error(f"{name} fails at rows {bad}: {column} = {np.round(report.column(column), 12).tolist()}")
    broken = sorted({k for bad in failed.values() for k in bad})
    if broken:
        marked = tuple(replace(r, cert="fail") if k in broken else r for k, r in enumerate(report.rows))
        report = replace(report, rows=marked)
    for name, ok in report.trends().items():
        if not ok:
            logger.warning(f"{name} does not decrease along the eps sequence: {np.round(report.column(name), 12).tolist()}")
    return report
