"""
棄却サンプリング

「ほとんどすべての選び方がうまくいく」段階は、乱数で候補を引いて検査し、
通らなければ引き直す。試行回数は tenacity の停止条件で管理する。
"""

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Generic, Optional, TypeVar

import numpy as np
from loguru import logger
from tenacity import RetryError, Retrying, retry_if_exception_type, stop_after_attempt

from ..core.errors import SamplingExhausted

T = TypeVar("T")

DEFAULT_BUDGET = 64


class Rejected(Exception):
    """候補が検査に落ちた (score は小さいほど良い)"""

    def __init__(self, reason: str, score: float = float("inf"), **witness: Any):
        super().__init__(reason)
        self.reason = reason
        self.score = float(score)
        self.witness = witness


@dataclass
class SamplingLedger(Generic[T]):
    """試行の記録"""
    attempts: int = 0
    best_score: float = float("inf")
    best_reason: str = ""
    best_witness: Dict[str, Any] = field(default_factory=dict)
    value: Optional[T] = None

    @property
    def acceptance(self) -> float:
        return 0.0 if self.attempts == 0 else 1.0 / self.attempts


def rejection_sample(
    draw: Callable[[np.random.Generator], T],
    rng: np.random.Generator,
    budget: int = DEFAULT_BUDGET,
    what: str = "sample",
) -> SamplingLedger[T]:
    """draw(rng) が Rejected を投げなくなるまで最大 budget 回引き直す

    使い切ったら最良スコアを添えて SamplingExhausted を送出する
    """
    ledger: SamplingLedger[T] = SamplingLedger()

    def attempt() -> T:
        ledger.attempts += 1
        try:
            return draw(rng)
        except Rejected as e:
            if e.score < ledger.best_score or not ledger.best_reason:
                ledger.best_score = min(ledger.best_score, e.score)
                ledger.best_reason = e.reason
                ledger.best_witness = dict(e.witness)
            logger.debug(f"{what}: draw {ledger.attempts} rejected ({e.reason}, score={e.score:.3e})")
            raise

    retrying = Retrying(
        stop=stop_after_attempt(max(1, int(budget))),
        retry=retry_if_exception_type(Rejected),
        reraise=False,
    )
    try:
        ledger.value = retrying(attempt)
    except RetryError as e:
        logger.warning(f"{what}: sampling budget of {budget} draws exhausted ({ledger.best_reason})")
        raise SamplingExhausted(
            f"{what}: no acceptable draw in {budget} attempts",
            {"reason": ledger.best_reason, "best": ledger.best_score, **ledger.best_witness},
        ) from e
    if ledger.attempts > 1:
        logger.debug(f"{what}: accepted after {ledger.attempts} draws")
    return ledger


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """実行シードと整数キー列から独立な乱数生成器を作る"""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *(int(k) for k in keys)]))
