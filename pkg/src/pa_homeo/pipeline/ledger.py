"""段階ごとの結論の台帳 (測定値と上限の組)"""

from typing import Any, Dict, Mapping, NamedTuple, Optional, Tuple

from ..core.errors import StageFailure

# 上限との比較で許す丸め誤差
CHECK_TOL = 1e-12


class Check(NamedTuple):
    """measured ≤ bound を満たせば成立"""
    measured: float
    bound: float

    @property
    def slack(self) -> float:
        return self.bound - self.measured

    @property
    def ok(self) -> bool:
        return self.measured <= self.bound + CHECK_TOL * max(1.0, abs(self.bound))


Ledger = Dict[str, Check]


def first_failure(ledger: Mapping[str, Check]) -> Optional[Tuple[str, Check]]:
    for name, check in ledger.items():
        if not check.ok:
            return name, check
    return None


def require(ledger: Mapping[str, Check], stage: str, **witness: Any) -> None:
    """成立しない結論があれば、その名前と余裕を添えて StageFailure"""
    failed = first_failure(ledger)
    if failed is None:
        return
    name, check = failed
    raise StageFailure(
        f"{stage}: conclusion '{name}' does not hold",
        {"conclusion": name, "measured": check.measured, "bound": check.bound, "slack": check.slack, **witness},
    )
