"""
エラー分類と例外階層
CLI の終了コード (0 / 2 / 3) への対応付けもここで行う
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional


class ErrorType(Enum):
    """エラータイプ分類"""
    VALIDATION = "validation"
    GEOMETRY = "geometry"
    STAGE = "stage"
    IO = "io"


class PaHomeoError(Exception):
    """全例外の基底クラス"""

    error_type: ErrorType = ErrorType.STAGE

    def __init__(self, message: str, witness: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.witness: Dict[str, Any] = dict(witness or {})

    def __str__(self) -> str:
        if not self.witness:
            return self.message
        details = ", ".join(f"{k}={v}" for k, v in self.witness.items())
        return f"{self.message} ({details})"


class ValidationError(PaHomeoError, ValueError):
    """入力・前提条件・設定の不正"""

    error_type = ErrorType.VALIDATION

    def __init__(
        self,
        message: str,
        witness: Optional[Dict[str, Any]] = None,
        line: Optional[int] = None,
    ):
        super().__init__(message, witness)
        self.line = line

    def __str__(self) -> str:
        base = super().__str__()
        return f"line {self.line}: {base}" if self.line is not None else base


class GeometryError(ValidationError):
    """退化した幾何入力 (長さ 0 の線分、単純でない多角形など)"""

    error_type = ErrorType.GEOMETRY


class StageFailure(PaHomeoError):
    """構成段階が予算内で事後条件を満たせなかった"""

    error_type = ErrorType.STAGE


class SamplingExhausted(StageFailure):
    """棄却サンプリングの試行回数切れ"""


class OutputError(PaHomeoError):
    """出力先に書き込めない"""

    error_type = ErrorType.IO


EXIT_SUCCESS = 0
EXIT_VALIDATION = 2
EXIT_STAGE = 3

_EXIT_CODES: Dict[ErrorType, int] = {
    ErrorType.VALIDATION: EXIT_VALIDATION,
    ErrorType.GEOMETRY: EXIT_VALIDATION,
    ErrorType.STAGE: EXIT_STAGE,
    ErrorType.IO: EXIT_STAGE,
}


def exit_code_for(error: BaseException) -> int:
    """例外を CLI の終了コードへ変換"""
    if isinstance(error, PaHomeoError):
        return _EXIT_CODES[error.error_type]
    if isinstance(error, (ValueError, FileNotFoundError)):
        return EXIT_VALIDATION
    return EXIT_STAGE


@dataclass(frozen=True)
class Certificate:
    """検証結果 (例外ではなく値として返す)"""
    ok: bool
    reason: str = ""
    witness: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def passed(cls) -> "Certificate":
        return cls(True, "pass")

    @classmethod
    def failed(cls, reason: str, **witness: Any) -> "Certificate":
        return cls(False, reason, dict(witness))

    def __bool__(self) -> bool:
        return self.ok
