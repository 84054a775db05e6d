"""コア機能モジュール"""

from .errors import (
    Certificate,
    ErrorType,
    GeometryError,
    OutputError,
    PaHomeoError,
    SamplingExhausted,
    StageFailure,
    ValidationError,
    exit_code_for,
)

__all__ = [
    "Certificate",
    "ErrorType",
    "GeometryError",
    "OutputError",
    "PaHomeoError",
    "SamplingExhausted",
    "StageFailure",
    "ValidationError",
    "exit_code_for",
]
