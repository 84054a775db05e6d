"""ユーティリティモジュール"""

from .logger import setup_logging
from .sampling import Rejected, SamplingLedger, derive_rng, rejection_sample
from .workpool import WorkPool

__all__ = ["Rejected", "SamplingLedger", "WorkPool", "derive_rng", "rejection_sample", "setup_logging"]
