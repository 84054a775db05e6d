"""拡張の結果とレポート行"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, NamedTuple

from ..core.errors import Certificate
from ..geom.pa_map import PAHomeo

REPORT_COLUMNS = ("kind", "ratio", "slack", "triangles", "rounds")

# ∫|Dg| / (diam 𝒬 · ∫|D_τφ|) と ‖Dg − diag(d,0)‖_{L¹} / (δ r₀²) の経験的上限
RATIO_BOUND = 1000.0


@dataclass(frozen=True)
class ExtensionReport:
    """kind: hp / degenerate / componentwise / affine

    slack は上限から測定値を引いた余裕 (負なら不成立)
    """
    kind: str
    ratio: float
    slack: float
    triangles: int
    rounds: int
    details: Dict[str, Any] = field(default_factory=dict)

    def row(self) -> List[Any]:
        return [self.kind, f"{self.ratio:.9g}", f"{self.slack:.9g}", self.triangles, self.rounds]


class Extension(NamedTuple):
    g: PAHomeo
    report: ExtensionReport
    certificate: Certificate
