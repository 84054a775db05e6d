"""収束表・メッシュ図・実行記録の出力"""

from .render import manifest_data, render_outputs, write_convergence_csv

__all__ = ["manifest_data", "render_outputs", "write_convergence_csv"]
