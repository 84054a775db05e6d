"""
実行結果をファイルに書き出す

- convergence.csv: 1 行 1 ε の収束表
- mesh_eps<ε>.svg / image_eps<ε>.svg: 定義域の三角形分割と、|Dg| の分位で塗った像
- snapshot_eps<ε>.txt: g のテキスト表現 (任意)
- manifest.json: シード・定数・しきい値・行ごとの K

同じ設定とシードなら CSV と manifest はバイト単位で一致する (時刻は書かない)。
"""

import csv
import json
from pathlib import Path
from typing import Any, Dict, List

import numpy as np
from loguru import logger

from .. import __version__
from ..config.settings import RunConfig
from ..core.errors import OutputError
from ..geom.io import mesh_svg, write_snapshot, write_svg
from ..pipeline.sequence import COLUMNS, ConvergenceReport, RowRun

CSV_NAME = "convergence.csv"
MANIFEST_NAME = "manifest.json"


def write_convergence_csv(report: ConvergenceReport, path: Path) -> Path:
    try:
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(COLUMNS)
            for row in report.rows:
                writer.writerow(row.cells())
    except OSError as e:
        raise OutputError(f"cannot write convergence table: {e}", {"path": str(path)}) from e
    return path


def _row_record(eps: float, run: RowRun) -> Dict[str, Any]:
    cls = run.classification
    return {
        "eps": eps,
        "K": cls.K,
        "alpha0": cls.alpha0,
        "alpha": cls.alpha,
        "categories": cls.counts(),
        "sigma": run.skeleton.sigma,
        "closeness": run.skeleton.closeness,
        "mean_draws": float(run.mesh.attempts[1:-1, 1:-1].mean()) if cls.n > 1 else 1.0,
        "triangles": int(run.assembly.g.domain.n_triangles),
        "extensions": run.assembly.kinds(),
        "slack": {
            name: check.slack
            for name, check in sorted({**cls.conclusions, **run.skeleton.ledger}.items())
        },
    }


def manifest_data(report: ConvergenceReport, config: RunConfig) -> Dict[str, Any]:
    """manifest.json の中身 (パスやログ設定のように実行環境に依る値は含めない)"""
    rows: List[Dict[str, Any]] = []
    for row, run in zip(report.rows, report.runs):
        rows.append(_row_record(row.eps, run))
    return {
        "version": __version__,
        "map": {"kind": config.map.map, "params": dict(config.map.params)},
        "seed": config.run.seed,
        "eps": list(config.run.eps),
        "levels": {"k_min": config.run.k_min, "k_max": config.run.k_max, "used": report.levels},
        "constants": config.constants.model_dump(),
        "budgets": config.budgets.model_dump(),
        "trends": report.trends(),
        "acceptance": report.acceptance(),
        "rows": rows,
    }


def _jacobian_norms(run: RowRun) -> np.ndarray:
    J = run.assembly.g.jacobians
    return np.sqrt((J ** 2).sum(axis=(1, 2)))


def render_outputs(report: ConvergenceReport, config: RunConfig) -> List[Path]:
    """設定で有効な出力物を書き、書いたファイルの一覧を返す"""
    out_dir = Path(config.output.dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OutputError(f"cannot create output directory: {e}", {"path": str(out_dir)}) from e

    written: List[Path] = []
    if config.output.csv:
        written.append(write_convergence_csv(report, out_dir / CSV_NAME))
    for row, run in zip(report.rows, report.runs):
        g = run.assembly.g
        tag = f"eps{row.eps:g}"
        if config.output.svg:
            written.append(
                write_svg(mesh_svg(g.domain.vertices, g.domain.triangles, title=f"domain mesh, {tag}"), out_dir / f"mesh_{tag}.svg")
            )
            written.append(
                write_svg(
                    mesh_svg(g.images, g.domain.triangles, values=_jacobian_norms(run), title=f"image mesh, {tag}"),
                    out_dir / f"image_{tag}.svg",
                )
            )
        if config.output.snapshot:
            written.append(write_snapshot(g, out_dir / f"snapshot_{tag}.txt"))
    if config.output.manifest:
        target = out_dir / MANIFEST_NAME
        try:
            target.write_text(json.dumps(manifest_data(report, config), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        except OSError as e:
            raise OutputError(f"cannot write manifest: {e}", {"path": str(target)}) from e
        written.append(target)
    logger.info(f"Wrote {len(written)} output files to {out_dir}")
    return written
