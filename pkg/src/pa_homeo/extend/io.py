"""
境界データファイルと拡張レポート CSV

境界データ: `DOM x y` と `IMG x y` を同じ個数・同じ順序で並べる
"""

import csv
from pathlib import Path
from typing import Iterable, List, Tuple, Union

from ..core.errors import OutputError, ValidationError
from .boundary import BoundaryData
from .report import REPORT_COLUMNS, ExtensionReport

PathLike = Union[str, Path]


def parse_boundary_text(text: str) -> BoundaryData:
    dom: List[Tuple[float, float]] = []
    img: List[Tuple[float, float]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] not in ("DOM", "IMG") or len(parts) != 3:
            raise ValidationError(f"unknown boundary record: {line}", line=lineno)
        try:
            point = (float(parts[1]), float(parts[2]))
        except ValueError as e:
            raise ValidationError(f"malformed boundary record: {line}", line=lineno) from e
        (dom if parts[0] == "DOM" else img).append(point)
    if len(dom) != len(img):
        raise ValidationError("DOM and IMG rows must match one to one", {"DOM": len(dom), "IMG": len(img)})
    return BoundaryData(dom, img)


def read_boundary(path: PathLike) -> BoundaryData:
    target = Path(path)
    if not target.exists():
        raise ValidationError(f"boundary file not found: {target}")
    return parse_boundary_text(target.read_text(encoding="utf-8"))


def boundary_lines(bd: BoundaryData) -> List[str]:
    lines = [f"DOM {x!r} {y!r}" for x, y in bd.domain.tolist()]
    return lines + [f"IMG {x!r} {y!r}" for x, y in bd.image.tolist()]


def write_boundary(bd: BoundaryData, path: PathLike) -> Path:
    target = Path(path)
    try:
        target.write_text("\n".join(boundary_lines(bd)) + "\n", encoding="utf-8")
    except OSError as e:
        raise OutputError(f"cannot write boundary file: {e}", {"path": str(target)}) from e
    return target


def write_report_csv(reports: Iterable[ExtensionReport], path: PathLike) -> Path:
    target = Path(path)
    try:
        with target.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(REPORT_COLUMNS)
            for report in reports:
                writer.writerow(report.row())
    except OSError as e:
        raise OutputError(f"cannot write extension report: {e}", {"path": str(target)}) from e
    return target
