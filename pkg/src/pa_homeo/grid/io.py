"""
グリッド記述ファイル

直線グリッド:   `X c` / `Y c` を 1 行ずつ
非直線グリッド: `CURVE n` の後に `x y` を n 行
"""

from pathlib import Path
from typing import List, Tuple, Union

from ..core.errors import GeometryError, OutputError, ValidationError
from ..geom.primitives import Polyline
from .grids import NonStraightGrid, StraightGrid

PathLike = Union[str, Path]


def parse_grid_text(text: str) -> Union[StraightGrid, NonStraightGrid]:
    xs: List[float] = []
    ys: List[float] = []
    curves: List[List[Tuple[float, float]]] = []
    pending = 0
    header_line = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if pending:
                if len(parts) != 2:
                    raise ValidationError(f"expected 'x y' row, got: {line}", line=lineno)
                curves[-1].append((float(parts[0]), float(parts[1])))
                pending -= 1
            elif parts[0] in ("X", "Y") and len(parts) == 2:
                (xs if parts[0] == "X" else ys).append(float(parts[1]))
            elif parts[0] == "CURVE" and len(parts) == 2:
                pending = int(parts[1])
                if pending < 2:
                    raise ValidationError("a curve needs at least two vertices", line=lineno)
                curves.append([])
                header_line = lineno
            else:
                raise ValidationError(f"unknown grid record: {line}", line=lineno)
        except ValueError as e:
            if isinstance(e, ValidationError):
                raise
            raise ValidationError(f"malformed grid record: {line}", line=lineno) from e
    if pending:
        raise ValidationError(f"curve is missing {pending} rows", line=header_line)
    if curves and (xs or ys):
        raise ValidationError("a grid file holds either X/Y lines or CURVE blocks, not both")
    if curves:
        try:
            return NonStraightGrid.from_curves(Polyline.from_points(c) for c in curves)
        except GeometryError as e:
            raise ValidationError(f"invalid curve: {e.message}", e.witness) from e
    return StraightGrid(tuple(xs), tuple(ys))


def read_grid(path: PathLike) -> Union[StraightGrid, NonStraightGrid]:
    target = Path(path)
    if not target.exists():
        raise ValidationError(f"grid file not found: {target}")
    return parse_grid_text(target.read_text(encoding="utf-8"))


def grid_lines(grid: Union[StraightGrid, NonStraightGrid]) -> List[str]:
    if isinstance(grid, StraightGrid):
        return [f"X {x!r}" for x in grid.x_coords] + [f"Y {y!r}" for y in grid.y_coords]
    lines: List[str] = []
    for curve in grid.curves:
        pts = curve.array()
        lines.append(f"CURVE {len(pts)}")
        lines += [f"{x!r} {y!r}" for x, y in pts.tolist()]
    return lines


def write_grid(grid: Union[StraightGrid, NonStraightGrid], path: PathLike) -> Path:
    target = Path(path)
    try:
        target.write_text("\n".join(grid_lines(grid)) + "\n", encoding="utf-8")
    except OSError as e:
        raise OutputError(f"cannot write grid file: {e}", {"path": str(target)}) from e
    return target
