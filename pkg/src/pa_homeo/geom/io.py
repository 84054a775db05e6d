"""
幾何スナップショット (V / T / IMG 行) と SVG 出力
"""

from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ..core.errors import OutputError, ValidationError
from .pa_map import PAHomeo
from .triangulation import Triangulation

PathLike = Union[str, Path]

# 正方形 (-1,1)^2 を 1000×1000 の viewBox へ (y 反転)
VIEW_SIZE = 1000.0


def snapshot_lines(mesh: Union[Triangulation, PAHomeo]) -> List[str]:
    if isinstance(mesh, PAHomeo):
        tri, images = mesh.domain, mesh.images
    else:
        tri, images = mesh, None
    lines = [f"V {x!r} {y!r}" for x, y in tri.vertices.tolist()]
    lines += [f"T {i} {j} {k}" for i, j, k in tri.triangles.tolist()]
    if images is not None:
        lines += [f"IMG {n} {x!r} {y!r}" for n, (x, y) in enumerate(images.tolist())]
    return lines


def write_snapshot(mesh: Union[Triangulation, PAHomeo], path: PathLike) -> Path:
    target = Path(path)
    try:
        target.write_text("\n".join(snapshot_lines(mesh)) + "\n", encoding="utf-8")
    except OSError as e:
        raise OutputError(f"cannot write snapshot: {e}", {"path": str(target)}) from e
    return target


def parse_snapshot(text: str) -> Union[Triangulation, PAHomeo]:
    """スナップショット文字列を読み込む。IMG 行があれば PAHomeo を返す"""
    verts: List[Tuple[float, float]] = []
    tris: List[Tuple[int, int, int]] = []
    images: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "V" and len(parts) == 3:
                verts.append((float(parts[1]), float(parts[2])))
            elif parts[0] == "T" and len(parts) == 4:
                tris.append((int(parts[1]), int(parts[2]), int(parts[3])))
            elif parts[0] == "IMG" and len(parts) == 4:
                images[int(parts[1])] = (float(parts[2]), float(parts[3]))
            else:
                raise ValidationError(f"unknown snapshot record '{parts[0]}'", line=lineno)
        except ValueError as e:
            if isinstance(e, ValidationError):
                raise
            raise ValidationError(f"malformed snapshot record: {raw.strip()}", line=lineno) from e
    n = len(verts)
    for i, j, k in tris:
        if not all(0 <= v < n for v in (i, j, k)):
            raise ValidationError("triangle refers to a missing vertex", {"triangle": (i, j, k)})
    tri = Triangulation(np.array(verts), np.array(tris, dtype=int))
    if not images:
        return tri
    if sorted(images) != list(range(n)):
        raise ValidationError("IMG records must cover every vertex exactly once")
    return PAHomeo(tri, np.array([images[i] for i in range(n)]))


def read_snapshot(path: PathLike) -> Union[Triangulation, PAHomeo]:
    return parse_snapshot(Path(path).read_text(encoding="utf-8"))


def _to_view(points: np.ndarray) -> np.ndarray:
    out = np.empty_like(points, dtype=float)
    out[:, 0] = (points[:, 0] + 1.0) * 0.5 * VIEW_SIZE
    out[:, 1] = (1.0 - points[:, 1]) * 0.5 * VIEW_SIZE
    return out


def _quantile_colors(values: np.ndarray) -> List[str]:
    """値の分位で白→濃紺に塗り分ける"""
    if len(values) == 0:
        return []
    ranks = np.argsort(np.argsort(values, kind="stable"), kind="stable")
    q = ranks / max(1, len(values) - 1)
    if np.ptp(values) <= 1e-12 * max(1.0, float(np.abs(values).max())):
        q = np.zeros_like(q)
    colors = []
    for level in q:
        r = int(round(240 - 200 * level))
        g = int(round(244 - 180 * level))
        b = int(round(250 - 90 * level))
        colors.append(f"#{r:02x}{g:02x}{b:02x}")
    return colors


def mesh_svg(
    vertices: np.ndarray,
    triangles: np.ndarray,
    values: Optional[Sequence[float]] = None,
    stroke: str = "#334",
    title: str = "",
) -> str:
    """三角形メッシュを SVG 文字列にする (values があれば分位で塗る)"""
    pts = _to_view(np.asarray(vertices, dtype=float))
    fills = _quantile_colors(np.asarray(values, dtype=float)) if values is not None else None
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {VIEW_SIZE:g} {VIEW_SIZE:g}" '
        f'width="{VIEW_SIZE:g}" height="{VIEW_SIZE:g}">'
    ]
    if title:
        out.append(f"<title>{title}</title>")
    out.append('<rect x="0" y="0" width="1000" height="1000" fill="white"/>')
    for n, (i, j, k) in enumerate(np.asarray(triangles, dtype=int).tolist()):
        coords = " ".join(f"{pts[v, 0]:.3f},{pts[v, 1]:.3f}" for v in (i, j, k))
        fill = fills[n] if fills else "none"
        out.append(f'<polygon points="{coords}" fill="{fill}" stroke="{stroke}" stroke-width="0.5"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(text: str, path: PathLike) -> Path:
    target = Path(path)
    try:
        target.write_text(text, encoding="utf-8")
    except OSError as e:
        raise OutputError(f"cannot write svg: {e}", {"path": str(target)}) from e
    return target
