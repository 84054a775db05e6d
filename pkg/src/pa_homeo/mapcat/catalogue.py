"""
解析的テスト写像のカタログ

すべての写像は Q(0,1) = (-1,1)² の凸セル分割上で区分アフィンで、
∂Q(0,1) 上で恒等写像に一致する。測度はセル面積とジャンプ片の線積分で厳密に求まる。
"""

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from ..core.errors import GeometryError, ValidationError
from ..geom.predicates import orient_sign
from .cells import Cell, JumpPiece, cells_from_vertex_values, clip_segment_convex, find_jump_pieces, fit_cell
from .cells import measure_cells_in, measure_jumps_in

SQUARE = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])

MEASURE_KINDS = ("total", "ac", "sing", "directional")


@dataclass(frozen=True)
class ParamSpec:
    """カタログ引数の既定値と範囲の説明"""
    name: str
    default: Any
    description: str


CATALOGUE: Dict[str, Tuple[ParamSpec, ...]] = {
    "identity": (),
    "affine": (
        ParamSpec("a11", 1.5, "> 0"),
        ParamSpec("a12", 0.0, "any; image of the core stays inside the square"),
        ParamSpec("a21", 0.0, "any; image of the core stays inside the square"),
        ParamSpec("a22", 1.0, "> 0, det A > 0"),
        ParamSpec("b1", 0.0, "|b1| small enough that the core image stays inside"),
        ParamSpec("b2", 0.0, "|b2| small enough that the core image stays inside"),
        ParamSpec("window", 0.25, "core half-width in (0, 1)"),
    ),
    "rank_one": (
        ParamSpec("d", 1.0, "> 0, d * window < 1"),
        ParamSpec("axis", "x", "x or y (stretched coordinate)"),
        ParamSpec("window", 0.5, "core half-width in (0, 1)"),
    ),
    "fracture": (
        ParamSpec("d", 0.2, "crack opening, 0 < d < 2 * reach"),
        ParamSpec("a", 0.5, "crack half-length, 0 < a < 1"),
        ParamSpec("profile", "trapezoid", "trapezoid or constant"),
        ParamSpec("reach", 0.5, "horizontal support of the opening, 0 < reach < 1"),
        ParamSpec("taper", 0.1, "trapezoid taper length, 0 < taper < a"),
    ),
    "shear_blend": (
        ParamSpec("s", 0.5, "|s| < 1"),
        ParamSpec("radius", 0.5, "0 < radius < 1"),
    ),
}


Region = Union[Tuple[float, float, float, float], np.ndarray, Sequence[Sequence[float]]]


def rect_polygon(x0: float, x1: float, y0: float, y1: float) -> np.ndarray:
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float)


def square_polygon(center: Sequence[float], r: float) -> np.ndarray:
    """Q(p, r): 中心 p、半辺長 r の正方形"""
    cx, cy = float(center[0]), float(center[1])
    return rect_polygon(cx - r, cx + r, cy - r, cy + r)


def as_region(region: Region) -> np.ndarray:
    """(x0, x1, y0, y1) または凸多角形を多角形配列にする"""
    arr = np.asarray(region, dtype=float)
    if arr.ndim == 1:
        if len(arr) != 4 or arr[1] < arr[0] or arr[3] < arr[2]:
            raise ValidationError("rectangle must be (x0, x1, y0, y1) with x0 <= x1, y0 <= y1")
        return rect_polygon(*arr)
    return arr.reshape(-1, 2)


@dataclass(frozen=True)
class TestMap:
    """カタログの BV 写像 (評価・勾配・ジャンプ集合・測度オラクル)"""
    __test__ = False

    kind: str
    params: Tuple[Tuple[str, Any], ...]
    cells: Tuple[Cell, ...]
    jumps: Tuple[JumpPiece, ...] = ()
    formula: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)
    identity_on_boundary: bool = True

    @property
    def parameters(self) -> Dict[str, Any]:
        return dict(self.params)

    @property
    def has_jumps(self) -> bool:
        return bool(self.jumps)

    def cell_index(self, points: np.ndarray) -> np.ndarray:
        """各点を含むセル番号。正方形の外は -1"""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.full(len(pts), -1, dtype=int)
        for k, cell in enumerate(self.cells):
            free = out < 0
            if not free.any():
                break
            hit = cell.contains(pts[free])
            idx = np.flatnonzero(free)[hit]
            out[idx] = k
        return out

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """f の値 (正方形の外は恒等写像で延長)"""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        owner = self.cell_index(pts)
        out = pts.copy()
        for k in np.unique(owner[owner >= 0]):
            sel = owner == k
            out[sel] = self.cells[k].apply(pts[sel])
        return out if np.ndim(points) > 1 else out[0]

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.evaluate(points)

    def gradient_at(self, point: Sequence[float]) -> np.ndarray:
        k = int(self.cell_index(np.asarray(point, dtype=float))[0])
        if k < 0:
            return np.eye(2)
        return self.cells[k].matrix.copy()

    def gradients(self, points: np.ndarray) -> np.ndarray:
        owner = self.cell_index(points)
        out = np.tile(np.eye(2), (len(owner), 1, 1))
        for k in np.unique(owner[owner >= 0]):
            out[owner == k] = self.cells[k].matrix
        return out

    def jump_piece_at(self, point: Sequence[float], tol: float = 1e-12) -> Optional[Tuple[JumpPiece, float]]:
        """点を含むジャンプ片とその上のパラメータ"""
        p = np.asarray(point, dtype=float)
        for piece in self.jumps:
            d = piece.end - piece.start
            t = float((p - piece.start) @ d) / float(d @ d)
            if -tol <= t <= 1.0 + tol and np.hypot(*(piece.start + t * d - p)) <= tol:
                return piece, min(1.0, max(0.0, t))
        return None

    def one_sided_limits(self, point: Sequence[float], normal: Optional[Sequence[float]] = None) -> Tuple[np.ndarray, np.ndarray]:
        """(f⁻(p), f⁺(p))。ジャンプ集合の外では両方 f(p)"""
        p = np.asarray(point, dtype=float)
        found = self.jump_piece_at(p)
        if found is not None:
            piece, _ = found
            return self.cells[piece.minus].apply(p), self.cells[piece.plus].apply(p)
        if normal is not None:
            nu = np.asarray(normal, dtype=float)
            lo = self.cell_index(p - 1e-9 * nu)[0]
            hi = self.cell_index(p + 1e-9 * nu)[0]
            f_lo = self.cells[lo].apply(p) if lo >= 0 else p.copy()
            f_hi = self.cells[hi].apply(p) if hi >= 0 else p.copy()
            return f_lo, f_hi
        value = self.evaluate(p)
        return value, value.copy()

    def polar_at(self, point: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
        """ジャンプ点での極分解 u ⊗ v (|u| = |v| = 1)"""
        found = self.jump_piece_at(point)
        if found is None:
            raise GeometryError("point is not on the jump set", {"point": tuple(point)})
        piece, t = found
        jump = piece.jump_at(t)
        size = float(np.hypot(*jump))
        if size <= 0.0:
            raise GeometryError("jump vanishes at this point", {"point": tuple(point)})
        return jump / size, piece.normal.copy()

    def jump_size_at(self, point: Sequence[float]) -> float:
        found = self.jump_piece_at(point)
        if found is None:
            return 0.0
        piece, t = found
        return float(np.hypot(*piece.jump_at(t)))

    def lipschitz_bound(self) -> float:
        """セルごとの作用素ノルムの最大値 (ジャンプは含まない)"""
        return max(float(np.linalg.norm(c.matrix, 2)) for c in self.cells)

    def measure(self, region: Region, which: str = "total", direction: Optional[Sequence[float]] = None) -> float:
        """|Df|, |D^a f|, |D^s f|, |⟨Df, v⟩| の閉形式の値 (Q(0,1) 内)"""
        poly = as_region(region)
        if which not in MEASURE_KINDS:
            raise ValidationError(f"unknown measure kind: {which}")
        v: Optional[np.ndarray] = None
        if which == "directional":
            if direction is None:
                raise ValidationError("directional measure needs a direction")
            v = np.asarray(direction, dtype=float)
            if abs(np.hypot(*v) - 1.0) > 1e-12:
                raise GeometryError("direction must be a unit vector")
        ac = 0.0
        sing = 0.0
        if which in ("total", "ac"):
            ac = measure_cells_in(self.cells, poly, lambda c: c.frobenius)
        if which in ("total", "sing"):
            sing = measure_jumps_in(self.jumps, poly)
        if which == "directional":
            ac = measure_cells_in(self.cells, poly, lambda c: c.directional(v))  # type: ignore[arg-type]
            sing = measure_jumps_in(self.jumps, poly, v)
        return ac + sing

    def jump_crossings(self, start: np.ndarray, end: np.ndarray) -> List[Tuple[float, JumpPiece]]:
        """線分 [start, end] がジャンプ片を横切るパラメータ"""
        out = []
        d = end - start
        for piece in self.jumps:
            e = piece.end - piece.start
            den = float(d[0] * e[1] - d[1] * e[0])
            if den == 0.0:
                continue
            w = piece.start - start
            t = float(w[0] * e[1] - w[1] * e[0]) / den
            s = float(w[0] * d[1] - w[1] * d[0]) / den
            if -1e-12 <= t <= 1 + 1e-12 and -1e-12 <= s <= 1 + 1e-12:
                out.append((min(1.0, max(0.0, t)), piece))
        out.sort(key=lambda item: item[0])
        return out

    def jump_overlaps(self, start: np.ndarray, end: np.ndarray) -> List[Tuple[float, float, JumpPiece]]:
        """線分がジャンプ片と重なる (同一直線上で正の長さを共有する) 区間"""
        out = []
        seg = np.array([start, end], dtype=float)
        for piece in self.jumps:
            d = piece.end - piece.start
            u = d / np.hypot(*d)
            if any(abs(u[0] * (q[1] - piece.start[1]) - u[1] * (q[0] - piece.start[0])) > 1e-12 for q in seg):
                continue
            hit = clip_segment_convex(start, end, _thin_box(piece))
            if hit is not None and hit[1] - hit[0] > 1e-12:
                out.append((hit[0], hit[1], piece))
        return out


def _thin_box(piece: JumpPiece) -> np.ndarray:
    """ジャンプ片を囲む細い長方形 (重なり判定用)"""
    d = piece.end - piece.start
    u = d / np.hypot(*d)
    n = np.array([-u[1], u[0]]) * 1e-10
    return np.array([piece.start - n, piece.end - n, piece.end + n, piece.start + n])


def _merge_params(kind: str, params: Mapping[str, Any]) -> Dict[str, Any]:
    if kind not in CATALOGUE:
        raise ValidationError(f"unknown catalogue map: {kind}", {"known": sorted(CATALOGUE)})
    specs = {p.name: p for p in CATALOGUE[kind]}
    unknown = sorted(set(params) - set(specs))
    if unknown:
        raise ValidationError(f"unknown parameters for {kind}: {', '.join(unknown)}")
    merged: Dict[str, Any] = {}
    for name, spec in specs.items():
        value = params.get(name, spec.default)
        if isinstance(spec.default, str):
            merged[name] = str(value)
        else:
            try:
                merged[name] = float(value)
            except (TypeError, ValueError) as e:
                raise ValidationError(f"parameter {name} must be a number", {"value": value}) from e
            if not np.isfinite(merged[name]):
                raise ValidationError(f"parameter {name} must be finite")
    return merged


def _require(condition: bool, message: str, **witness: Any) -> None:
    if not condition:
        raise ValidationError(message, witness)


def _core_mesh(window: float) -> Tuple[np.ndarray, List[Tuple[int, int, int]]]:
    """外枠 4 頂点 + 中心正方形 4 頂点の三角形分割"""
    outer = SQUARE.copy()
    inner = window * SQUARE
    vertices = np.vstack([outer, inner])
    tris: List[Tuple[int, int, int]] = [(4, 5, 6), (4, 6, 7)]
    for k in range(4):
        o0, o1 = k, (k + 1) % 4
        i0, i1 = 4 + k, 4 + (k + 1) % 4
        tris.append((o0, o1, i1))
        tris.append((o0, i1, i0))
    return vertices, tris


def _identity(p: Dict[str, Any]) -> Tuple[List[Cell], Callable[[np.ndarray], np.ndarray]]:
    ident = lambda pts: np.asarray(pts, dtype=float).copy()  # noqa: E731
    return [fit_cell(SQUARE, ident)], ident


def _affine(p: Dict[str, Any]) -> Tuple[List[Cell], None]:
    w = p["window"]
    _require(0.0 < w < 1.0, "window must lie in (0, 1)", window=w)
    matrix = np.array([[p["a11"], p["a12"]], [p["a21"], p["a22"]]])
    _require(float(np.linalg.det(matrix)) > 0.0, "affine matrix must have positive determinant")
    shift = np.array([p["b1"], p["b2"]])
    vertices, tris = _core_mesh(w)
    values = vertices.copy()
    values[4:] = vertices[4:] @ matrix.T + shift
    _require(bool(np.all(np.abs(values[4:]) < 1.0)), "core image must stay inside the square")
    for t in tris:
        _require(orient_sign(*values[list(t)]) > 0, "affine blend folds over", triangle=t)
    return cells_from_vertex_values(vertices, tris, values), None


def _rank_one(p: Dict[str, Any]) -> Tuple[List[Cell], None]:
    d, w, axis = p["d"], p["window"], p["axis"]
    _require(axis in ("x", "y"), "axis must be x or y", axis=axis)
    _require(0.0 < w < 1.0, "window must lie in (0, 1)", window=w)
    _require(d > 0.0 and d * w < 1.0, "rank_one needs 0 < d * window < 1", d=d, window=w)
    vertices, tris = _core_mesh(w)
    values = vertices.copy()
    core = vertices[4:]
    if axis == "x":
        values[4:] = np.column_stack([d * core[:, 0], np.zeros(4)])
    else:
        values[4:] = np.column_stack([np.zeros(4), d * core[:, 1]])
    return cells_from_vertex_values(vertices, tris, values), None


def _fracture(p: Dict[str, Any]) -> Tuple[List[Cell], Callable[[np.ndarray], np.ndarray]]:
    d, a, reach, taper, profile = p["d"], p["a"], p["reach"], p["taper"], p["profile"]
    _require(profile in ("trapezoid", "constant"), "profile must be trapezoid or constant", profile=profile)
    _require(0.0 < a < 1.0, "crack half-length a must lie in (0, 1)", a=a)
    _require(0.0 < reach < 1.0, "reach must lie in (0, 1)", reach=reach)
    _require(0.0 < d < 2.0 * reach, "opening d must lie in (0, 2 * reach)", d=d, reach=reach)
    if profile == "trapezoid":
        _require(0.0 < taper < a, "taper must lie in (0, a)", taper=taper, a=a)

    def prof(y: np.ndarray) -> np.ndarray:
        if profile == "constant":
            return (np.abs(y) < a).astype(float)
        return np.clip((a - np.abs(y)) / taper, 0.0, 1.0)

    def formula(pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        x, y = pts[:, 0], pts[:, 1]
        m = np.maximum(0.0, np.minimum(1.0 - np.abs(x) / reach, prof(y)))
        return np.column_stack([x + 0.5 * d * np.sign(x) * m, y])

    right: List[List[Tuple[float, float]]] = [
        [(reach, -1.0), (1.0, -1.0), (1.0, 1.0), (reach, 1.0)],
        [(0.0, a), (reach, a), (reach, 1.0), (0.0, 1.0)],
        [(0.0, -1.0), (reach, -1.0), (reach, -a), (0.0, -a)],
    ]
    if profile == "trapezoid":
        inner = a - taper
        right += [
            [(0.0, inner), (reach, a), (0.0, a)],
            [(0.0, -a), (reach, -a), (0.0, -inner)],
            [(0.0, -inner), (reach, -a), (reach, a), (0.0, inner)],
        ]
    else:
        right.append([(0.0, -a), (reach, -a), (reach, a), (0.0, a)])
    polys = right + [[(-x, y) for x, y in poly] for poly in right]
    return [fit_cell(poly, formula) for poly in polys], formula


def _shear_blend(p: Dict[str, Any]) -> Tuple[List[Cell], Callable[[np.ndarray], np.ndarray]]:
    s, r = p["s"], p["radius"]
    _require(abs(s) < 1.0, "shear amplitude must satisfy |s| < 1", s=s)
    _require(0.0 < r < 1.0, "radius must lie in (0, 1)", radius=r)

    def formula(pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        x, y = pts[:, 0], pts[:, 1]
        return np.column_stack([x + s * np.maximum(0.0, r - np.abs(x) - np.abs(y)), y])

    polys = []
    for sx in (1.0, -1.0):
        for sy in (1.0, -1.0):
            polys.append([(0.0, 0.0), (sx * r, 0.0), (0.0, sy * r)])
            polys.append([(sx * r, 0.0), (sx, 0.0), (sx, sy), (0.0, sy), (0.0, sy * r)])
    return [fit_cell(poly, formula) for poly in polys], formula


_BUILDERS = {
    "identity": _identity,
    "affine": _affine,
    "rank_one": _rank_one,
    "fracture": _fracture,
    "shear_blend": _shear_blend,
}


def make_catalogue_map(kind: str, params: Optional[Mapping[str, Any]] = None) -> TestMap:
    """カタログ名と引数から TestMap を作る"""
    merged = _merge_params(kind, dict(params or {}))
    cells, formula = _BUILDERS[kind](merged)
    total_area = sum(c.area for c in cells)
    if abs(total_area - 4.0) > 1e-9:
        raise ValidationError("catalogue cells do not tile the square", {"area": total_area})
    jumps = find_jump_pieces(cells)
    # ∂Q(0,1) 上で恒等写像か
    boundary = np.concatenate([np.linspace(SQUARE[i], SQUARE[(i + 1) % 4], 9)[:-1] for i in range(4)])
    values = np.array([c.apply(boundary) for c in cells])
    owner = np.array([c.contains(boundary) for c in cells])
    for k in range(len(cells)):
        if np.abs(values[k][owner[k]] - boundary[owner[k]]).max(initial=0.0) > 1e-12:
            raise ValidationError("catalogue map is not the identity on the boundary", {"kind": kind})
    logger.debug(f"Catalogue map {kind}: {len(cells)} cells, {len(jumps)} jump pieces")
    return TestMap(kind, tuple(sorted(merged.items())), tuple(cells), tuple(jumps), formula)


def describe_catalogue() -> List[str]:
    """`catalogue list` 用の説明行"""
    lines = []
    for kind, specs in CATALOGUE.items():
        if not specs:
            lines.append(f"{kind}: (no parameters)")
            continue
        args = ", ".join(f"{s.name}={s.default} [{s.description}]" for s in specs)
        lines.append(f"{kind}: {args}")
    return lines
