"""
グリッドの許容性判定

5 条件:
  (1) 各曲線への制限が 1 次元 BV
  (2) 折れ線の頂点で f|Γ が連続
  (3) 交点で f|Γ が連続
  (4) 頂点での密度 r⁻¹|Df|(Q(p, r)) → 0
  (5) 交点での密度 r⁻¹|Df|(Q(p, r)) → 0
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from ..core.errors import ValidationError
from ..geom.primitives import Polyline
from ..mapcat.catalogue import TestMap
from ..mapcat.measures import density_ratios
from ..mapcat.onedbv import restrict_to_polyline
from ..utils.sampling import DEFAULT_BUDGET, Rejected, rejection_sample
from .grids import NonStraightGrid, StraightGrid, validate_nonstraight_grid

TAU_CONT = 1e-6
TAU_DENSITY = 1e-3
DEFAULT_RADII: Tuple[float, ...] = tuple(2.0 ** -k for k in range(3, 17))

# 一方向極限を取るときのずらし幅
_PROBE = 1e-9

Grid = Union[StraightGrid, NonStraightGrid]


@dataclass(frozen=True)
class DensityEvidence:
    """特異点候補での密度比の列"""
    point: Tuple[float, float]
    kind: str
    where: Tuple[int, ...]
    radii: Tuple[float, ...]
    ratios: Tuple[float, ...]
    passed: bool


@dataclass(frozen=True)
class AdmissibilityReport:
    """5 条件の合否と数値的な根拠"""
    conditions: Dict[int, bool]
    evidence: Tuple[DensityEvidence, ...] = ()
    failures: Tuple[Tuple[int, str, Dict[str, Any]], ...] = ()
    transversality: Tuple[float, ...] = field(default=())

    @property
    def ok(self) -> bool:
        return all(self.conditions.values())

    def __bool__(self) -> bool:
        return self.ok

    @property
    def failed_conditions(self) -> List[int]:
        return sorted(k for k, v in self.conditions.items() if not v)

    @property
    def special_points(self) -> List[Tuple[float, float]]:
        return [e.point for e in self.evidence]

    @property
    def good(self) -> bool:
        """許容的で、かつジャンプ集合との交わりがすべて横断的か"""
        return self.ok and all(t > 0.0 for t in self.transversality)


def limits_along(f: TestMap, points: np.ndarray, directions: np.ndarray) -> np.ndarray:
    """各 p_k + h·d_k (h ↓ 0) からの f の極限 (まとめて評価)"""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    owner = f.cell_index(pts + _PROBE * np.atleast_2d(directions))
    out = pts.copy()
    for k in np.unique(owner[owner >= 0]):
        sel = owner == k
        out[sel] = f.cells[k].apply(pts[sel])
    return out


def incident_directions(curve: Polyline, t: float) -> List[np.ndarray]:
    """曲線上のパラメータ t の点から出る (1 本か 2 本の) 向き"""
    pts = curve.array()
    cum = curve.cumulative_lengths()
    s = t * cum[-1]
    out: List[np.ndarray] = []
    for i in range(len(pts) - 1):
        a, b = cum[i], cum[i + 1]
        d = (pts[i + 1] - pts[i]) / (b - a)
        if a - 1e-12 <= s < b - 1e-12:
            out.append(d)
        if a + 1e-12 < s <= b + 1e-12:
            out.append(-d)
    return out


def _spread(values: np.ndarray) -> np.ndarray:
    """点群ごと (最後から 2 番目の軸) の直径"""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.shape[1] < 2:
        return np.zeros(len(arr))
    diff = arr[:, :, None, :] - arr[:, None, :, :]
    return np.sqrt((diff ** 2).sum(axis=3)).max(axis=(1, 2))


def density_vanishes(ratios: Sequence[float], tau_density: float) -> bool:
    tail = list(ratios[-3:])
    monotone = all(b <= a * (1.0 + 1e-9) + 1e-15 for a, b in zip(tail, tail[1:]))
    return monotone and ratios[-1] < tau_density


def _validated(g: NonStraightGrid) -> Dict[Tuple[int, int], Any]:
    validation = validate_nonstraight_grid(g)
    if not validation.ok:
        reason, witness = validation.failures[0]
        raise ValidationError(f"not a non-straight grid: {reason}", witness)
    return dict(validation.crossings)


_AXES = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])


def check_admissible(
    g: Grid,
    f: TestMap,
    radii: Sequence[float] = DEFAULT_RADII,
    tau_cont: float = TAU_CONT,
    tau_density: float = TAU_DENSITY,
) -> AdmissibilityReport:
    """グリッドが f に対して許容的かを 5 条件ごとに判定する

    直線グリッドでは交点が格子状に並ぶので、交点での連続性と密度を
    まとめて評価する (交点の全探索はしない)。
    """
    rs = tuple(sorted((float(r) for r in radii), reverse=True))
    if len(rs) < 3 or rs[-1] <= 0.0:
        raise ValidationError("need at least three positive radii")
    straight = isinstance(g, StraightGrid)
    grid = g.to_nonstraight() if isinstance(g, StraightGrid) else g
    crossings = {} if straight else _validated(grid)
    conditions = {k: True for k in range(1, 6)}
    failures: List[Tuple[int, str, Dict[str, Any]]] = []
    transversality: List[float] = []

    def fail(cond: int, message: str, **witness: Any) -> None:
        conditions[cond] = False
        failures.append((cond, message, witness))

    # 密度を測る点: (点, 種類, 位置, 条件番号)
    special: List[Tuple[np.ndarray, str, Tuple[int, ...], int]] = []
    # 連続性を測る一方向極限: (点, 向き, グループ)
    approaches: List[Tuple[np.ndarray, np.ndarray, int]] = []
    groups: List[Tuple[int, str, Dict[str, Any]]] = []

    # (1) 制限の BV 性、(2) 頂点での連続性、(4) 頂点と重なり区間での密度
    for i, curve in enumerate(grid.curves):
        pts = curve.array()
        try:
            restriction = restrict_to_polyline(f, curve)
            if not np.isfinite(restriction.total_variation):
                fail(1, "restriction has infinite variation", curve=i)
        except ValidationError as e:
            fail(1, e.message, curve=i, **e.witness)
            fail(2, "restriction undefined on the jump set", curve=i)
        for k, v in enumerate(pts):
            group = len(groups)
            groups.append((2, "discontinuous at a polyline vertex", {"curve": i, "vertex": k}))
            approaches += [(v, d, group) for d in incident_directions(curve, curve.parameter_of(v))]
            special.append((v, "vertex", (i, k), 4))
        for seg in range(len(pts) - 1):
            a, b = pts[seg], pts[seg + 1]
            for t0, t1, _piece in f.jump_overlaps(a, b):
                special.append((a + 0.5 * (t0 + t1) * (b - a), "jump overlap", (i, seg), 4))
            u = (b - a) / np.hypot(*(b - a))
            for _t, piece in f.jump_crossings(a, b):
                transversality.append(abs(float(piece.normal @ u)))

    # (3) 交点での連続性、(5) 交点での密度
    for (i, j), x in sorted(crossings.items()):
        p = np.array([float(x[0]), float(x[1])])
        group = len(groups)
        groups.append((3, "discontinuous at a crossing", {"pair": (i, j)}))
        for c in (i, j):
            curve = grid.curves[c]
            approaches += [(p, d, group) for d in incident_directions(curve, curve.parameter_of(p))]
        special.append((p, "crossing", (i, j), 5))

    if approaches:
        values = limits_along(f, np.array([q[0] for q in approaches]), np.array([q[1] for q in approaches]))
        owner = np.array([q[2] for q in approaches])
        for group, (cond, message, witness) in enumerate(groups):
            gap = float(_spread(values[owner == group])[0])
            if gap > tau_cont:
                fail(cond, message, gap=gap, **witness)

    evidence: List[DensityEvidence] = []
    if straight:
        evidence += _straight_crossings(g, f, rs, tau_cont, tau_density, fail)  # type: ignore[arg-type]
    if special:
        centers = np.array([s[0] for s in special])
        table = np.column_stack([density_ratios(f, centers, r) for r in rs])
        for (p, kind, where, cond), row in zip(special, table):
            ratios = tuple(float(v) for v in row)
            passed = density_vanishes(ratios, tau_density)
            evidence.append(DensityEvidence((float(p[0]), float(p[1])), kind, where, rs, ratios, passed))
            if not passed:
                fail(cond, f"density does not vanish at {kind}", point=(float(p[0]), float(p[1])), ratio=ratios[-1])

    report = AdmissibilityReport(conditions, tuple(evidence), tuple(failures), tuple(transversality))
    if report.ok:
        logger.debug(f"Grid admissible for {f.kind}: {len(evidence)} special points checked")
    else:
        logger.debug(f"Grid not admissible for {f.kind}: conditions {report.failed_conditions} fail")
    return report


def _straight_crossings(
    g: StraightGrid,
    f: TestMap,
    rs: Tuple[float, ...],
    tau_cont: float,
    tau_density: float,
    fail: Any,
) -> List[DensityEvidence]:
    nx = len(g.x_coords)
    xs, ys = np.meshgrid(np.array(g.x_coords), np.array(g.y_coords), indexing="ij")
    pts = np.column_stack([xs.ravel(), ys.ravel()])
    if len(pts) == 0:
        return []
    keys = [(i, nx + j) for i in range(nx) for j in range(len(g.y_coords))]
    approaches = np.repeat(pts, len(_AXES), axis=0)
    values = limits_along(f, approaches, np.tile(_AXES, (len(pts), 1))).reshape(len(pts), len(_AXES), 2)
    gaps = _spread(values)
    for n in np.flatnonzero(gaps > tau_cont):
        fail(3, "discontinuous at a crossing", gap=float(gaps[n]), pair=keys[n])
    table = np.column_stack([density_ratios(f, pts, r) for r in rs])
    out: List[DensityEvidence] = []
    for n, row in enumerate(table):
        ratios = tuple(float(v) for v in row)
        passed = density_vanishes(ratios, tau_density)
        point = (float(pts[n, 0]), float(pts[n, 1]))
        out.append(DensityEvidence(point, "crossing", keys[n], rs, ratios, passed))
        if not passed:
            fail(5, "density does not vanish at crossing", point=point, ratio=ratios[-1])
    return out


def sample_admissible_straight_grid(
    f: TestMap,
    nx: int,
    ny: int,
    rng: np.random.Generator,
    budget: int = DEFAULT_BUDGET,
    margin: float = 0.05,
    radii: Sequence[float] = DEFAULT_RADII,
    tau_cont: float = TAU_CONT,
    tau_density: float = TAU_DENSITY,
) -> StraightGrid:
    """一様に引いた座標から許容的な直線グリッドを棄却サンプリングで選ぶ"""
    lo, hi = -1.0 + margin, 1.0 - margin

    def draw(gen: np.random.Generator) -> StraightGrid:
        grid = StraightGrid(tuple(gen.uniform(lo, hi, nx)), tuple(gen.uniform(lo, hi, ny)))
        report = check_admissible(grid, f, radii, tau_cont, tau_density)
        if not report.ok:
            raise Rejected("grid not admissible", float(len(report.failures)), conditions=report.failed_conditions)
        return grid

    ledger = rejection_sample(draw, rng, budget, what="admissible straight grid")
    assert ledger.value is not None
    return ledger.value
