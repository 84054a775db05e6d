"""
グリッド上の幾何的代表 h

曲線を端点・折れ線の頂点・交点で弧に区切り、弧ごとに f∘γ を
τ(s) = s + l(s) で再パラメータ化する。1 次元ジャンプでは h が
線分 [Y(t) Z(t)] を一定速度でたどるので、h は各弧で連続になる。
弧のパラメータ u ∈ [0,1] の点 γ(u) には h̃((1 + L(1))·u) が対応する。
"""

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from ..core.errors import OutputError, StageFailure, ValidationError
from ..geom.primitives import Polyline
from ..grid.admissibility import DEFAULT_RADII, TAU_CONT, TAU_DENSITY, AdmissibilityReport, check_admissible
from ..grid.grids import NonStraightGrid, StraightGrid
from ..mapcat.catalogue import TestMap
from ..mapcat.onedbv import Jump1D, OneDBV, restrict_to_polyline

PathLike = Union[str, Path]

TAU_REP = 2.0 ** -12

# 同じ弧パラメータとみなす幅
_PARAM_TOL = 1e-12
# 像の折れ線で同じ折れ点とみなす曲線パラメータの幅
IMAGE_PARAM_TOL = 1e-10


def thin_breaks(params: np.ndarray, tol: float = IMAGE_PARAM_TOL, pinned: Optional[np.ndarray] = None) -> np.ndarray:
    """前に残した点から tol 以内のパラメータの点を落とすマスク

    pinned の点 (弧の区切りや両端) は残し、代わりに近くの印のない点を落とす。
    """
    t = np.asarray(params, dtype=float)
    pin = np.zeros(len(t), dtype=bool) if pinned is None else np.array(pinned, dtype=bool)
    if len(t):
        pin[0] = pin[-1] = True
    keep = np.zeros(len(t), dtype=bool)
    last = -1
    for i in range(len(t)):
        if last < 0 or t[i] - t[last] > tol:
            keep[i] = True
            last = i
        elif pin[i] and not pin[last]:
            keep[last] = False
            keep[i] = True
            last = i
        elif pin[i]:
            keep[i] = True
            last = i
    return keep


@dataclass(frozen=True)
class ArcRep:
    """1 本の弧の代表曲線 h̃ (τ の区分線形関数)"""
    curve: int
    t0: float
    t1: float
    domain: Polyline
    taus: np.ndarray
    values: np.ndarray
    jumps: Tuple[Jump1D, ...] = ()

    @property
    def variation(self) -> float:
        """L(1)"""
        return float(self.taus[-1]) - 1.0

    @property
    def period(self) -> float:
        """1 + L(1)"""
        return float(self.taus[-1])

    @property
    def params(self) -> np.ndarray:
        """折れ点の弧パラメータ u = τ / (1 + L(1))"""
        return self.taus / self.period

    def at(self, u: Union[float, np.ndarray]) -> np.ndarray:
        """h(γ(u))"""
        tau = np.clip(np.atleast_1d(np.asarray(u, dtype=float)), 0.0, 1.0) * self.period
        out = np.column_stack([np.interp(tau, self.taus, self.values[:, k]) for k in range(2)])
        return out if np.ndim(u) else out[0]

    def domain_point(self, u: Union[float, np.ndarray]) -> np.ndarray:
        return self.domain.point_at(u)

    def image(self) -> np.ndarray:
        """h の像の折れ線 (パラメータの近すぎる折れ点は 1 つにまとめる)"""
        return self.values[thin_breaks(self.params)]

    @property
    def image_length(self) -> float:
        return float(np.hypot(*np.diff(self.values, axis=0).T).sum())


def arc_from_restriction(restriction: OneDBV, curve: int = 0, t0: float = 0.0, t1: float = 1.0) -> ArcRep:
    """1 本の弧への制限から h̃ の折れ点 (τ, 値) を作る"""
    s = restriction.knots / restriction.length
    lower, upper = restriction.knot_variations()
    taus: List[float] = []
    values: List[np.ndarray] = []
    for k in range(len(s)):
        taus.append(float(s[k] + lower[k]))
        values.append(restriction.left[k])
        if upper[k] > lower[k]:
            taus.append(float(s[k] + upper[k]))
            values.append(restriction.right[k])
    return ArcRep(
        curve=curve,
        t0=t0,
        t1=t1,
        domain=restriction.polyline,
        taus=np.array(taus),
        values=np.array(values),
        jumps=restriction.jumps,
    )


@dataclass(frozen=True)
class CurveRep:
    """1 本の曲線上の h (弧ごとの代表の並び)"""
    index: int
    polyline: Polyline
    cuts: np.ndarray
    arcs: Tuple[ArcRep, ...]

    def locate(self, t: Union[float, np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
        """曲線パラメータ t → (弧番号, 弧パラメータ u)"""
        t_arr = np.clip(np.atleast_1d(np.asarray(t, dtype=float)), 0.0, 1.0)
        idx = np.clip(np.searchsorted(self.cuts, t_arr, side="right") - 1, 0, len(self.arcs) - 1)
        span = self.cuts[idx + 1] - self.cuts[idx]
        return idx, np.clip((t_arr - self.cuts[idx]) / span, 0.0, 1.0)

    def evaluate(self, t: Union[float, np.ndarray]) -> np.ndarray:
        idx, u = self.locate(t)
        out = np.empty((len(idx), 2))
        for k in np.unique(idx):
            sel = idx == k
            out[sel] = self.arcs[k].at(u[sel])
        return out if np.ndim(t) else out[0]

    def image(self) -> Tuple[np.ndarray, np.ndarray]:
        """h の像の折れ線と各頂点の曲線パラメータ"""
        params: List[np.ndarray] = []
        points: List[np.ndarray] = []
        pins: List[np.ndarray] = []
        for k, arc in enumerate(self.arcs):
            u = arc.params
            t = self.cuts[k] + u * (self.cuts[k + 1] - self.cuts[k])
            t[0], t[-1] = self.cuts[k], self.cuts[k + 1]
            start = 1 if k > 0 else 0
            params.append(t[start:])
            points.append(arc.values[start:])
            pin = np.zeros(len(t), dtype=bool)
            pin[0] = pin[-1] = True
            pins.append(pin[start:])
        t_all = np.concatenate(params)
        p_all = np.vstack(points)
        keep = thin_breaks(t_all, pinned=np.concatenate(pins))
        return t_all[keep], p_all[keep]

    @property
    def variation(self) -> float:
        return float(sum(arc.variation for arc in self.arcs))


def split_curve(restriction: OneDBV, cuts: Sequence[float], index: int = 0) -> CurveRep:
    """曲線全体への制限を、与えた曲線パラメータで弧に分けて代表を作る"""
    params = np.unique(np.clip(np.concatenate([[0.0, 1.0], np.asarray(cuts, dtype=float)]), 0.0, 1.0))
    merged = [params[0]]
    for t in params[1:]:
        if t - merged[-1] > _PARAM_TOL:
            merged.append(t)
    merged[-1] = 1.0
    arcs = tuple(
        arc_from_restriction(restriction.slice(a, b), index, float(a), float(b))
        for a, b in zip(merged[:-1], merged[1:])
    )
    return CurveRep(index, restriction.polyline, np.array(merged), arcs)


@dataclass(frozen=True)
class GeomRep:
    """グリッド全体の代表と、弧ごとの変動の台帳"""
    f: TestMap
    grid: NonStraightGrid
    curves: Tuple[CurveRep, ...]
    admissibility: Optional[AdmissibilityReport] = field(default=None, compare=False)
    preimages: Tuple[Tuple[int, float], ...] = ()

    @property
    def arcs(self) -> List[ArcRep]:
        return [arc for c in self.curves for arc in c.arcs]

    def evaluate(self, curve: int, t: Union[float, np.ndarray]) -> np.ndarray:
        return self.curves[curve].evaluate(t)

    def ledger(self) -> Dict[int, float]:
        """弧番号 → |D_τ f⌉arc|"""
        return {a: arc.variation for a, arc in enumerate(self.arcs)}

    def jump_table(self) -> List[Tuple[int, float, np.ndarray, np.ndarray]]:
        return [(a, j.t, j.left, j.right) for a, arc in enumerate(self.arcs) for j in arc.jumps]

    def with_preimages(self, preimages: Iterable[Tuple[int, float]]) -> "GeomRep":
        """到着グリッドとの交点の (曲線, パラメータ) を記録した写し"""
        return replace(self, preimages=tuple(sorted(preimages)))

    def dump_lines(self) -> List[str]:
        """ARC a curve t0 t1 n のあとに n 行の 'u x y'、最後にジャンプ表"""
        lines: List[str] = []
        for a, arc in enumerate(self.arcs):
            lines.append(f"ARC {a} {arc.curve} {arc.t0!r} {arc.t1!r} {len(arc.taus)}")
            for u, v in zip(arc.params, arc.values):
                lines.append(f"{u!r} {v[0]!r} {v[1]!r}")
        for a, t, y, z in self.jump_table():
            lines.append(f"JUMP {a} {t!r} {y[0]!r} {y[1]!r} {z[0]!r} {z[1]!r}")
        return lines


def curve_cuts(grid: NonStraightGrid) -> List[List[float]]:
    """各曲線の弧の区切り (内部頂点と交点のパラメータ)"""
    cuts: List[List[float]] = []
    for curve in grid.curves:
        cum = curve.cumulative_lengths()
        cuts.append(list(cum[1:-1] / cum[-1]))
    for (i, j), x in grid.crossings.items():
        cuts[i].append(grid.curves[i].parameter_of(x))
        cuts[j].append(grid.curves[j].parameter_of(x))
    return cuts


def _verify_arc(arc: ArcRep, restriction: OneDBV, tau_rep: float, samples: int = 16) -> None:
    if abs(arc.image_length - arc.variation) > tau_rep:
        raise StageFailure(
            "representative length differs from the arc variation",
            {"curve": arc.curve, "length": arc.image_length, "variation": arc.variation},
        )
    s = np.linspace(0.0, 1.0, samples + 2)[1:-1]
    tau = s + np.atleast_1d(restriction.variation(s, inclusive=False))
    gap = float(np.hypot(*(arc.at(tau / arc.period) - restriction.value(s, side="left")).T).max())
    if gap > tau_rep:
        raise StageFailure("representative does not follow f on the arc", {"curve": arc.curve, "gap": gap})


def build_geom_rep(
    f: TestMap,
    g: Union[StraightGrid, NonStraightGrid],
    tau_rep: float = TAU_REP,
    radii: Sequence[float] = DEFAULT_RADII,
    tau_cont: float = TAU_CONT,
    tau_density: float = TAU_DENSITY,
) -> GeomRep:
    """許容的なグリッド上で h を作る"""
    report = check_admissible(g, f, radii, tau_cont, tau_density)
    if not report.ok:
        cond, message, witness = report.failures[0]
        raise ValidationError(
            f"grid is not admissible for {f.kind}: {message}",
            {"conditions": report.failed_conditions, **witness},
        )
    grid = g.to_nonstraight() if isinstance(g, StraightGrid) else NonStraightGrid.from_curves(g.curves)
    curves: List[CurveRep] = []
    for i, (curve, cuts) in enumerate(zip(grid.curves, curve_cuts(grid))):
        restriction = restrict_to_polyline(f, curve)
        rep = split_curve(restriction, cuts, i)
        for arc in rep.arcs:
            _verify_arc(arc, restriction.slice(arc.t0, arc.t1), tau_rep)
        curves.append(rep)
    out = GeomRep(f, grid, tuple(curves), report)
    logger.info(
        f"Geometric representative built: {len(out.arcs)} arcs on {grid.n_curves} curves, "
        f"{len(out.jump_table())} jumps filled"
    )
    return out


def write_geom_rep(rep: GeomRep, path: PathLike) -> Path:
    target = Path(path)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text("\n".join(rep.dump_lines()) + "\n", encoding="utf-8")
    except OSError as e:
        raise OutputError(f"cannot write representative dump: {e}", {"path": str(target)}) from e
    return target
