"""
到着グリッドと単射な区分線形近似 φ

到着グリッドは間隔 κ 未満の縦線・横線の族で、H の像がどの線とも
頂点の外で横断的に交わり、到着グリッドの交点を通らないように
オフセットを乱数で選ぶ。φ は H の像と到着線の交点 (および Γ の交点) を
つないだもので、交点どうしは同じ到着セルの中の一般化線分で結ぶ。
"""

from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from tenacity import RetryCallState, RetryError, Retrying, retry_if_exception_type

from ..core.errors import StageFailure, ValidationError
from ..geom.primitives import Polyline, Segment, as_point, segment_intersection
from ..mapcat.measures import Rect
from ..utils.sampling import DEFAULT_BUDGET, Rejected, SamplingLedger, rejection_sample
from .paths import GeneralizedSegment, rect_sides
from .providers import HApprox, Provider, certify_h, crossing_params, family_certificate, rep_provider
from .representative import GeomRep

# 到着線の上にあるとみなす距離
ARRIVAL_TOL = 1e-12
# セルの辺に寄せる距離
SNAP_TOL = 1e-9
# ξ を半分にする回数の上限
XI_HALVINGS = 40
# κ を半分にする回数の上限 (min_kappa を指定しないとき)
KAPPA_HALVINGS = 12


class CrowdedArrivalCell(StageFailure):
    """隣り合う到着線の間に Γ の交点が 2 つ以上ある"""


def arrival_coords(kappa: float, theta: float) -> Tuple[float, ...]:
    """N = ⌊2/κ⌋ + 1 本の線 −1 + (k + θ)·2/N (間隔 2/N < κ)"""
    n = int(np.floor(2.0 / kappa)) + 1
    return tuple(-1.0 + (k + theta) * 2.0 / n for k in range(n))


@dataclass(frozen=True)
class ArrivalGrid:
    """縦線 x = w_k と横線 y = z_l"""
    w: Tuple[float, ...]
    z: Tuple[float, ...]
    kappa: float
    theta: Tuple[float, float] = (0.5, 0.5)
    preimages: Tuple[Tuple[int, float], ...] = ()
    attempts: int = 1

    @classmethod
    def regular(cls, kappa: float, theta: Tuple[float, float] = (0.5, 0.5)) -> "ArrivalGrid":
        if not 0.0 < kappa <= 2.0:
            raise ValidationError("kappa must lie in (0, 2]", {"kappa": kappa})
        for t in theta:
            if not 0.0 < t < 1.0:
                raise ValidationError("grid offset must lie in (0, 1)", {"theta": theta})
        return cls(arrival_coords(kappa, theta[0]), arrival_coords(kappa, theta[1]), kappa, theta)

    @property
    def bounds_x(self) -> np.ndarray:
        return np.array((-1.0,) + self.w + (1.0,))

    @property
    def bounds_y(self) -> np.ndarray:
        return np.array((-1.0,) + self.z + (1.0,))

    @property
    def max_gap(self) -> float:
        return float(max(np.diff(self.bounds_x).max(), np.diff(self.bounds_y).max()))

    def cell_of(self, point: Sequence[float]) -> Tuple[int, int]:
        return (
            int(np.searchsorted(self.w, float(point[0]))),
            int(np.searchsorted(self.z, float(point[1]))),
        )

    def cell_rect(self, cell: Tuple[int, int]) -> Rect:
        bx, by = self.bounds_x, self.bounds_y
        ix, iy = cell
        return Rect(float(bx[ix]), float(bx[ix + 1]), float(by[iy]), float(by[iy + 1]))

    def crosses(self) -> np.ndarray:
        xx, yy = np.meshgrid(self.w, self.z)
        return np.column_stack([xx.ravel(), yy.ravel()])


class LineCrossing(NamedTuple):
    """像の折れ線と到着線の交点"""
    t: float
    point: np.ndarray
    axis: int
    line: int


def line_crossings(params: np.ndarray, points: np.ndarray, grid: ArrivalGrid) -> List[LineCrossing]:
    """区分線形曲線 (params, points) が到着線を横切る点 (パラメータ順)"""
    out: List[LineCrossing] = []
    coords = (np.array(grid.w), np.array(grid.z))
    for k in range(len(points) - 1):
        v0, v1 = points[k], points[k + 1]
        t0, t1 = params[k], params[k + 1]
        for axis in (0, 1):
            lo, hi = sorted((v0[axis], v1[axis]))
            lines = coords[axis]
            for n in np.flatnonzero((lines > lo) & (lines < hi)):
                c = lines[n]
                frac = (c - v0[axis]) / (v1[axis] - v0[axis])
                p = v0 + frac * (v1 - v0)
                p[axis] = c
                out.append(LineCrossing(float(t0 + frac * (t1 - t0)), p, axis, int(n)))
    out.sort(key=lambda c: c.t)
    return out


def _line_distance(points: np.ndarray, grid: ArrivalGrid) -> float:
    dx = np.abs(points[:, 0][:, None] - np.array(grid.w)[None, :]).min(initial=np.inf)
    dy = np.abs(points[:, 1][:, None] - np.array(grid.z)[None, :]).min(initial=np.inf)
    return float(min(dx, dy))


def _check_good(
    H: HApprox,
    grid: ArrivalGrid,
    crossings: Dict[Tuple[int, int], Tuple[float, float]],
    avoid: Sequence[Tuple[int, float]],
) -> List[Tuple[int, float]]:
    """到着グリッドが H に対して良いかを調べ、P = γ⁻¹(𝒢) を返す (だめなら Rejected)"""
    preimages: List[Tuple[int, float]] = []
    for c in range(H.n_curves):
        d = _line_distance(H.points[c], grid)
        if d <= ARRIVAL_TOL:
            raise Rejected("image vertex on an arrival line", -d, curve=c)
        for hit in line_crossings(H.params[c], H.points[c], grid):
            other = grid.z if hit.axis == 0 else grid.w
            gap = float(np.abs(np.array(other) - hit.point[1 - hit.axis]).min(initial=np.inf))
            if gap <= ARRIVAL_TOL:
                raise Rejected("image passes through an arrival cross", -gap, curve=c)
            for curve, t in avoid:
                if curve == c and abs(t - hit.t) <= ARRIVAL_TOL:
                    raise Rejected("arrival crossing at an avoided parameter", curve=c, t=t)
            preimages.append((c, hit.t))
    for (i, j), (ti, _) in crossings.items():
        p = H.evaluate(i, ti)
        d = _line_distance(p[None, :], grid)
        if d <= ARRIVAL_TOL:
            raise Rejected("grid crossing image on an arrival line", -d, pair=(i, j))
    return preimages


def choose_arrival_grid(
    rep: GeomRep,
    kappa: float,
    avoid: Sequence[Tuple[int, float]] = (),
    rng: Optional[np.random.Generator] = None,
    budget: int = DEFAULT_BUDGET,
    images: Optional[HApprox] = None,
) -> ArrivalGrid:
    """オフセットを乱数で引いて、images (既定は h) に対して良い到着グリッドを選ぶ"""
    if not 0.0 < kappa <= 2.0:
        raise ValidationError("kappa must lie in (0, 2]", {"kappa": kappa})
    H = images if images is not None else rep_provider(rep, 0.0)
    crossings = crossing_params(rep)

    def draw(gen: np.random.Generator) -> ArrivalGrid:
        theta = (float(gen.uniform(0.0, 1.0)), float(gen.uniform(0.0, 1.0)))
        if min(theta) <= 0.0:
            raise Rejected("offset on the square boundary")
        grid = ArrivalGrid.regular(kappa, theta)
        preimages = _check_good(H, grid, crossings, avoid)
        return ArrivalGrid(grid.w, grid.z, kappa, theta, tuple(sorted(preimages)))

    generator = rng if rng is not None else np.random.default_rng(0)
    ledger: SamplingLedger[ArrivalGrid] = rejection_sample(draw, generator, budget, what="arrival grid")
    assert ledger.value is not None
    out = ledger.value
    logger.info(
        f"Arrival grid: {len(out.w)}x{len(out.z)} lines, kappa={kappa:.4g}, "
        f"{len(out.preimages)} crossings with the image, {ledger.attempts} draws"
    )
    return ArrivalGrid(out.w, out.z, out.kappa, out.theta, out.preimages, ledger.attempts)


@dataclass(frozen=True)
class PLCurve:
    """1 本の曲線上の φ: 節点 (曲線パラメータ) の間を定速でたどる折れ線の列"""
    index: int
    knots: np.ndarray
    pieces: Tuple[Polyline, ...]

    def evaluate(self, t: Union[float, np.ndarray]) -> np.ndarray:
        tt = np.clip(np.atleast_1d(np.asarray(t, dtype=float)), 0.0, 1.0)
        idx = np.clip(np.searchsorted(self.knots, tt, side="right") - 1, 0, len(self.pieces) - 1)
        out = np.empty((len(tt), 2))
        for k in np.unique(idx):
            sel = idx == k
            span = self.knots[k + 1] - self.knots[k]
            out[sel] = self.pieces[k].point_at((tt[sel] - self.knots[k]) / span)
        return out if np.ndim(t) else out[0]

    def polyline(self) -> Polyline:
        pts: List[np.ndarray] = []
        for piece in self.pieces:
            for p in piece.array():
                if not pts or np.any(pts[-1] != p):
                    pts.append(p)
        return Polyline.from_points(pts)


class LedgerEntry(NamedTuple):
    """φ の片の長さと上界 (1 + ξ)(h の変動 + 4κ)"""
    curve: int
    t0: float
    t1: float
    length: float
    bound: float


@dataclass(frozen=True)
class PLApprox:
    """グリッド上の単射な区分線形写像 φ"""
    rep: GeomRep
    arrival: ArrivalGrid
    H: HApprox
    curves: Tuple[PLCurve, ...]
    crossings: Dict[Tuple[int, int], Tuple[float, float]] = field(default_factory=dict, compare=False)
    sigma: float = 0.0
    xi: float = 0.0
    error: float = 0.0
    ledger: Tuple[LedgerEntry, ...] = ()

    def evaluate(self, curve: int, t: Union[float, np.ndarray]) -> np.ndarray:
        return self.curves[curve].evaluate(t)

    @property
    def error_bound(self) -> float:
        """4κ + 7σ"""
        return 4.0 * self.arrival.kappa + 7.0 * self.sigma

    def images(self) -> List[Polyline]:
        return [c.polyline() for c in self.curves]


class _Anchor(NamedTuple):
    t: float
    kind: str
    point: np.ndarray
    pair: Optional[Tuple[int, int]] = None


@dataclass
class _Chord:
    """到着線の交点 (または曲線の端) どうしを結ぶ 1 本の弦"""
    curve: int
    start: _Anchor
    end: _Anchor
    inside: Optional[_Anchor] = None
    path: Optional[np.ndarray] = None
    straight: bool = True


def _anchors(c: int, H: HApprox, grid: ArrivalGrid, crossings: Dict[Tuple[int, int], Tuple[float, float]]) -> List[_Anchor]:
    out = [
        _Anchor(0.0, "end", H.evaluate(c, 0.0)),
        _Anchor(1.0, "end", H.evaluate(c, 1.0)),
    ]
    out += [_Anchor(hit.t, "arrival", hit.point) for hit in line_crossings(H.params[c], H.points[c], grid)]
    for (i, j), (ti, tj) in crossings.items():
        if c in (i, j):
            t = ti if c == i else tj
            out.append(_Anchor(t, "crossing", H.evaluate(c, t), (i, j)))
    out.sort(key=lambda a: a.t)
    return out


def _chords(c: int, anchors: List[_Anchor]) -> List[_Chord]:
    chords: List[_Chord] = []
    start = anchors[0]
    inside: List[_Anchor] = []
    for a in anchors[1:]:
        if a.kind == "crossing":
            inside.append(a)
            continue
        if len(inside) > 1:
            raise CrowdedArrivalCell(
                "two grid crossings between consecutive arrival lines",
                {"curve": c, "pairs": [x.pair for x in inside]},
            )
        chords.append(_Chord(c, start, a, inside[0] if inside else None))
        start = a
        inside = []
    return chords


def _snap(p: np.ndarray, rect: Rect) -> np.ndarray:
    q = np.array(p, dtype=float)
    for axis, (lo, hi) in enumerate(((rect.x0, rect.x1), (rect.y0, rect.y1))):
        for v in (lo, hi):
            if abs(q[axis] - v) <= SNAP_TOL:
                q[axis] = v
    return q


def _chord_path(chord: _Chord, rect: Rect, xi: float) -> Tuple[np.ndarray, bool]:
    P, Q = _snap(chord.start.point, rect), _snap(chord.end.point, rect)
    if np.all(P == Q):
        raise StageFailure("chord end points coincide", {"curve": chord.curve, "t": chord.start.t})
    if rect_sides(rect, P) and rect_sides(rect, Q):
        seg = GeneralizedSegment.build(P, Q, rect, xi)
        return seg.polyline().array(), seg.straight
    return np.array([P, Q]), True


def _contacts(a: np.ndarray, b: np.ndarray) -> List[Tuple[str, np.ndarray]]:
    out: List[Tuple[str, np.ndarray]] = []
    for k in range(len(a) - 1):
        s = Segment(as_point(a[k]), as_point(a[k + 1]))
        for m in range(len(b) - 1):
            hit = segment_intersection(s, Segment(as_point(b[m]), as_point(b[m + 1])))
            out.extend((hit.kind, np.array([float(p[0]), float(p[1])])) for p in hit.points)
    return out


def _split_at(path: np.ndarray, point: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    line = Polyline.from_points(path)
    t = line.parameter_of(point, tol=1e-9)
    head = line.subpath(0.0, t).array() if t > 0.0 else point[None, :]
    tail = line.subpath(t, 1.0).array() if t < 1.0 else point[None, :]
    head[-1] = point
    tail[0] = point
    return head, tail


def _place_cell(
    cell: Tuple[int, int],
    chords: List[_Chord],
    grid: ArrivalGrid,
    xi: float,
) -> Tuple[float, Dict[Tuple[int, int], np.ndarray]]:
    """セルの中の弦を作り、互いに交わらなくなるまで ξ を半分にする"""
    rect = grid.cell_rect(cell)
    tol = SNAP_TOL * grid.kappa
    x = xi
    witness: Dict[str, object] = {}
    for _ in range(XI_HALVINGS):
        for ch in chords:
            ch.path, ch.straight = _chord_path(ch, rect, x)
        images: Dict[Tuple[int, int], np.ndarray] = {}
        ok = True
        for n, a in enumerate(chords):
            for b in chords[n + 1:]:
                shared = a.inside is not None and b.inside is not None and a.inside.pair == b.inside.pair
                hits = _contacts(a.path, b.path)
                if shared:
                    points = [p for kind, p in hits if kind == "point"]
                    distinct = [p for k, p in enumerate(points) if all(np.hypot(*(p - q)) > tol for q in points[:k])]
                    if len(distinct) != 1 or any(kind != "point" for kind, _ in hits):
                        ok = False
                        witness = {"cell": cell, "pair": a.inside.pair, "contacts": len(distinct)}
                        break
                    images[a.inside.pair] = distinct[0]  # type: ignore[union-attr]
                    continue
                joint = [p for p in (a.start.point, a.end.point) if any(np.all(p == q) for q in (b.start.point, b.end.point))]
                for kind, p in hits:
                    if kind == "point" and any(np.hypot(*(p - q)) <= tol for q in joint):
                        continue
                    ok = False
                    witness = {"cell": cell, "curves": (a.curve, b.curve), "point": (float(p[0]), float(p[1]))}
                    break
                if not ok:
                    break
            if not ok:
                break
        if ok:
            return x, images
        if all(ch.straight for ch in chords):
            break
        x *= 0.5
    raise StageFailure("chords in an arrival cell cannot be made disjoint", {"xi": x, **witness})


def _h_length(rep: GeomRep, c: int, t0: float, t1: float) -> float:
    params, points = rep.curves[c].image()
    cum = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(points, axis=0).T))])
    return float(np.interp(t1, params, cum) - np.interp(t0, params, cum))


def build_injective_pl_approx(
    rep: GeomRep,
    arrival: ArrivalGrid,
    sigma: float,
    xi: float,
    provider: Union[Provider, HApprox, None] = None,
    samples: int = 500,
) -> PLApprox:
    """H の像と到着線の交点を一般化線分でつないだ単射な区分線形写像 φ を作って確かめる"""
    if not 0.0 < xi < 1.0:
        raise ValidationError("xi must lie in (0, 1)", {"xi": xi})
    if sigma <= 0.0:
        raise ValidationError("sigma must be positive", {"sigma": sigma})
    if isinstance(provider, HApprox):
        H = provider
    else:
        H = (provider or rep_provider)(rep, sigma)
    closeness = certify_h(rep, H, sigma)
    crossings = crossing_params(rep)
    try:
        preimages = _check_good(H, arrival, crossings, ())
    except Rejected as e:
        raise ValidationError(f"arrival grid is not good for the approximation: {e.reason}", e.witness) from e

    per_curve: List[List[_Chord]] = []
    cells: Dict[Tuple[int, int], List[_Chord]] = {}
    for c in range(H.n_curves):
        chords = _chords(c, _anchors(c, H, arrival, crossings))
        for ch in chords:
            stop = ch.inside.t if ch.inside is not None else ch.end.t
            cell = arrival.cell_of(H.evaluate(c, 0.5 * (ch.start.t + stop)))
            cells.setdefault(cell, []).append(ch)
        per_curve.append(chords)

    xi_used = xi
    crossing_images: Dict[Tuple[int, int], np.ndarray] = {}
    cell_xi: Dict[int, float] = {}
    for cell, chords in cells.items():
        x, images = _place_cell(cell, chords, arrival, xi)
        xi_used = min(xi_used, x)
        crossing_images.update(images)
        for ch in chords:
            cell_xi[id(ch)] = x
    missing = [pair for pair in crossings if pair not in crossing_images]
    if missing:
        raise StageFailure("grid crossings fall between arrival cells", {"pairs": missing})

    curves: List[PLCurve] = []
    ledger: List[LedgerEntry] = []
    kappa = arrival.kappa
    for c, chords in enumerate(per_curve):
        knots = [0.0]
        pieces: List[Polyline] = []
        for ch in chords:
            assert ch.path is not None
            spans: List[Tuple[float, float, np.ndarray]] = []
            if ch.inside is not None:
                head, tail = _split_at(ch.path, crossing_images[ch.inside.pair])
                spans += [(ch.start.t, ch.inside.t, head), (ch.inside.t, ch.end.t, tail)]
            else:
                spans.append((ch.start.t, ch.end.t, ch.path))
            for t0, t1, pts in spans:
                piece = Polyline.from_points(pts)
                pieces.append(piece)
                knots.append(t1)
                bound = (1.0 + cell_xi[id(ch)]) * (_h_length(rep, c, t0, t1) + 4.0 * kappa)
                ledger.append(LedgerEntry(c, t0, t1, piece.length, bound))
        curves.append(PLCurve(c, np.array(knots), tuple(pieces)))

    allowed = {pair: p for pair, p in crossing_images.items()}
    cert = family_certificate([pc.polyline() for pc in curves], allowed, tol=SNAP_TOL * kappa)
    if not cert:
        raise StageFailure(f"approximation is not injective: {cert.reason}", cert.witness)
    over = [e for e in ledger if e.length > e.bound]
    if over:
        e = over[0]
        raise StageFailure("variation ledger exceeds its bound", {"curve": e.curve, "length": e.length, "bound": e.bound})

    t = np.linspace(0.0, 1.0, samples)
    error = max(float(np.hypot(*(pc.evaluate(t) - rep.curves[c].evaluate(t)).T).max()) for c, pc in enumerate(curves))
    out = PLApprox(
        rep=rep.with_preimages(preimages),
        arrival=arrival,
        H=H,
        curves=tuple(curves),
        crossings=crossings,
        sigma=sigma,
        xi=xi_used,
        error=error,
        ledger=tuple(ledger),
    )
    if error > out.error_bound:
        raise StageFailure("approximation is too far from h", {"error": error, "bound": out.error_bound})
    logger.info(
        f"Injective PL approximation with {H.name}: {len(ledger)} pieces, xi={xi_used:.3g}, "
        f"error {error:.3e} (bound {out.error_bound:.3e}, |H - h| = {closeness:.3e})"
    )
    return out


def refine_arrival(
    rep: GeomRep,
    kappa: float,
    sigma: float,
    xi: float,
    provider: Union[Provider, HApprox, None] = None,
    rng: Optional[np.random.Generator] = None,
    min_kappa: Optional[float] = None,
    budget: int = DEFAULT_BUDGET,
) -> PLApprox:
    """到着グリッドを選んで φ を作る。隣り合う到着線の間に Γ の交点が
    2 つ入ったら κ を半分にして選び直し、min_kappa を下回ったら諦める
    """
    if isinstance(provider, HApprox):
        H = provider
    else:
        H = (provider or rep_provider)(rep, sigma)
    floor = kappa * 2.0 ** -KAPPA_HALVINGS if min_kappa is None else min_kappa
    if not 0.0 < floor <= kappa:
        raise ValidationError("min_kappa must lie in (0, kappa]", {"kappa": kappa, "min_kappa": floor})
    generator = rng if rng is not None else np.random.default_rng(0)
    current = [kappa]

    def attempt() -> PLApprox:
        arrival = choose_arrival_grid(rep, current[0], rng=generator, budget=budget, images=H)
        return build_injective_pl_approx(rep, arrival, sigma, xi, H)

    def below_floor(state: RetryCallState) -> bool:
        return 0.5 * current[0] < floor

    def halve(state: RetryCallState) -> None:
        error = state.outcome.exception() if state.outcome is not None else None
        pairs = error.witness.get("pairs") if isinstance(error, CrowdedArrivalCell) else None
        logger.warning(f"Crowded arrival cell at kappa={current[0]:.4g} (pairs {pairs}); halving kappa")
        current[0] *= 0.5

    retrying = Retrying(
        stop=below_floor,
        retry=retry_if_exception_type(CrowdedArrivalCell),
        before_sleep=halve,
        reraise=False,
    )
    try:
        return retrying(attempt)
    except RetryError as e:
        last = e.last_attempt.exception()
        witness = dict(last.witness) if isinstance(last, CrowdedArrivalCell) else {}
        raise StageFailure(
            "arrival grid stays crowded at the smallest kappa",
            {**witness, "kappa": current[0], "min_kappa": floor},
        ) from last
