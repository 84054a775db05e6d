"""
グリッド上の単射な一様近似 H

H は h に一様に近い単射な区分線形写像で、写像の種類ごとに作り方を選ぶ。
h 自身がすでに単射な写像では H = h、潰れる方向を持つ写像では
恒等写像と少し混ぜる。どの場合も単射性と σ-近さを確かめてから使う。
"""

from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from ..core.errors import Certificate, ValidationError
from ..geom.primitives import (
    Polyline,
    Segment,
    is_injective_polyline,
    segment_boxes,
    segment_intersection,
    sweep_candidate_pairs,
)
from .representative import GeomRep, thin_breaks

# 交点の像とみなす距離
CONTACT_TOL = 1e-9


@dataclass(frozen=True)
class HApprox:
    """曲線ごとの折れ点のパラメータと値で表した区分線形写像"""
    name: str
    params: Tuple[np.ndarray, ...]
    points: Tuple[np.ndarray, ...]
    eta: float = 0.0

    def evaluate(self, curve: int, t: np.ndarray) -> np.ndarray:
        p, v = self.params[curve], self.points[curve]
        tt = np.asarray(t, dtype=float)
        out = np.column_stack([np.interp(np.atleast_1d(tt), p, v[:, k]) for k in range(2)])
        return out if np.ndim(tt) else out[0]

    def polyline(self, curve: int) -> Polyline:
        return Polyline.from_points(_dedupe(self.points[curve]))

    @property
    def n_curves(self) -> int:
        return len(self.params)


Provider = Callable[[GeomRep, float], HApprox]


def _dedupe(points: np.ndarray) -> np.ndarray:
    keep = np.ones(len(points), dtype=bool)
    keep[1:] = np.any(np.diff(points, axis=0) != 0.0, axis=1)
    return points[keep]


def crossing_params(rep: GeomRep) -> Dict[Tuple[int, int], Tuple[float, float]]:
    """交点 (i, j) → (γ_i 上のパラメータ, γ_j 上のパラメータ)"""
    grid = rep.grid
    return {
        (i, j): (grid.curves[i].parameter_of(x), grid.curves[j].parameter_of(x))
        for (i, j), x in grid.crossings.items()
    }


def family_certificate(
    polylines: Sequence[Polyline],
    allowed: Mapping[Tuple[int, int], np.ndarray],
    tol: float = CONTACT_TOL,
) -> Certificate:
    """曲線族の像が単射か: 各曲線が単射で、異なる曲線は指定の交点の像でだけ交わる"""
    for n, p in enumerate(polylines):
        ok, pair = is_injective_polyline(p)
        if not ok:
            return Certificate.failed("curve image is not injective", curve=n, segments=pair)
    owner: List[int] = []
    segments: List[Segment] = []
    for n, p in enumerate(polylines):
        for s in p.segments:
            owner.append(n)
            segments.append(s)
    if not segments:
        return Certificate.passed()
    starts = np.array([[float(s.a[0]), float(s.a[1])] for s in segments])
    ends = np.array([[float(s.b[0]), float(s.b[1])] for s in segments])
    for i, j in sweep_candidate_pairs(segment_boxes(starts, ends)):
        a, b = sorted((owner[i], owner[j]))
        if a == b:
            continue
        hit = segment_intersection(segments[i], segments[j])
        if hit.is_empty:
            continue
        target = allowed.get((a, b))
        pts = [np.array([float(p[0]), float(p[1])]) for p in hit.points]
        if target is not None and all(np.hypot(*(p - target)) <= tol for p in pts):
            continue
        return Certificate.failed("curve images meet away from their crossing", pair=(a, b), point=tuple(pts[0]))
    return Certificate.passed()


def certify_h(rep: GeomRep, H: HApprox, sigma: float, samples: int = 200) -> float:
    """H が σ-近くて単射なことを確かめ、標本での ‖H − h‖∞ を返す"""
    worst = 0.0
    for c, curve in enumerate(rep.curves):
        t = np.unique(np.concatenate([np.linspace(0.0, 1.0, samples), H.params[c], curve.image()[0]]))
        worst = max(worst, float(np.hypot(*(H.evaluate(c, t) - curve.evaluate(t)).T).max()))
    if worst >= sigma:
        raise ValidationError(f"approximation {H.name} is not sigma-close to h", {"distance": worst, "sigma": sigma})
    allowed = {pair: H.evaluate(pair[0], ti) for pair, (ti, _) in crossing_params(rep).items()}
    cert = family_certificate([H.polyline(c) for c in range(H.n_curves)], allowed)
    if not cert:
        raise ValidationError(f"approximation {H.name} is not injective: {cert.reason}", cert.witness)
    return worst


def rep_provider(rep: GeomRep, sigma: float) -> HApprox:
    """H = h"""
    images = [c.image() for c in rep.curves]
    return HApprox("rep", tuple(p for p, _ in images), tuple(v for _, v in images))


def identity_blend(rep: GeomRep, eta: float) -> HApprox:
    """(1 − η)·h + η·γ"""
    params: List[np.ndarray] = []
    points: List[np.ndarray] = []
    for curve, line in zip(rep.curves, rep.grid.curves):
        cum = line.cumulative_lengths()
        breaks = curve.image()[0]
        t = np.unique(np.concatenate([breaks, cum / cum[-1]]))
        t = t[thin_breaks(t, pinned=np.isin(t, breaks))]
        params.append(t)
        points.append((1.0 - eta) * curve.evaluate(t) + eta * line.point_at(t))
    return HApprox("identity_blend", tuple(params), tuple(points), eta)


def identity_blend_provider(rep: GeomRep, sigma: float) -> HApprox:
    return identity_blend(rep, sigma / 4.0)


def generic_provider(rep: GeomRep, sigma: float, rounds: int = 8) -> HApprox:
    """η = σ/4, σ/8, … の順に混ぜて、最初に単射と確かめられたものを返す"""
    last: Optional[ValidationError] = None
    for k in range(rounds):
        H = identity_blend(rep, sigma / 2.0 ** (k + 2))
        try:
            certify_h(rep, H, sigma)
        except ValidationError as e:
            last = e
            logger.debug(f"Generic approximation with eta={H.eta:.3e} rejected: {e}")
            continue
        return HApprox("generic", H.params, H.points, H.eta)
    raise ValidationError(
        "no injective approximation found",
        {"rounds": rounds, **(last.witness if last is not None else {})},
    )


PROVIDERS: Dict[str, Provider] = {
    "identity": rep_provider,
    "affine": rep_provider,
    "fracture": rep_provider,
    "shear_blend": rep_provider,
    "rank_one": identity_blend_provider,
}


def provider_for(kind: str) -> Provider:
    return PROVIDERS.get(kind, generic_provider)
