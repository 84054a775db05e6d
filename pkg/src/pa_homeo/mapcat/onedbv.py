"""
折れ線への制限 (1 次元 BV 関数)

折れ線の弧長パラメータに沿って f∘γ はセル境界ごとにアフィンで、
ジャンプ集合を横切る点でだけ不連続になる。
"""

from dataclasses import dataclass
from typing import List, NamedTuple, Sequence, Tuple, Union

import numpy as np

from ..core.errors import ValidationError
from ..geom.primitives import Polyline
from .catalogue import TestMap
from .cells import clip_segment_convex

# 区間端点の同一視とジャンプ判定の許容差
KNOT_TOL = 1e-13
JUMP_TOL_1D = 1e-12


class Jump1D(NamedTuple):
    """1 次元ジャンプ: 正規化パラメータ t、Y(t) = 左極限、Z(t) = 右極限"""
    t: float
    s: float
    left: np.ndarray
    right: np.ndarray

    @property
    def size(self) -> float:
        return float(np.hypot(*(self.right - self.left)))


@dataclass(frozen=True)
class OneDBV:
    """弧長の節点ごとに左右の値を持つ区分アフィン曲線"""
    polyline: Polyline
    knots: np.ndarray
    left: np.ndarray
    right: np.ndarray

    @property
    def length(self) -> float:
        return float(self.knots[-1])

    @property
    def params(self) -> np.ndarray:
        return self.knots / self.length

    def piece_variations(self) -> np.ndarray:
        return np.hypot(*(self.left[1:] - self.right[:-1]).T)

    def jump_sizes(self) -> np.ndarray:
        return np.hypot(*(self.right - self.left).T)

    @property
    def jumps(self) -> Tuple[Jump1D, ...]:
        sizes = self.jump_sizes()
        return tuple(
            Jump1D(float(self.knots[k] / self.length), float(self.knots[k]), self.left[k].copy(), self.right[k].copy())
            for k in np.flatnonzero(sizes > JUMP_TOL_1D)
        )

    def knot_variations(self) -> Tuple[np.ndarray, np.ndarray]:
        """節点での l(s_k) (ジャンプを含まない) と L(s_k) (含む)"""
        pieces = self.piece_variations()
        jumps = self.jump_sizes()
        before = np.concatenate([[0.0], np.cumsum(pieces + jumps[:-1])])
        return before, before + jumps

    @property
    def total_variation(self) -> float:
        """L(1)"""
        return float(self.knot_variations()[1][-1])

    def _locate(self, t: Union[float, np.ndarray], side: str) -> Tuple[np.ndarray, np.ndarray]:
        s = np.clip(np.atleast_1d(np.asarray(t, dtype=float)) * self.length, 0.0, self.length)
        idx = np.searchsorted(self.knots, s, side="right" if side == "right" else "left") - 1
        idx = np.clip(idx, 0, len(self.knots) - 2)
        span = self.knots[idx + 1] - self.knots[idx]
        frac = np.clip((s - self.knots[idx]) / span, 0.0, 1.0)
        return idx, frac

    def value(self, t: Union[float, np.ndarray], side: str = "right") -> np.ndarray:
        """f∘γ(t)。節点では side 側の極限"""
        idx, frac = self._locate(t, side)
        start = self.right[idx]
        end = self.left[idx + 1]
        out = start + frac[:, None] * (end - start)
        return out if np.ndim(t) else out[0]

    def one_sided(self, t: float) -> Tuple[np.ndarray, np.ndarray]:
        """(Y(t), Z(t))"""
        return self.value(t, side="left"), self.value(t, side="right")

    def variation(self, t: Union[float, np.ndarray], inclusive: bool = True) -> np.ndarray:
        """L(t) (inclusive) または l(t)"""
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        lower, upper = self.knot_variations()
        pieces = self.piece_variations()
        s = np.clip(t_arr * self.length, 0.0, self.length)
        out = np.empty(len(s))
        for n, sv in enumerate(s):
            hit = np.flatnonzero(np.abs(self.knots - sv) <= KNOT_TOL * max(1.0, self.length))
            if len(hit):
                k = int(hit[0])
                out[n] = upper[k] if inclusive else lower[k]
                continue
            k = int(np.searchsorted(self.knots, sv, side="right") - 1)
            frac = (sv - self.knots[k]) / (self.knots[k + 1] - self.knots[k])
            out[n] = upper[k] + frac * pieces[k]
        return out if np.ndim(t) else out[0]

    def slice(self, t0: float, t1: float) -> "OneDBV":
        """正規化パラメータ区間 [t0, t1] への制限 (端点では内側の極限を取る)"""
        if not 0.0 <= t0 < t1 <= 1.0:
            raise ValidationError("slice needs 0 <= t0 < t1 <= 1", {"t0": t0, "t1": t1})
        s0, s1 = t0 * self.length, t1 * self.length
        tol = KNOT_TOL * max(1.0, self.length)
        inner = np.flatnonzero((self.knots > s0 + tol) & (self.knots < s1 - tol))
        start = self.value(t0, side="right")
        end = self.value(t1, side="left")
        knots = np.concatenate([[0.0], self.knots[inner] - s0, [s1 - s0]])
        left = np.vstack([start, self.left[inner], end])
        right = np.vstack([start, self.right[inner], end])
        return OneDBV(self.polyline.subpath(t0, t1), knots, left, right)


def _segment_breaks(f: TestMap, a: np.ndarray, b: np.ndarray) -> List[float]:
    ts = [0.0, 1.0]
    for cell in f.cells:
        hit = clip_segment_convex(a, b, cell.polygon)
        if hit is not None:
            ts.extend([hit[0], hit[1]])
    ts = sorted(min(1.0, max(0.0, t)) for t in ts)
    merged = [ts[0]]
    for t in ts[1:]:
        if t - merged[-1] > KNOT_TOL:
            merged.append(t)
    merged[-1] = 1.0
    return merged


def restrict_to_polyline(f: TestMap, p: Union[Polyline, Sequence[Sequence[float]]]) -> OneDBV:
    """f を折れ線に制限した 1 次元 BV 関数"""
    line = p if isinstance(p, Polyline) else Polyline.from_points(p)
    pts = line.array()
    knots: List[float] = [0.0]
    left: List[np.ndarray] = []
    right: List[np.ndarray] = []
    offset = 0.0
    for seg in range(len(pts) - 1):
        a, b = pts[seg], pts[seg + 1]
        overlaps = f.jump_overlaps(a, b)
        if overlaps:
            t0, t1, _ = overlaps[0]
            raise ValidationError(
                "grid on jump set",
                {"segment": seg, "from": tuple(a + t0 * (b - a)), "to": tuple(a + t1 * (b - a))},
            )
        seg_len = float(np.hypot(*(b - a)))
        ts = _segment_breaks(f, a, b)
        for t0, t1 in zip(ts[:-1], ts[1:]):
            mid = a + 0.5 * (t0 + t1) * (b - a)
            k = int(f.cell_index(mid)[0])
            p0, p1 = a + t0 * (b - a), a + t1 * (b - a)
            if k >= 0:
                v0, v1 = f.cells[k].apply(p0), f.cells[k].apply(p1)
            else:
                v0, v1 = p0, p1
            right.append(v0)
            left.append(v1)
            knots.append(offset + t1 * seg_len)
        offset += seg_len
    # 節点ごとに左極限 (直前の片の終値) と右極限 (次の片の始値)
    lefts = np.array([right[0]] + left)
    rights = np.array(right + [left[-1]])
    return OneDBV(line, np.array(knots), lefts, rights)


def line_variation(f: TestMap, a: Sequence[float], b: Sequence[float]) -> float:
    """線分 [a, b] 上の f の 1 次元全変動"""
    return restrict_to_polyline(f, [a, b]).total_variation
