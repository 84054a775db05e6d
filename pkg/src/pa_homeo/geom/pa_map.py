"""
有限区分アフィン写像 (三角形ごとにアフィン) と単射性の検証
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from ..core.errors import Certificate, GeometryError
from .polygon import polygon_area
from .predicates import orient_sign, point_in_closed_triangle
from .primitives import Polyline, is_injective_polyline
from .triangulation import Triangulation, boundary_loops, refine_4to1, signed_areas

Region = Optional[Union[Sequence[int], np.ndarray]]

# キャッシュしたヤコビ行列と再計算値の許容差
JACOBIAN_TOL = 1e-12


def affine_jacobians(vertices: np.ndarray, images: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """三角形ごとの 2×2 微分行列 (m, 2, 2)"""
    tris = np.asarray(triangles, dtype=int)
    if len(tris) == 0:
        return np.zeros((0, 2, 2))
    e = np.stack([vertices[tris[:, 1]] - vertices[tris[:, 0]], vertices[tris[:, 2]] - vertices[tris[:, 0]]], axis=1)
    f = np.stack([images[tris[:, 1]] - images[tris[:, 0]], images[tris[:, 2]] - images[tris[:, 0]]], axis=1)
    # 行ベクトル表記で E A^T = F
    return np.transpose(np.linalg.solve(e, f), (0, 2, 1))


@dataclass(frozen=True)
class PAHomeo:
    """三角形分割上の区分アフィン写像 (頂点ごとの像で決まる)"""
    domain: Triangulation
    images: np.ndarray
    jacobians: np.ndarray = field(default_factory=lambda: np.zeros((0, 2, 2)))

    def __post_init__(self) -> None:
        images = np.asarray(self.images, dtype=float).reshape(-1, 2)
        if len(images) != self.domain.n_vertices:
            raise GeometryError(
                "image count does not match vertex count",
                {"images": len(images), "vertices": self.domain.n_vertices},
            )
        object.__setattr__(self, "images", images)
        fresh = affine_jacobians(self.domain.vertices, images, self.domain.triangles)
        if len(self.jacobians) != len(fresh):
            object.__setattr__(self, "jacobians", fresh)
        elif np.abs(np.asarray(self.jacobians) - fresh).max(initial=0.0) > JACOBIAN_TOL:
            raise GeometryError("cached derivative matrices are stale")

    @classmethod
    def identity(cls, domain: Triangulation) -> "PAHomeo":
        return cls(domain, domain.vertices.copy())

    @classmethod
    def from_function(cls, domain: Triangulation, fn: Callable[[np.ndarray], np.ndarray]) -> "PAHomeo":
        """頂点での値を fn で与えた区分アフィン補間"""
        return cls(domain, np.asarray(fn(domain.vertices), dtype=float))

    @property
    def image_triangulation(self) -> Triangulation:
        return Triangulation(self.images, self.domain.triangles, self.domain.boundary)

    def image_areas(self) -> np.ndarray:
        return signed_areas(self.images, self.domain.triangles)

    def locate(self, points: np.ndarray) -> np.ndarray:
        """各点を含む三角形番号 (見つからなければ -1)"""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        v = self.domain.vertices
        tris = self.domain.triangles
        a, b, c = v[tris[:, 0]], v[tris[:, 1]], v[tris[:, 2]]
        det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
        out = np.full(len(pts), -1, dtype=int)
        for n, p in enumerate(pts):
            l1 = ((c[:, 0] - a[:, 0]) * (a[:, 1] - p[1]) - (c[:, 1] - a[:, 1]) * (a[:, 0] - p[0])) / det
            l2 = ((b[:, 1] - a[:, 1]) * (a[:, 0] - p[0]) - (b[:, 0] - a[:, 0]) * (a[:, 1] - p[1])) / det
            lam = np.minimum(np.minimum(l1, l2), 1.0 - l1 - l2)
            t = int(np.argmax(lam))
            if lam[t] >= -1e-12:
                out[n] = t
            elif point_in_closed_triangle(p, a[t], b[t], c[t]):
                out[n] = t
        return out

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """点位置探索 + 重心座標による評価"""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        owner = self.locate(pts)
        if np.any(owner < 0):
            bad = pts[int(np.argmin(owner))]
            raise GeometryError("point is outside the triangulation", {"point": tuple(bad)})
        tris = self.domain.triangles[owner]
        base = self.domain.vertices[tris[:, 0]]
        img = self.images[tris[:, 0]]
        out = img + np.einsum("nij,nj->ni", self.jacobians[owner], pts - base)
        return out if np.ndim(points) > 1 else out[0]

    def boundary_loop(self) -> np.ndarray:
        """定義域の境界頂点 (反時計回り、1ループ)"""
        loops = boundary_loops(self.domain.triangles)
        if len(loops) != 1:
            raise GeometryError("domain boundary is not a single loop", {"loops": len(loops)})
        return np.array(loops[0], dtype=int)

    def refine(self) -> "PAHomeo":
        """4 分割。新しい頂点の像は辺上の線形補間 (写像そのものは不変)"""
        verts, tris, parents = refine_4to1(self.domain.vertices, self.domain.triangles)
        images = np.vstack([self.images, np.zeros((len(verts) - len(self.images), 2))])
        for child, (a, b) in parents.items():
            images[child] = 0.5 * (self.images[a] + self.images[b])
        return PAHomeo(Triangulation(verts, tris), images)


def _region_indices(g: PAHomeo, region: Region) -> np.ndarray:
    m = g.domain.n_triangles
    if region is None:
        return np.arange(m)
    idx = np.asarray(region)
    if idx.dtype == bool:
        if len(idx) != m:
            raise GeometryError("region mask has the wrong length", {"expected": m, "got": len(idx)})
        return np.flatnonzero(idx)
    idx = idx.astype(int).ravel()
    if len(idx) and (idx.min() < 0 or idx.max() >= m):
        raise GeometryError("region is not a union of domain triangles", {"index": int(idx.max())})
    if len(np.unique(idx)) != len(idx):
        raise GeometryError("region lists a triangle twice")
    return idx


def pa_total_variation(g: PAHomeo, region: Region = None) -> float:
    """Σ_T area(T)·‖Dg|_T‖_F"""
    idx = _region_indices(g, region)
    areas = g.domain.areas()[idx]
    norms = np.sqrt((g.jacobians[idx] ** 2).sum(axis=(1, 2)))
    return float(np.dot(areas, norms))


def pa_directional_variation(g: PAHomeo, v: Sequence[float], region: Region = None) -> float:
    """Σ_T area(T)·|Dg|_T v|"""
    vec = np.asarray(v, dtype=float)
    if abs(np.hypot(*vec) - 1.0) > 1e-12:
        raise GeometryError("direction must be a unit vector", {"norm": float(np.hypot(*vec))})
    idx = _region_indices(g, region)
    areas = g.domain.areas()[idx]
    return float(np.dot(areas, np.hypot(*(g.jacobians[idx] @ vec).T)))


def certify_homeomorphism(g: PAHomeo) -> Certificate:
    """像三角形の正の向き・像境界の単純性・境界写像の単射性を確認する"""
    img = g.images
    for t, (i, j, k) in enumerate(g.domain.triangles):
        if orient_sign(img[i], img[j], img[k]) <= 0:
            return Certificate.failed("image triangle not positively oriented", triangle=t)
    try:
        loop = g.boundary_loop()
    except GeometryError as e:
        return Certificate.failed("domain boundary is not a single loop", **e.witness)
    ring = img[loop]
    if len(np.unique(ring, axis=0)) != len(ring):
        return Certificate.failed("boundary map is not injective")
    ok, pair = is_injective_polyline(Polyline.from_points(ring), closed=True)
    if not ok:
        return Certificate.failed("image boundary is not simple", segments=pair)
    enclosed = polygon_area(ring)
    covered = float(g.image_areas().sum())
    if abs(enclosed - covered) > 1e-9 * max(1.0, abs(enclosed)):
        return Certificate.failed("image triangles overlap", enclosed=enclosed, covered=covered)
    return Certificate.passed()
