"""Point-cloud container, kd-tree index and multi-scale patch extraction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigError, DataError, DegeneratePatchError

NORMAL_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class PointCloud:
    """N x 3 positions with optional unit normals.

    ``bbox`` and ``diag`` are derived from the points; every radius and noise
    level in this package is a fraction of ``diag``.
    """

    points: np.ndarray
    normals: np.ndarray | None = None

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise DataError(f"points must have shape (N, 3), got {pts.shape}")
        bad = np.flatnonzero(~np.isfinite(pts).all(axis=1))
        if bad.size:
            raise DataError(f"non-finite coordinates at point {bad[0]}")
        object.__setattr__(self, "points", pts)
        if self.normals is not None:
            nrm = np.ascontiguousarray(self.normals, dtype=np.float64)
            if nrm.shape != pts.shape:
                raise DataError(
                    f"normals shape {nrm.shape} does not match points {pts.shape}"
                )
            lengths = np.linalg.norm(nrm, axis=1)
            if np.any(np.abs(lengths - 1.0) > NORMAL_TOL):
                raise DataError("normals must be unit length")
            object.__setattr__(self, "normals", nrm)

    def __len__(self):
        return len(self.points)

    @property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        if len(self.points) == 0:
            raise DataError("empty cloud")
        return self.points.min(axis=0), self.points.max(axis=0)

    @property
    def diag(self) -> float:
        lo, hi = self.bbox
        return float(np.linalg.norm(hi - lo))

    def subset(self, indices) -> PointCloud:
        indices = np.asarray(indices, dtype=np.int64)
        normals = None if self.normals is None else self.normals[indices]
        return PointCloud(self.points[indices], normals)


class SpatialIndex:
    """Balanced kd-tree over a cloud; immutable once built."""

    def __init__(self, cloud: PointCloud):
        if len(cloud) == 0:
            raise DataError("empty cloud")
        self.cloud = cloud
        self._tree = cKDTree(cloud.points, balanced_tree=True, compact_nodes=True)
        self._diag = cloud.diag

    @property
    def points(self):
        return self.cloud.points

    @property
    def diag(self):
        return self._diag

    def radius(self, center, r) -> np.ndarray:
        """Sorted indices of every point with ``||p - center|| <= r``."""
        idx = self._tree.query_ball_point(np.asarray(center, dtype=np.float64), r)
        return np.sort(np.asarray(idx, dtype=np.int64))

    def knn(self, centers, k):
        """Indices and distances of the k nearest points (query point included).

        ``centers`` may be a single 3-vector or an (M, 3) array.
        """
        k = int(k)
        if k > len(self.cloud):
            raise DataError(f"k={k} exceeds cloud size {len(self.cloud)}")
        dist, idx = self._tree.query(np.asarray(centers, dtype=np.float64), k=k)
        if k == 1:
            dist, idx = dist[..., None], idx[..., None]
        return idx.astype(np.int64), dist


def build_index(cloud: PointCloud) -> SpatialIndex:
    return SpatialIndex(cloud)


@dataclass(frozen=True)
class ScaleSpec:
    radius_fraction: float
    t_max: int = 512

    def __post_init__(self):
        if not (0.0 < self.radius_fraction <= 1.0):
            raise ConfigError(f"radius_fraction must be in (0, 1], got {self.radius_fraction}")
        if int(self.t_max) < 1:
            raise ConfigError(f"t_max must be >= 1, got {self.t_max}")


DEFAULT_SCALES = (ScaleSpec(0.01), ScaleSpec(0.03), ScaleSpec(0.05))


@dataclass(frozen=True, eq=False)
class Patch:
    query_index: int
    points: np.ndarray = field(repr=False)
    raw_count: int

    def __len__(self):
        return len(self.points)


def _canonical_order(points: np.ndarray, indices: np.ndarray) -> np.ndarray:
    # Order candidates by coordinates so that seeded sampling does not depend
    # on the storage order of the cloud.
    cand = points[indices]
    order = np.lexsort((indices, cand[:, 2], cand[:, 1], cand[:, 0]))
    return indices[order]


def extract_patch(
    index: SpatialIndex, query: int, scale: ScaleSpec, rng: np.random.Generator
) -> Patch:
    """Gather the ball of radius ``radius_fraction * diag`` around ``query``.

    The ball is capped at ``t_max`` points by uniform sampling without
    replacement, then mapped to the unit ball with the query at the origin.
    """
    n = len(index.cloud)
    if not 0 <= query < n:
        raise DataError(f"query index {query} out of range [0, {n})")
    center = index.points[query]
    r = scale.radius_fraction * index.diag
    if not r > 0:
        raise DegeneratePatchError(1, query)
    idx = index.radius(center, r)
    raw = len(idx)
    if raw < 3:
        raise DegeneratePatchError(raw, query)
    if raw > scale.t_max:
        idx = _canonical_order(index.points, idx)
        pick = rng.choice(raw, size=scale.t_max, replace=False)
        idx = idx[np.sort(pick)]
    local = (index.points[idx] - center) / r
    return Patch(query, local, raw)
