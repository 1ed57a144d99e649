"""PCA plane fitting and second-order jet fitting over k-nearest neighborhoods."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cloud import SpatialIndex
from .errors import ConfigError, DataError

SIGN_TOL = 1e-12
AMBIGUITY_TOL = 1e-12
MAX_CONDITION = 1e12

PRESETS = {"small": 18, "med": 112, "large": 450}
_MIN_K = {"pca": 3, "jet": 6}


@dataclass(frozen=True)
class BaselineConfig:
    method: str = "pca"
    k_neighbors: int = 18

    def __post_init__(self):
        if self.method not in _MIN_K:
            raise ConfigError(f"unknown baseline method {self.method!r}")
        if self.k_neighbors < _MIN_K[self.method]:
            raise ConfigError(
                f"{self.method} needs k >= {_MIN_K[self.method]}, got {self.k_neighbors}"
            )

    @classmethod
    def preset(cls, method, size):
        return cls(method, PRESETS[size])

    @property
    def label(self):
        return f"{self.method}:{self.k_neighbors}"


@dataclass(frozen=True, eq=False)
class NormalFit:
    normal: np.ndarray
    ambiguous: bool = False
    fallback: bool = False
    coefficients: np.ndarray | None = field(default=None, repr=False)


@dataclass(frozen=True, eq=False)
class BatchFit:
    normals: np.ndarray
    ambiguous: np.ndarray
    fallback: np.ndarray
    coefficients: np.ndarray | None = field(default=None, repr=False)

    def __getitem__(self, i) -> NormalFit:
        coeffs = None if self.coefficients is None else self.coefficients[i]
        return NormalFit(self.normals[i], bool(self.ambiguous[i]), bool(self.fallback[i]), coeffs)


def canonical_sign(normals: np.ndarray) -> np.ndarray:
    """Flip unoriented normals so z > 0; ties fall through to y, then x."""
    n = np.array(normals, dtype=np.float64, copy=True)
    flat = n.reshape(-1, 3)
    key = np.where(
        np.abs(flat[:, 2]) > SIGN_TOL,
        flat[:, 2],
        np.where(np.abs(flat[:, 1]) > SIGN_TOL, flat[:, 1], flat[:, 0]),
    )
    flat[key < 0] *= -1.0
    return n


def _neighborhoods(index: SpatialIndex, queries, k):
    queries = np.atleast_1d(np.asarray(queries, dtype=np.int64))
    n = len(index.cloud)
    if k > n:
        raise DataError(f"cloud has {n} points, fewer than k={k}")
    if queries.size and (queries.min() < 0 or queries.max() >= n):
        raise DataError("query index out of range")
    idx, _ = index.knn(index.points[queries], k)
    return queries, index.points[idx]


def _pca_frames(nbrs: np.ndarray):
    centered = nbrs - nbrs.mean(axis=1, keepdims=True)
    cov = np.einsum("qki,qkj->qij", centered, centered) / nbrs.shape[1]
    evals, evecs = np.linalg.eigh(cov)
    scale = np.maximum(evals[:, 2], np.finfo(float).tiny)
    ambiguous = (evals[:, 1] - evals[:, 0]) <= AMBIGUITY_TOL * scale
    return evecs, ambiguous


def pca_normals(index: SpatialIndex, queries, k: int = 18) -> BatchFit:
    """Smallest-eigenvalue eigenvector of each k-NN covariance."""
    BaselineConfig("pca", k)
    _, nbrs = _neighborhoods(index, queries, k)
    evecs, ambiguous = _pca_frames(nbrs)
    normals = canonical_sign(evecs[:, :, 0])
    return BatchFit(normals, ambiguous, np.zeros(len(normals), dtype=bool))


def pca_normal(index: SpatialIndex, query: int, k: int = 18) -> NormalFit:
    return pca_normals(index, [query], k)[0]


def jet_normals(index: SpatialIndex, queries, k: int = 18) -> BatchFit:
    """Osculating paraboloid fit in the PCA tangent frame of each query.

    Neighbors are expressed as heights h(x, y) above the frame centered on the
    query and fit by least squares with
    h = b0 + b1 x + b2 y + b3 x^2 + b4 x y + b5 y^2.
    """
    BaselineConfig("jet", k)
    queries, nbrs = _neighborhoods(index, queries, k)
    evecs, ambiguous = _pca_frames(nbrs)
    pca = evecs[:, :, 0]
    u, v, nrm = evecs[:, :, 2], evecs[:, :, 1], evecs[:, :, 0]

    rel = nbrs - index.points[queries][:, None, :]
    x = np.einsum("qkd,qd->qk", rel, u)
    y = np.einsum("qkd,qd->qk", rel, v)
    h = np.einsum("qkd,qd->qk", rel, nrm)
    # Rescaling all three coordinates leaves the first-order slopes unchanged
    # and keeps the design matrix well conditioned.
    s = np.maximum(np.sqrt(x * x + y * y).max(axis=1), np.finfo(float).tiny)[:, None]
    x, y, h = x / s, y / s, h / s

    A = np.stack([np.ones_like(x), x, y, x * x, x * y, y * y], axis=2)
    U, S, Vt = np.linalg.svd(A, full_matrices=False)
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = S[:, 0] / S[:, -1]
        inv = np.where(S > 0, 1.0 / S, 0.0)
    beta = np.einsum("qji,qj,qkj,qk->qi", Vt, inv, U, h)
    fallback = ~(cond <= MAX_CONDITION)

    local = -beta[:, 1, None] * u - beta[:, 2, None] * v + nrm
    local /= np.linalg.norm(local, axis=1, keepdims=True)
    normals = np.where(fallback[:, None], pca, local)
    beta[fallback] = np.nan
    return BatchFit(canonical_sign(normals), ambiguous, fallback, beta)


def jet_normal(index: SpatialIndex, query: int, k: int = 18) -> NormalFit:
    return jet_normals(index, [query], k)[0]


def estimate_normals(index: SpatialIndex, queries, config: BaselineConfig) -> BatchFit:
    fn = pca_normals if config.method == "pca" else jet_normals
    return fn(index, queries, config.k_neighbors)
