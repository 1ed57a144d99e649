"""Uniform Gaussian grid on [-1, 1]^3 and soft assignment of points to it."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError

_LOG_2PI = np.log(2.0 * np.pi)
_CHUNK = 4096


@dataclass(frozen=True, eq=False)
class GaussianGrid:
    """m^3 isotropic Gaussians with shared std ``sigma = 1/m`` and weight ``1/K``.

    Component ``k`` sits at lattice cell ``(i, j, l)`` with
    ``k = (i * m + j) * m + l``, i.e. x varies slowest.
    """

    m: int
    centers: np.ndarray = field(repr=False)
    sigma: float
    weight: float

    @property
    def K(self) -> int:
        return self.m**3

    @property
    def axis(self) -> np.ndarray:
        return lattice_axis(self.m)


def lattice_axis(m: int) -> np.ndarray:
    """Midpoints of the m equal cells of [-1, 1]."""
    return -1.0 + (2.0 * np.arange(m) + 1.0) / m


def build_grid(m: int) -> GaussianGrid:
    if int(m) != m or m < 1:
        raise ConfigError(f"grid resolution must be a positive integer, got {m}")
    m = int(m)
    ax = lattice_axis(m)
    gx, gy, gz = np.meshgrid(ax, ax, ax, indexing="ij")
    centers = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    return GaussianGrid(m=m, centers=centers, sigma=1.0 / m, weight=1.0 / m**3)


@dataclass(frozen=True, eq=False)
class Assignment:
    gamma: np.ndarray = field(repr=False)
    log_likelihood: np.ndarray = field(repr=False)

    @property
    def per_point_likelihood(self) -> np.ndarray:
        return np.exp(self.log_likelihood)


def _check_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise DataError(f"points must have shape (T, 3), got {pts.shape}")
    if len(pts) == 0:
        raise DataError("no points to assign")
    if not np.all(np.isfinite(pts)):
        raise DataError("non-finite input coordinate")
    return pts


def offsets(grid: GaussianGrid, points: np.ndarray) -> np.ndarray:
    """p_t - mu_k, shape (T, K, 3)."""
    return points[:, None, :] - grid.centers[None, :, :]


def component_log_density(grid: GaussianGrid, diff: np.ndarray) -> np.ndarray:
    """log u_k(p_t) from precomputed offsets, shape (T, K)."""
    sq = np.einsum("tkd,tkd->tk", diff, diff)
    return -1.5 * _LOG_2PI - 3.0 * np.log(grid.sigma) - 0.5 * sq / grid.sigma**2


def responsibilities(grid: GaussianGrid, diff: np.ndarray):
    """(gamma, log u_lambda) from offsets, guarded by max-subtraction."""
    logw = np.log(grid.weight) + component_log_density(grid, diff)
    peak = logw.max(axis=1, keepdims=True)
    e = np.exp(logw - peak)
    total = e.sum(axis=1, keepdims=True)
    return e / total, (peak + np.log(total))[:, 0]


def soft_assign(grid: GaussianGrid, points) -> Assignment:
    """Posterior responsibilities gamma_t(k) = w_k u_k(p_t) / u_lambda(p_t).

    Evaluated in log space with the per-point maximum subtracted before
    exponentiation, in blocks of points to bound memory.
    """
    pts = _check_points(points)
    if len(pts) <= _CHUNK:
        gamma, ll = responsibilities(grid, offsets(grid, pts))
        return Assignment(gamma, ll)
    gamma = np.empty((len(pts), grid.K))
    ll = np.empty(len(pts))
    for start in range(0, len(pts), _CHUNK):
        sl = slice(start, start + _CHUNK)
        gamma[sl], ll[sl] = responsibilities(grid, offsets(grid, pts[sl]))
    return Assignment(gamma, ll)
