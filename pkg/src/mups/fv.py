"""Fisher-vector statistics on the Gaussian grid: 3DmFV and multi-scale MuPS.

Channel layout of a 3DmFV tensor (20 x m x m x m)::

    0-6    sum  [alpha, mu_x, mu_y, mu_z, sigma_x, sigma_y, sigma_z]
    7-13   max  [same 7]
    14-19  min  [mu_x, mu_y, mu_z, sigma_x, sigma_y, sigma_z]
"""

from __future__ import annotations

import csv
import itertools
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cloud import ScaleSpec, SpatialIndex, extract_patch
from .errors import ConfigError, DataError, DegeneratePatchError
from .gmm import GaussianGrid, _check_points, offsets, responsibilities

N_CHANNELS = 20
_BLOCK_ELEMS = 8192
TERM_NAMES = ("alpha", "mu_x", "mu_y", "mu_z", "sigma_x", "sigma_y", "sigma_z")
CHANNEL_NAMES = (
    [f"sum_{t}" for t in TERM_NAMES]
    + [f"max_{t}" for t in TERM_NAMES]
    + [f"min_{t}" for t in TERM_NAMES[1:]]
)


@dataclass(frozen=True, eq=False)
class Dmfv:
    tensor: np.ndarray = field(repr=False)
    m: int

    @property
    def sums(self):
        return self.tensor[0:7]

    @property
    def maxima(self):
        return self.tensor[7:14]

    @property
    def minima(self):
        return self.tensor[14:20]


@dataclass(frozen=True, eq=False)
class MupsFeature:
    scales: list[Dmfv]
    scale_specs: tuple[ScaleSpec, ...]

    def __post_init__(self):
        if not self.scales:
            raise ConfigError("a MuPS feature needs at least one scale")
        if len({d.m for d in self.scales}) != 1:
            raise ConfigError("all scales must share the grid resolution")

    @property
    def m(self):
        return self.scales[0].m

    @property
    def n(self):
        return len(self.scales)

    @property
    def tensor(self) -> np.ndarray:
        """Scales stacked along channels: (n * 20, m, m, m)."""
        return np.concatenate([d.tensor for d in self.scales], axis=0)


def per_point_terms(grid: GaussianGrid, points) -> np.ndarray:
    """Normalized log-likelihood gradients of every point, shape (T, K, 7).

    Per point t and Gaussian k::

        (gamma - w) / sqrt(w)
        gamma * (p - mu) / (sigma * sqrt(w))               (3)
        gamma * ((p - mu)^2 / sigma^2 - 1) / sqrt(2 w)     (3)
    """
    pts = _check_points(points)
    diff = offsets(grid, pts)
    gamma, _ = responsibilities(grid, diff)
    w, s = grid.weight, grid.sigma
    z = diff / s
    g = gamma[:, :, None]
    out = np.empty(gamma.shape + (7,))
    out[:, :, 0] = (gamma - w) / np.sqrt(w)
    out[:, :, 1:4] = g * z / np.sqrt(w)
    out[:, :, 4:7] = g * (z * z - 1.0) / np.sqrt(2.0 * w)
    return out


def compute_3dmfv(grid: GaussianGrid, points, normalize_extrema: bool = False) -> Dmfv:
    """Aggregate per-point terms with mean, max and min over points.

    Only the sum channels are divided by T unless ``normalize_extrema`` is
    set, in which case max/min are divided by T as well.
    """
    pts = _check_points(points)
    T = len(pts)
    # Aggregate over blocks of points so the (block, K, 7) working set stays
    # cache sized; cost is then linear in T * K.
    step = max(1, _BLOCK_ELEMS // grid.K)
    sums = np.zeros((grid.K, 7))
    maxs = np.full((grid.K, 7), -np.inf)
    mins = np.full((grid.K, 6), np.inf)
    for start in range(0, T, step):
        terms = per_point_terms(grid, pts[start:start + step])
        sums += terms.sum(axis=0)
        np.maximum(maxs, terms.max(axis=0), out=maxs)
        np.minimum(mins, terms[:, :, 1:].min(axis=0), out=mins)
    sums /= T
    if normalize_extrema:
        maxs = maxs / T
        mins = mins / T
    flat = np.concatenate([sums, maxs, mins], axis=1)  # (K, 20)
    m = grid.m
    return Dmfv(flat.T.reshape(N_CHANNELS, m, m, m).copy(), m)


def _check_scales(scales: Sequence[ScaleSpec]) -> tuple[ScaleSpec, ...]:
    scales = tuple(scales)
    if not scales:
        raise ConfigError("at least one scale is required")
    radii = [s.radius_fraction for s in scales]
    if any(b < a for a, b in zip(radii, radii[1:])):
        raise ConfigError(f"scales must be sorted by ascending radius, got {radii}")
    return scales


def compute_mups(
    index: SpatialIndex,
    grid: GaussianGrid,
    query: int,
    scales: Sequence[ScaleSpec],
    rng: np.random.Generator,
    normalize_extrema: bool = False,
) -> MupsFeature:
    scales = _check_scales(scales)
    out = []
    for i, spec in enumerate(scales):
        try:
            patch = extract_patch(index, query, spec, rng)
        except DegeneratePatchError as exc:
            raise exc.with_scale(i) from None
        out.append(compute_3dmfv(grid, patch.points, normalize_extrema))
    return MupsFeature(out, scales)


def query_rng(seed: int, query: int) -> np.random.Generator:
    """Per-query generator so results do not depend on worker scheduling."""
    return np.random.default_rng([int(seed), int(query)])


def encode_queries(
    index: SpatialIndex,
    grid: GaussianGrid,
    queries,
    scales: Sequence[ScaleSpec],
    seed: int = 0,
    workers: int = 1,
    normalize_extrema: bool = False,
    dtype=np.float32,
):
    """Encode many query points; returns (features, valid_mask).

    ``features`` has shape (Q, n*20, m, m, m) ordered like ``queries``; rows of
    queries whose patch was degenerate at any scale are zero and flagged
    False in ``valid_mask``.
    """
    scales = _check_scales(scales)
    queries = np.asarray(queries, dtype=np.int64)
    m = grid.m
    feats = np.zeros((len(queries), len(scales) * N_CHANNELS, m, m, m), dtype=dtype)
    valid = np.ones(len(queries), dtype=bool)

    def work(pos):
        q = int(queries[pos])
        try:
            f = compute_mups(index, grid, q, scales, query_rng(seed, q), normalize_extrema)
        except DegeneratePatchError:
            valid[pos] = False
            return
        feats[pos] = f.tensor

    if workers <= 1:
        for pos in range(len(queries)):
            work(pos)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, range(len(queries))))
    return feats, valid


# -- feature dump -------------------------------------------------------------

MAGIC = b"MUPS"
VERSION = 1
_HEADER = struct.Struct("<4sIIIQ")


@dataclass(frozen=True)
class DumpHeader:
    version: int
    n: int
    m: int
    count: int

    @property
    def record_size(self):
        return self.n * N_CHANNELS * self.m**3


def write_dump(path, features: np.ndarray, n: int, m: int) -> DumpHeader:
    """Write (count, n*20, m, m, m) features as little-endian float32 records."""
    feats = np.asarray(features)
    header = DumpHeader(VERSION, int(n), int(m), len(feats))
    if feats.size != header.count * header.record_size:
        raise DataError(
            f"feature array {feats.shape} does not match n={n}, m={m}"
        )
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, header.version, header.n, header.m, header.count))
        fh.write(feats.astype("<f4", copy=False).tobytes(order="C"))
    return header


def read_dump(path) -> tuple[DumpHeader, np.ndarray]:
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        if len(raw) != _HEADER.size:
            raise DataError(f"{path}: truncated header")
        magic, version, n, m, count = _HEADER.unpack(raw)
        if magic != MAGIC:
            raise DataError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise DataError(f"{path}: unsupported version {version}")
        header = DumpHeader(version, n, m, count)
        body = np.frombuffer(fh.read(), dtype="<f4")
    if body.size != count * header.record_size:
        raise DataError(
            f"{path}: expected {count * header.record_size} floats, found {body.size}"
        )
    return header, body.reshape(count, n * N_CHANNELS, m, m, m)


def write_csv(path, features: np.ndarray, n: int, m: int, queries=None):
    """Debug export: one row per (record, scale, channel, cell)."""
    feats = np.asarray(features).reshape(len(features), n, N_CHANNELS, m, m, m)
    if queries is None:
        queries = np.arange(len(feats))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["query", "scale", "channel", "i", "j", "l", "value"])
        for rec, q in enumerate(queries):
            for s in range(n):
                for c in range(N_CHANNELS):
                    block = feats[rec, s, c]
                    for (i, j, l), v in np.ndenumerate(block):
                        w.writerow([int(q), s, CHANNEL_NAMES[c], i, j, l, repr(float(v))])
    return os.fspath(path)


# -- lattice symmetries ------------------------------------------------------------

def grid_symmetries():
    """The 48 signed axis permutations mapping the Gaussian lattice onto itself.

    Each is ``(perm, signs)`` acting on points as ``p'_j = signs[j] * p[perm[j]]``.
    """
    return [
        (perm, signs)
        for perm in itertools.permutations(range(3))
        for signs in itertools.product((1, -1), repeat=3)
    ]


def symmetry_matrix(perm, signs) -> np.ndarray:
    R = np.zeros((3, 3))
    for j in range(3):
        R[j, perm[j]] = signs[j]
    return R


def apply_symmetry(tensor: np.ndarray, perm, signs) -> np.ndarray:
    """3DmFV (or stacked MuPS) tensor of the point set transformed by (perm, signs).

    Exact: equals re-encoding the transformed points, because the lattice and
    the shared isotropic Gaussians are invariant under the transform.
    Accepts (n*20, m, m, m) and returns a new array of the same shape.
    """
    t = np.asarray(tensor)
    n = t.shape[0] // N_CHANNELS
    m = t.shape[1]
    blocks = t.reshape(n, N_CHANNELS, m, m, m)
    blocks = np.transpose(blocks, (0, 1) + tuple(2 + p for p in perm))
    flip = tuple(2 + j for j in range(3) if signs[j] < 0)
    if flip:
        blocks = np.flip(blocks, axis=flip)
    out = np.empty_like(blocks)
    out[:, 0] = blocks[:, 0]
    out[:, 7] = blocks[:, 7]
    for j in range(3):
        src, s = perm[j], signs[j]
        out[:, 4 + j] = blocks[:, 4 + src]
        out[:, 11 + j] = blocks[:, 11 + src]
        out[:, 17 + j] = blocks[:, 17 + src]
        if s > 0:
            out[:, 1 + j] = blocks[:, 1 + src]
            out[:, 8 + j] = blocks[:, 8 + src]
            out[:, 14 + j] = blocks[:, 14 + src]
        else:
            out[:, 1 + j] = -blocks[:, 1 + src]
            out[:, 8 + j] = -blocks[:, 14 + src]
            out[:, 14 + j] = -blocks[:, 8 + src]
    return out.reshape(t.shape)


# Channel orbits under the lattice symmetries, with the sign each member
# carries relative to the first.  Symmetries permute the members of an orbit
# and flip signs only within it; the max and min mu terms trade places with a
# sign flip when an axis is reflected.
_ORBITS = (
    ((0,), (1,)),
    ((7,), (1,)),
    ((1, 2, 3), None),
    ((4, 5, 6), (1, 1, 1)),
    ((8, 9, 10, 14, 15, 16), (1, 1, 1, -1, -1, -1)),
    ((11, 12, 13), (1, 1, 1)),
    ((17, 18, 19), (1, 1, 1)),
)


def orbit_standardization(features, floor: float = 1e-12):
    """Per-channel ``(shift, scale)`` that commute with every lattice symmetry.

    Equal to the plain per-channel mean and standard deviation of the data
    augmented by all 48 symmetries, so ``(x - shift) / scale`` applied before
    or after a symmetry gives the same tensor.  Sign-symmetric channels get a
    zero shift.  ``features`` is (B, n*20, m, m, m).
    """
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 5 or X.shape[1] % N_CHANNELS or len(X) == 0:
        raise DataError(f"expected a non-empty (B, n*20, m, m, m) array, got {X.shape}")
    n = X.shape[1] // N_CHANNELS
    mean = X.mean(axis=(0, 2, 3, 4)).reshape(n, N_CHANNELS)
    sq = np.square(X).mean(axis=(0, 2, 3, 4)).reshape(n, N_CHANNELS)
    shift = np.zeros((n, N_CHANNELS))
    scale = np.ones((n, N_CHANNELS))
    for members, signs in _ORBITS:
        idx = list(members)
        if signs is None:
            a = np.zeros(n)
            s = np.ones(len(idx))
        else:
            s = np.asarray(signs, dtype=np.float64)
            a = (mean[:, idx] * s).mean(axis=1)
        var = sq[:, idx].mean(axis=1) - a**2
        shift[:, idx] = a[:, None] * s
        scale[:, idx] = np.where(var > floor, np.sqrt(np.maximum(var, floor)), 1.0)[:, None]
    return shift.ravel(), scale.ravel()
