"""Synthetic shapes with analytic normals, corruptions, and PCPNet-format I/O."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from .cloud import PointCloud
from .errors import ConfigError, DataError

SHAPES = ("plane", "sphere", "cylinder", "box", "wedge")
CORRUPTIONS = ("gaussian_noise", "density_gradient", "density_stripes")

# Noise levels of the PCPNet benchmark, as fractions of the bounding-box diagonal.
NOISE_LEVELS = (0.00125, 0.006, 0.012)


@dataclass(frozen=True)
class ShapeSpec:
    """A parametric surface to sample.

    plane: ``size`` x ``size`` square in z = 0.  sphere: ``radius``.
    cylinder: ``radius`` and ``height`` along z, with caps.  box: cube of
    edge ``size``.  wedge: two ``size`` x ``size`` faces meeting at a crease
    along the y axis with interior dihedral ``angle`` degrees.
    """

    kind: str
    count: int = 10_000
    size: float = 1.0
    radius: float = 1.0
    height: float = 2.0
    angle: float = 90.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SHAPES:
            raise ConfigError(f"unknown shape {self.kind!r}; expected one of {SHAPES}")
        if self.count < 10:
            raise ConfigError("a shape needs at least 10 samples")
        if min(self.size, self.radius, self.height) <= 0:
            raise ConfigError("shape extents must be positive")
        if self.kind == "wedge" and not 0 < self.angle < 180:
            raise ConfigError("wedge angle must be in (0, 180) degrees")


def _plane(spec, rng):
    xy = (rng.random((spec.count, 2)) - 0.5) * spec.size
    pts = np.column_stack([xy, np.zeros(spec.count)])
    nrm = np.tile([0.0, 0.0, 1.0], (spec.count, 1))
    return pts, nrm


def _sphere(spec, rng):
    d = rng.normal(size=(spec.count, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * spec.radius, d


def _cylinder(spec, rng):
    r, h = spec.radius, spec.height
    side, cap = 2 * np.pi * r * h, np.pi * r * r
    which = rng.choice(3, size=spec.count, p=np.array([side, cap, cap]) / (side + 2 * cap))
    theta = rng.random(spec.count) * 2 * np.pi
    pts = np.empty((spec.count, 3))
    nrm = np.zeros((spec.count, 3))
    s = which == 0
    pts[s] = np.column_stack([r * np.cos(theta[s]), r * np.sin(theta[s]), (rng.random(s.sum()) - 0.5) * h])
    nrm[s] = np.column_stack([np.cos(theta[s]), np.sin(theta[s]), np.zeros(s.sum())])
    for face, z in ((1, h / 2), (2, -h / 2)):
        c = which == face
        rad = r * np.sqrt(rng.random(c.sum()))
        pts[c] = np.column_stack([rad * np.cos(theta[c]), rad * np.sin(theta[c]), np.full(c.sum(), z)])
        nrm[c, 2] = np.sign(z)
    return pts, nrm


def _box(spec, rng):
    a = spec.size / 2
    face = rng.integers(0, 6, size=spec.count)
    axis, sign = face // 2, np.where(face % 2 == 0, 1.0, -1.0)
    pts = (rng.random((spec.count, 3)) - 0.5) * spec.size
    rows = np.arange(spec.count)
    pts[rows, axis] = sign * a
    nrm = np.zeros((spec.count, 3))
    nrm[rows, axis] = sign
    return pts, nrm


def wedge_geometry(angle_deg):
    """Unit in-face directions and normals of the two wedge faces."""
    beta = (np.pi - np.radians(angle_deg)) / 2
    dirs = np.array([[np.cos(beta), 0, -np.sin(beta)], [-np.cos(beta), 0, -np.sin(beta)]])
    normals = np.array([[np.sin(beta), 0, np.cos(beta)], [-np.sin(beta), 0, np.cos(beta)]])
    return dirs, normals


def _wedge(spec, rng):
    dirs, normals = wedge_geometry(spec.angle)
    face = rng.integers(0, 2, size=spec.count)
    s = rng.random(spec.count) * spec.size
    y = (rng.random(spec.count) - 0.5) * spec.size
    pts = s[:, None] * dirs[face]
    pts[:, 1] = y
    return pts, normals[face].copy()


_GENERATORS = {"plane": _plane, "sphere": _sphere, "cylinder": _cylinder, "box": _box, "wedge": _wedge}


def generate(spec: ShapeSpec) -> PointCloud:
    rng = np.random.default_rng(spec.seed)
    pts, nrm = _GENERATORS[spec.kind](spec, rng)
    return PointCloud(pts, nrm)


def fibonacci_sphere(count: int, radius: float = 1.0) -> PointCloud:
    """Near-uniform deterministic sphere sampling on a golden-angle spiral."""
    if count < 1 or radius <= 0:
        raise ConfigError("fibonacci sphere needs count >= 1 and radius > 0")
    i = np.arange(count) + 0.5
    polar = np.arccos(1.0 - 2.0 * i / count)
    azimuth = np.pi * (1.0 + np.sqrt(5.0)) * i
    d = np.column_stack([
        np.cos(azimuth) * np.sin(polar), np.sin(azimuth) * np.sin(polar), np.cos(polar)
    ])
    return PointCloud(d * radius, d)


def crease_distance(points, angle_deg=90.0):
    """In-face distance from the crease for points of an untransformed wedge."""
    dirs, _ = wedge_geometry(angle_deg)
    return np.abs(points[:, 0]) / dirs[0, 0]


def rotate(cloud: PointCloud, rotation: Rotation) -> PointCloud:
    normals = None if cloud.normals is None else rotation.apply(cloud.normals)
    return PointCloud(rotation.apply(cloud.points), normals)


@dataclass(frozen=True)
class CorruptionSpec:
    """gaussian_noise(sigma_fraction) | density_gradient(axis, min_keep)
    | density_stripes(axis, period_fraction, duty)."""

    kind: str
    sigma_fraction: float = 0.0
    axis: int = 0
    min_keep: float = 0.5
    period_fraction: float = 0.1
    duty: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.kind not in CORRUPTIONS:
            raise ConfigError(f"unknown corruption {self.kind!r}")
        if self.sigma_fraction < 0:
            raise ConfigError("sigma_fraction must be >= 0")
        if not 0 < self.min_keep <= 1:
            raise ConfigError("min_keep must be in (0, 1]")
        if not 0 < self.duty < 1:
            raise ConfigError("duty must be in (0, 1)")
        if self.axis not in (0, 1, 2):
            raise ConfigError("axis must be 0, 1 or 2")
        if self.period_fraction <= 0:
            raise ConfigError("period_fraction must be positive")

    @property
    def label(self):
        if self.kind == "gaussian_noise":
            return f"noise_{self.sigma_fraction:g}"
        if self.kind == "density_gradient":
            return "gradient"
        return "stripes"

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> CorruptionSpec:
        """``noise:0.012``, ``gradient:axis:min_keep`` or ``stripes:axis:period:duty``."""
        name, *args = text.split(":")
        try:
            vals = [float(a) for a in args]
            if name in ("noise", "gaussian_noise"):
                return cls("gaussian_noise", sigma_fraction=vals[0], seed=seed)
            if name in ("gradient", "density_gradient"):
                axis, keep = vals + [0.0, 0.2][len(vals):]
                return cls("density_gradient", axis=int(axis), min_keep=keep, seed=seed)
            if name in ("stripes", "density_stripes"):
                axis, period, duty = vals + [0.0, 0.1, 0.5][len(vals):]
                return cls("density_stripes", axis=int(axis), period_fraction=period, duty=duty, seed=seed)
        except (IndexError, ValueError) as exc:
            raise ConfigError(f"cannot parse corruption {text!r}") from exc
        raise ConfigError(f"unknown corruption {text!r}")


def corrupt(cloud: PointCloud, spec: CorruptionSpec, return_indices=False):
    """Apply one corruption; density variants return a subset of the input.

    With ``return_indices`` the indices of surviving input points are
    returned alongside the cloud.
    """
    rng = np.random.default_rng(spec.seed)
    n = len(cloud)
    if n == 0:
        raise DataError("empty result: input cloud has no points")
    if spec.kind == "gaussian_noise":
        pts = cloud.points
        if spec.sigma_fraction > 0:
            pts = pts + rng.normal(scale=spec.sigma_fraction * cloud.diag, size=pts.shape)
        out = PointCloud(pts, cloud.normals)
        keep = np.arange(n)
        return (out, keep) if return_indices else out

    lo, hi = cloud.bbox
    c = cloud.points[:, spec.axis]
    if spec.kind == "density_gradient":
        extent = hi[spec.axis] - lo[spec.axis]
        t = (c - lo[spec.axis]) / extent if extent > 0 else np.zeros(n)
        prob = 1.0 + (spec.min_keep - 1.0) * t
        mask = rng.random(n) < prob
    else:
        period = spec.period_fraction * cloud.diag
        phase = np.mod(c - lo[spec.axis], period)
        mask = phase < spec.duty * period
    keep = np.flatnonzero(mask)
    if len(keep) == 0:
        raise DataError("empty result")
    out = cloud.subset(keep)
    return (out, keep) if return_indices else out


# -- PCPNet files ---------------------------------------------------------------

def _read_rows(path, cols, dtype=np.float64):
    arr = np.loadtxt(path, dtype=dtype, ndmin=2)
    if arr.size == 0:
        return np.empty((0, cols), dtype=dtype)
    if arr.shape[1] != cols:
        raise DataError(f"{path}: expected {cols} columns, found {arr.shape[1]}")
    return arr


def load_pcpnet(directory, shape_name):
    """Read ``<name>.xyz`` plus optional ``.normals`` and ``.pidx``.

    Returns ``(cloud, queries)``; ``queries`` is None without a ``.pidx``.
    Normals are rescaled to unit length on load.
    """
    base = Path(directory) / shape_name
    xyz = base.with_name(shape_name + ".xyz")
    if not xyz.exists():
        raise DataError(f"missing point file {xyz}")
    pts = _read_rows(xyz, 3)
    normals = None
    npath = base.with_name(shape_name + ".normals")
    if npath.exists():
        normals = _read_rows(npath, 3)
        if len(normals) != len(pts):
            raise DataError(
                f"{npath}: {len(normals)} normals for {len(pts)} points"
            )
        lengths = np.linalg.norm(normals, axis=1, keepdims=True)
        if np.any(lengths == 0) or not np.all(np.isfinite(lengths)):
            raise DataError(f"{npath}: zero or non-finite normal")
        normals = normals / lengths
    queries = None
    ppath = base.with_name(shape_name + ".pidx")
    if ppath.exists():
        queries = np.loadtxt(ppath, dtype=np.int64, ndmin=1)
        if queries.size and (queries.min() < 0 or queries.max() >= len(pts)):
            raise DataError(
                f"{ppath}: point index out of range [0, {len(pts)})"
            )
    if len(pts) == 0:
        raise DataError(f"{xyz}: empty cloud")
    return PointCloud(pts, normals), queries


def _write_rows(path, arr):
    with open(path, "w") as fh:
        for row in np.asarray(arr, dtype=np.float64):
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def save_pcpnet(directory, shape_name, cloud: PointCloud, queries=None):
    """Write a cloud in PCPNet layout; floats use shortest round-trip repr."""
    os.makedirs(directory, exist_ok=True)
    base = Path(directory)
    _write_rows(base / f"{shape_name}.xyz", cloud.points)
    if cloud.normals is not None:
        _write_rows(base / f"{shape_name}.normals", cloud.normals)
    if queries is not None:
        np.savetxt(base / f"{shape_name}.pidx", np.asarray(queries, dtype=np.int64), fmt="%d")


def write_normals(path, normals):
    _write_rows(path, normals)


def read_normals(path):
    return _read_rows(path, 3)
