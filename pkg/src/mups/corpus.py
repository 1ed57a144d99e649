"""Seeded mixed corpus of noisy planes and clean wedge creases.

Each shape instance is sampled densely, randomly rotated, optionally
corrupted, and queried away from its outer border so every scale sees a full
neighborhood.  Wedge queries are restricted to the band around the crease
that the largest scale straddles.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .cloud import ScaleSpec, build_index
from .data import CorruptionSpec, ShapeSpec, corrupt, crease_distance, generate, rotate
from .fv import encode_queries
from .gmm import build_grid

PLANE, CREASE = 0, 1
LABELS = ("plane", "crease")


@dataclass(frozen=True)
class CorpusConfig:
    n_patches: int = 2000
    patches_per_shape: int = 100
    points_per_shape: int = 100_000
    noise: float = 0.012
    wedge_angle: float = 90.0
    scales: tuple = (0.01, 0.03, 0.05)
    t_max: int = 256
    m: int = 4
    seed: int = 0
    workers: int = 1


@dataclass(frozen=True, eq=False)
class Corpus:
    features: np.ndarray = field(repr=False)
    targets: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)
    shape_ids: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.targets)

    def where(self, label):
        return np.flatnonzero(self.labels == label)


def _shape_patches(kind, cfg: CorpusConfig, rng, shape_seed, n_queries, grid):
    spec = ShapeSpec(kind, count=cfg.points_per_shape, angle=cfg.wedge_angle, seed=shape_seed)
    clean = generate(spec)
    p = clean.points
    # Margin keeps the largest ball inside the surface.  Computed on the clean
    # cloud; noise changes the diagonal only marginally.
    margin = max(cfg.scales) * clean.diag * 1.05
    if kind == "plane":
        ok = (np.abs(p[:, 0]) < 0.5 - margin) & (np.abs(p[:, 1]) < 0.5 - margin)
    else:
        d = crease_distance(p, cfg.wedge_angle)
        ok = (d < max(cfg.scales) * clean.diag) & (np.abs(p[:, 1]) < 0.5 - margin) & (d < 1.0 - margin)
    candidates = np.flatnonzero(ok)

    cloud = rotate(clean, Rotation.random(random_state=rng.integers(2**31)))
    if kind == "plane" and cfg.noise > 0:
        cloud = corrupt(cloud, CorruptionSpec("gaussian_noise", sigma_fraction=cfg.noise, seed=shape_seed))
    index = build_index(cloud)
    scales = [ScaleSpec(r, cfg.t_max) for r in cfg.scales]

    out_f, out_t = [], []
    pool = rng.permutation(candidates)
    pos = 0
    while sum(len(f) for f in out_f) < n_queries and pos < len(pool):
        need = n_queries - sum(len(f) for f in out_f)
        chunk = pool[pos:pos + need]
        pos += need
        feats, valid = encode_queries(index, grid, chunk, scales, seed=shape_seed, workers=cfg.workers)
        out_f.append(feats[valid])
        out_t.append(cloud.normals[chunk[valid]])
    return np.concatenate(out_f), np.concatenate(out_t)


def build_corpus(cfg: CorpusConfig) -> Corpus:
    """Half noisy planes, half clean wedge creases, ``n_patches`` in total."""
    rng = np.random.default_rng(cfg.seed)
    grid = build_grid(cfg.m)
    n_shapes = max(2, int(np.ceil(cfg.n_patches / cfg.patches_per_shape)))
    n_shapes += n_shapes % 2
    per_kind = cfg.n_patches // 2
    feats, targets, labels, ids = [], [], [], []
    for label, kind in ((PLANE, "plane"), (CREASE, "wedge")):
        remaining = per_kind if label == PLANE else cfg.n_patches - per_kind
        shapes_left = n_shapes // 2
        while remaining > 0:
            n_q = int(np.ceil(remaining / max(shapes_left, 1)))
            f, t = _shape_patches(kind, cfg, rng, int(rng.integers(2**31)), n_q, grid)
            feats.append(f)
            targets.append(t)
            labels.append(np.full(len(f), label))
            ids.append(np.full(len(f), len(ids)))
            remaining -= len(f)
            shapes_left -= 1
    return Corpus(
        np.concatenate(feats), np.concatenate(targets),
        np.concatenate(labels), np.concatenate(ids),
    )
