"""Benchmark harness: (method x augmentation) tables with timing and manifests."""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .cloud import PointCloud, ScaleSpec, build_index
from .data import CorruptionSpec, corrupt, load_pcpnet
from .errors import ConfigError, DataError, MupsError
from .fv import encode_queries
from .geom import PRESETS, BaselineConfig, estimate_normals
from .gmm import build_grid
from .metrics import angle_errors, pgp, rms_error
from .moe import MoeModel, predict_batch

CSV_COLUMNS = (
    "method", "augmentation", "rms_deg", "pgp5", "pgp10", "n_points", "n_failures",
    "ms_per_point_features", "ms_per_point_estimate",
)

# RMS angle errors (degrees) of PCA on the PCPNet test set without augmentation.
PCPNET_PCA_REFERENCE = {"small": 8.31, "med": 12.29, "large": 16.77}
PCPNET_TOLERANCE = 0.3
PCPNET_LISTS = ("testset_no_noise.txt",)


@dataclass(frozen=True, eq=False)
class Dataset:
    name: str
    cloud: PointCloud = field(repr=False)
    queries: np.ndarray | None = field(default=None, repr=False)

    def query_indices(self):
        return np.arange(len(self.cloud)) if self.queries is None else np.asarray(self.queries)


@dataclass(frozen=True)
class Estimate:
    """Normals for the queries plus a success mask and wall times in seconds."""

    normals: np.ndarray
    ok: np.ndarray
    seconds_features: float
    seconds_estimate: float


class GeometricMethod:
    def __init__(self, config: BaselineConfig):
        self.config = config

    @property
    def label(self):
        size = {v: k for k, v in PRESETS.items()}.get(self.config.k_neighbors)
        return f"{self.config.method}_{size}" if size else self.config.label

    def describe(self):
        return {"kind": "geometric", **asdict(self.config)}

    def estimate(self, cloud, queries, workers=1, seed=0) -> Estimate:
        t0 = time.perf_counter()
        index = build_index(cloud)
        fit = estimate_normals(index, queries, self.config)
        dt = time.perf_counter() - t0
        ok = np.all(np.isfinite(fit.normals), axis=1)
        return Estimate(fit.normals, ok, 0.0, dt)


class MoeMethod:
    def __init__(self, model: MoeModel, label: str = "moe"):
        self.model = model
        self._label = label

    @property
    def label(self):
        return self._label

    def describe(self):
        return {"kind": "moe", **self.model.config.to_dict()}

    def estimate(self, cloud, queries, workers=1, seed=0) -> Estimate:
        c = self.model.config
        t0 = time.perf_counter()
        index = build_index(cloud)
        grid = build_grid(c.m)
        scales = [ScaleSpec(r, c.t_max) for r in c.scales]
        feats, ok = encode_queries(index, grid, queries, scales, seed=seed, workers=workers,
                                   dtype=self.model.dtype)
        t1 = time.perf_counter()
        normals = np.full((len(queries), 3), np.nan)
        if ok.any():
            normals[ok] = predict_batch(self.model, feats[ok])[0]
        return Estimate(normals, ok, t1 - t0, time.perf_counter() - t1)


def make_method(name: str, model_dir=None):
    """``pca_small``, ``jet_large``, ``pca:30`` or ``moe`` (needs ``model_dir``)."""
    if name == "moe":
        if model_dir is None:
            raise ConfigError("the moe method needs a trained model directory")
        from .moe import load_model

        return MoeMethod(load_model(model_dir))
    method, sep, size = name.replace(":", "_").partition("_")
    if not sep:
        raise ConfigError(f"method {name!r} must look like pca_small or jet:40")
    k = PRESETS.get(size)
    if k is None:
        try:
            k = int(size)
        except ValueError:
            raise ConfigError(f"unknown neighborhood size {size!r}") from None
    return GeometricMethod(BaselineConfig(method, k))


@dataclass
class EvalRow:
    method: str
    augmentation: str
    rms_deg: float
    pgp5: float
    pgp10: float
    n_points: int
    n_failures: int
    ms_per_point_features: float
    ms_per_point_estimate: float
    errors: np.ndarray = field(default=None, repr=False)
    per_dataset_rms: dict = field(default_factory=dict, repr=False)

    def csv_row(self):
        return [getattr(self, c) for c in CSV_COLUMNS]


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class EvalReport:
    rows: list
    config: dict
    workers: int
    seed: int

    def row(self, method, augmentation="none") -> EvalRow:
        for r in self.rows:
            if r.method == method and r.augmentation == augmentation:
                return r
        raise KeyError((method, augmentation))

    def manifest(self) -> dict:
        return {
            "version": __version__,
            "config": self.config,
            "config_hash": config_hash(self.config),
            "seed": self.seed,
            "workers": self.workers,
            "rows": [
                {**{c: getattr(r, c) for c in CSV_COLUMNS}, "per_dataset_rms": r.per_dataset_rms}
                for r in self.rows
            ],
        }

    def write(self, directory, stem="report"):
        d = Path(directory)
        os.makedirs(d, exist_ok=True)
        with open(d / f"{stem}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for r in self.rows:
                w.writerow(r.csv_row())
        with open(d / f"{stem}.json", "w") as fh:
            json.dump(self.manifest(), fh, indent=2, sort_keys=True, default=float)
        return d / f"{stem}.csv", d / f"{stem}.json"


def _augment(ds: Dataset, aug: CorruptionSpec | None) -> tuple[PointCloud, np.ndarray, np.ndarray]:
    """Corrupted cloud, surviving query indices into it, and their ground truth."""
    queries = ds.query_indices()
    if ds.cloud.normals is None:
        raise DataError(f"dataset {ds.name!r} has no ground-truth normals")
    if aug is None:
        return ds.cloud, queries, ds.cloud.normals[queries]
    cloud, keep = corrupt(ds.cloud, aug, return_indices=True)
    position = np.full(len(ds.cloud), -1)
    position[keep] = np.arange(len(keep))
    mapped = position[queries]
    mapped = mapped[mapped >= 0]
    return cloud, mapped, cloud.normals[mapped]


def run_benchmark(methods, datasets, augmentations=(None,), workers=1, seed=0) -> EvalReport:
    """Evaluate every (method, augmentation) cell over all datasets.

    ``rms_deg`` averages the per-dataset RMS errors; PGP values pool all
    points.  Points a method cannot handle are excluded from the metrics and
    counted in ``n_failures``.  Timings are wall-clock ms per query point with
    ``workers`` encoding threads.
    """
    methods = list(methods)
    datasets = list(datasets)
    augmentations = list(augmentations) or [None]
    if not methods:
        raise ConfigError("at least one method is required")
    if not datasets:
        raise ConfigError("at least one dataset is required")
    rows = []
    for aug in augmentations:
        label = "none" if aug is None else aug.label
        prepared = [(ds.name,) + _augment(ds, aug) for ds in datasets]
        for method in methods:
            errs, per_ds = [], {}
            n_points = n_fail = 0
            t_feat = t_est = 0.0
            for name, cloud, queries, truth in prepared:
                if len(queries) == 0:
                    continue
                try:
                    est = method.estimate(cloud, queries, workers=workers, seed=seed)
                except MupsError:
                    est = Estimate(np.full((len(queries), 3), np.nan), np.zeros(len(queries), bool), 0.0, 0.0)
                n_points += len(queries)
                n_fail += int((~est.ok).sum())
                t_feat += est.seconds_features
                t_est += est.seconds_estimate
                if est.ok.any():
                    e = angle_errors(est.normals[est.ok], truth[est.ok])
                    errs.append(e)
                    per_ds[name] = rms_error(e)
            e = np.concatenate(errs) if errs else np.empty(0)
            ok = len(e) > 0
            rows.append(EvalRow(
                method=method.label, augmentation=label,
                rms_deg=float(np.mean(list(per_ds.values()))) if ok else float("nan"),
                pgp5=pgp(e, 5.0) if ok else float("nan"),
                pgp10=pgp(e, 10.0) if ok else float("nan"),
                n_points=n_points, n_failures=n_fail,
                ms_per_point_features=1e3 * t_feat / max(n_points, 1),
                ms_per_point_estimate=1e3 * t_est / max(n_points, 1),
                errors=e, per_dataset_rms=per_ds,
            ))
    config = {
        "methods": [{"label": m.label, **m.describe()} for m in methods],
        "datasets": [{"name": d.name, "points": len(d.cloud), "queries": len(d.query_indices())} for d in datasets],
        "augmentations": [None if a is None else asdict(a) for a in augmentations],
    }
    return EvalReport(rows, config, workers, seed)


# -- timing -------------------------------------------------------------------------

def encoding_ms_per_point(cloud: PointCloud, queries, scales, m, workers=1, seed=0, repeats=1) -> float:
    """Best-of-``repeats`` wall time to encode ``queries`` (index build excluded)."""
    index = build_index(cloud)
    grid = build_grid(m)
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        encode_queries(index, grid, queries, scales, seed=seed, workers=workers)
        best = min(best, time.perf_counter() - t0)
    return 1e3 * best / len(queries)


def cloud_size_timing(sizes=(10_000, 100_000), n_queries=100, t_max=128, m=4, radius=0.05, seed=0, repeats=3):
    """Encoding ms/point on planes of different sizes with the same T_max.

    The radius is chosen so every patch saturates ``t_max`` at both sizes.
    """
    rng = np.random.default_rng(seed)
    out = {}
    for n in sizes:
        xy = rng.uniform(-0.5, 0.5, size=(n, 2))
        cloud = PointCloud(np.column_stack([xy, np.zeros(n)]))
        centre = np.flatnonzero(np.abs(xy).max(axis=1) < 0.3)[:n_queries]
        out[n] = encoding_ms_per_point(cloud, centre, [ScaleSpec(radius, t_max)], m, seed=seed, repeats=repeats)
    return out


def fit_linear(x, y) -> tuple[float, float, float]:
    """Least-squares ``y = a x + b``; returns (a, b, R^2)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    A = np.column_stack([x, np.ones_like(x)])
    (a, b), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (a * x + b)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return float(a), float(b), float(r2)


def complexity_sweep(ms=(2, 4, 8), t_maxes=(128, 256, 512), n_points=100_000, n_queries=60,
                     scales=(0.05, 0.07, 0.1), workers=1, seed=0, repeats=2):
    """Encoding ms/point over the (m, T_max) grid on a dense plane.

    Scales are wide enough that every patch holds more than the largest
    T_max, so each patch contributes exactly T_max points.  Returns a list of
    dicts with m, K, t_max, k_times_t and ms_per_point.
    """
    rng = np.random.default_rng(seed)
    xy = rng.uniform(-0.5, 0.5, size=(n_points, 2))
    cloud = PointCloud(np.column_stack([xy, np.zeros(n_points)]))
    index = build_index(cloud)
    margin = 0.5 - max(scales) * cloud.diag
    queries = np.flatnonzero(np.abs(xy).max(axis=1) < margin)[:n_queries]
    for r in scales:
        need = max(t_maxes)
        if min(len(index.radius(cloud.points[q], r * cloud.diag)) for q in queries[:5]) <= need:
            raise ConfigError(f"scale {r} does not saturate T_max={need}; use a denser cloud")
    rows = []
    for m in ms:
        grid = build_grid(m)
        for t in t_maxes:
            specs = [ScaleSpec(r, t) for r in scales]
            best = np.inf
            for _ in range(repeats):
                t0 = time.perf_counter()
                encode_queries(index, grid, queries, specs, seed=seed, workers=workers)
                best = min(best, time.perf_counter() - t0)
            rows.append({
                "m": m, "K": m**3, "t_max": t, "k_times_t": m**3 * t,
                "ms_per_point": 1e3 * best / len(queries),
            })
    return rows


# -- PCPNet reference check -------------------------------------------------------------

def find_pcpnet(root=None):
    """PCPNet directory from ``root`` or $PCPNET_ROOT, or None when absent."""
    root = root or os.environ.get("PCPNET_ROOT")
    if not root:
        return None
    d = Path(root)
    if not d.is_dir():
        return None
    for name in PCPNET_LISTS:
        if (d / name).exists():
            return d
    return None


def pcpnet_shapes(root: Path):
    for name in PCPNET_LISTS:
        path = root / name
        if path.exists():
            return [s.strip() for s in path.read_text().splitlines() if s.strip()]
    raise DataError(f"{root}: no shape list found")


def pcpnet_pca_check(root=None, workers=1):
    """PCA small/med/large on the clean PCPNet test shapes, or None if absent.

    Returns ``{size: (rms, reference, passed)}``.
    """
    d = find_pcpnet(root)
    if d is None:
        return None
    datasets = []
    for shape in pcpnet_shapes(d):
        cloud, queries = load_pcpnet(d, shape)
        datasets.append(Dataset(shape, cloud, queries))
    methods = [GeometricMethod(BaselineConfig.preset("pca", s)) for s in PCPNET_PCA_REFERENCE]
    report = run_benchmark(methods, datasets, workers=workers)
    out = {}
    for size, ref in PCPNET_PCA_REFERENCE.items():
        rms = report.row(f"pca_{size}").rms_deg
        out[size] = (rms, ref, abs(rms - ref) <= PCPNET_TOLERANCE)
    return out
