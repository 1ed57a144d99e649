"""Scale-specialization experiment on the synthetic plane/crease corpus.

Trains the three-expert desk model and one single-expert baseline per scale
with the same staged recipe (a single expert skips the gate stage), then
compares held-out sin errors and gate routing.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .corpus import CREASE, PLANE, Corpus, CorpusConfig, build_corpus
from .metrics import sin_errors
from .moe import MoeConfig, MoeModel, StagedSchedule, predict_batch, train_staged

N_CH = 20


@dataclass(frozen=True)
class SpecializationConfig:
    train_patches: int = 2000
    test_patches: int = 600
    # many shapes with few queries each: more distinct rotations and creases
    patches_per_shape: int = 10
    stages: StagedSchedule = StagedSchedule()
    batch_size: int = 32
    augment: bool = True
    noise: float = 0.012
    wedge_angle: float = 90.0
    scales: tuple = (0.01, 0.03, 0.05)
    m: int = 4
    t_max: int = 256
    seed: int = 0
    workers: int = 1


@dataclass
class RunResult:
    name: str
    train_history: list
    test_sin: float
    plane_sin: float
    crease_sin: float
    seconds: float
    routing: dict = field(default_factory=dict)


@dataclass
class SpecializationResult:
    config: SpecializationConfig
    moe: RunResult
    singles: list
    corpus_seconds: float

    @property
    def best_single(self) -> RunResult:
        return min(self.singles, key=lambda r: r.test_sin)

    @property
    def ratio(self) -> float:
        return self.moe.test_sin / self.best_single.test_sin

    @property
    def crease_to_smallest(self) -> float:
        return self.moe.routing["crease"][0]

    @property
    def plane_to_largest(self) -> float:
        return self.moe.routing["plane"][-1]

    def summary(self) -> dict:
        return {
            "config": asdict(self.config),
            "moe": asdict(self.moe),
            "singles": [asdict(r) for r in self.singles],
            "ratio": self.ratio,
            "crease_to_smallest": self.crease_to_smallest,
            "plane_to_largest": self.plane_to_largest,
            "corpus_seconds": self.corpus_seconds,
        }


def build_corpora(cfg: SpecializationConfig) -> tuple[Corpus, Corpus]:
    """Disjointly seeded training and held-out corpora."""
    common = dict(
        noise=cfg.noise, wedge_angle=cfg.wedge_angle, scales=tuple(cfg.scales),
        t_max=cfg.t_max, m=cfg.m, workers=cfg.workers, patches_per_shape=cfg.patches_per_shape,
    )
    tr = build_corpus(CorpusConfig(n_patches=cfg.train_patches, seed=2 * cfg.seed + 1, **common))
    te = build_corpus(CorpusConfig(n_patches=cfg.test_patches, seed=2 * cfg.seed + 2, **common))
    return tr, te


def _fit(model, cfg, X_tr, Y_tr, callback=None):
    return train_staged(
        model, X_tr, Y_tr, cfg.stages, batch_size=cfg.batch_size,
        rng=np.random.default_rng(cfg.seed), augment=cfg.augment, callback=callback,
    )


def _evaluate(name, model, X_te, test: Corpus, history, seconds):
    normals, choice, _ = predict_batch(model, X_te)
    e = sin_errors(normals, test.targets)
    routing = {}
    if model.n_experts > 1:
        for label, key in ((PLANE, "plane"), (CREASE, "crease")):
            sel = test.labels == label
            routing[key] = (np.bincount(choice[sel], minlength=model.n_experts) / sel.sum()).tolist()
    return RunResult(
        name, [float(h) for h in history], float(e.mean()),
        float(e[test.labels == PLANE].mean()), float(e[test.labels == CREASE].mean()),
        seconds, routing,
    )


def train_and_evaluate(model, cfg, train_set: Corpus, test_set: Corpus, channels=None, name="model", callback=None):
    X_tr, X_te = train_set.features, test_set.features
    if channels is not None:
        X_tr, X_te = X_tr[:, channels], X_te[:, channels]
    t0 = time.perf_counter()
    history = _fit(model, cfg, X_tr, train_set.targets, callback)
    return _evaluate(name, model, X_te, test_set, history, time.perf_counter() - t0)


def run_specialization(cfg: SpecializationConfig = SpecializationConfig(), log=None) -> SpecializationResult:
    """Train the desk MoE and each single-scale baseline on identical data."""
    say = log or (lambda *_: None)
    t0 = time.perf_counter()
    train_set, test_set = build_corpora(cfg)
    corpus_seconds = time.perf_counter() - t0
    say(f"corpora built in {corpus_seconds:.1f}s ({len(train_set)} train, {len(test_set)} test)")

    moe_cfg = MoeConfig.desk(
        seed=cfg.seed, scales=tuple(cfg.scales), expert_wiring=tuple((i,) for i in range(len(cfg.scales))),
        m=cfg.m, t_max=cfg.t_max,
    )
    moe = train_and_evaluate(MoeModel(moe_cfg), cfg, train_set, test_set, name="moe")
    say(f"moe: test sin {moe.test_sin:.4f} routing {moe.routing} ({moe.seconds:.0f}s)")

    singles = []
    for s, radius in enumerate(cfg.scales):
        single_cfg = MoeConfig.desk(
            seed=cfg.seed, scales=(radius,), expert_wiring=((0,),), m=cfg.m, t_max=cfg.t_max
        )
        r = train_and_evaluate(
            MoeModel(single_cfg), cfg, train_set, test_set,
            channels=slice(N_CH * s, N_CH * (s + 1)), name=f"single_{radius:g}",
        )
        say(f"{r.name}: test sin {r.test_sin:.4f} ({r.seconds:.0f}s)")
        singles.append(r)
    return SpecializationResult(cfg, moe, singles, corpus_seconds)
