"""Mixture-of-experts normal estimator over MuPS features.

A gate network sees the full multi-scale tensor and emits a softmax over
experts; each expert sees the channels of the scales it is wired to and
regresses a 3-vector.  Training minimizes sum_i q_i * sin(angle(N_i, N_gt));
inference evaluates only the expert with the largest q.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, NumericError
from .fv import (
    N_CHANNELS,
    MupsFeature,
    apply_symmetry,
    grid_symmetries,
    orbit_standardization,
    symmetry_matrix,
)
from .metrics import angle_errors, sin_errors
from .tensor import autograd as ag
from .tensor.autograd import Tensor
from .tensor.checkpoint import load_network, save_network
from .tensor.network import (
    Network,
    conv3d,
    count_parameters,
    dense,
    forward,
    forward_prefix,
    inception3d,
    maxpool3d,
    relu,
    softmax,
)
from .tensor.optim import Adam, AdamConfig

COLLAPSE_TOL = 1e-12


# -- architecture presets --------------------------------------------------------

def _inception_trunk(second_kernel):
    return [
        inception3d(3, 5, 128), relu(),
        inception3d(3, 5, 256), relu(),
        inception3d(3, 5, 256), relu(),
        maxpool3d(2),
        inception3d(3, second_kernel, 512), relu(),
        inception3d(3, second_kernel, 512), relu(),
        maxpool3d(2),
        dense(1024), relu(), dense(256), relu(), dense(128), relu(),
    ]


# Single-scale (ss) and multi-scale (ms) ablation networks at m = 8.
ABLATIONS = {
    "ss": _inception_trunk(5) + [dense(3)],
    "ms": _inception_trunk(4) + [dense(3)],
}
# Switching variant: noise regressor + per-noise-level normal nets.  The
# supervised noise labels it needs are not modeled; layers only.
MS_SW = {
    "noise_net": _inception_trunk(5) + [dense(1)],
    "normal_net": _inception_trunk(4) + [dense(3)],
    "threshold": None,
}


def _small(width, hidden):
    return [conv3d(3, width), relu(), maxpool3d(2), dense(hidden), relu()]


def expert_layers(preset: str, n_inputs: int) -> list:
    """Layers of one expert that sees ``n_inputs`` scales."""
    if preset == "tiny":
        return [conv3d(3, 4), relu(), maxpool3d(2), dense(3)]
    if preset == "desk":
        return _small(32, 128) + [dense(3)]
    if preset == "paper":
        return list(ABLATIONS["ss"] if n_inputs == 1 else ABLATIONS["ms"])
    raise ConfigError(f"unknown network preset {preset!r}")


def gate_layers(preset: str, n_experts: int) -> list:
    if preset == "tiny":
        return [conv3d(3, 4), relu(), maxpool3d(2), dense(n_experts), softmax()]
    if preset == "desk":
        return _small(32, 128) + [dense(n_experts), softmax()]
    if preset == "paper":
        return _inception_trunk(4) + [dense(n_experts), softmax()]
    raise ConfigError(f"unknown network preset {preset!r}")


# -- configuration ---------------------------------------------------------------

@dataclass(frozen=True)
class MoeConfig:
    scales: tuple = (0.01, 0.03, 0.05)
    expert_wiring: tuple = ((0,), (1,), (2,))
    m: int = 4
    t_max: int = 512
    gate_preset: str = "desk"
    expert_preset: str = "desk"
    seed: int = 0
    dtype: str = "float32"
    # zero the gate's output layer so training starts from a uniform mixture
    uniform_gate_init: bool = True

    def __post_init__(self):
        scales = tuple(float(s) for s in self.scales)
        if not scales:
            raise ConfigError("at least one scale is required")
        if any(b < a for a, b in zip(scales, scales[1:])):
            raise ConfigError("scales must be sorted ascending")
        n = len(scales)
        wiring = []
        for w in self.expert_wiring:
            if w == "all":
                w = tuple(range(n))
            w = tuple(int(i) for i in w)
            if not w or any(not 0 <= i < n for i in w):
                raise ConfigError(f"invalid expert wiring {w} for {n} scales")
            wiring.append(w)
        if not wiring:
            raise ConfigError("at least one expert is required")
        fed = {i for w in wiring for i in w}
        if fed != set(range(n)):
            raise ConfigError(f"scales {sorted(set(range(n)) - fed)} feed no expert")
        object.__setattr__(self, "scales", scales)
        object.__setattr__(self, "expert_wiring", tuple(wiring))
        if self.m < 1 or self.t_max < 1:
            raise ConfigError("m and t_max must be positive")

    @property
    def n_scales(self):
        return len(self.scales)

    @property
    def n_experts(self):
        return len(self.expert_wiring)

    @classmethod
    def desk(cls, seed=0, **kw):
        """Three experts, one per scale, on a 4^3 grid with 256-point patches."""
        kw.setdefault("t_max", 256)
        return cls(seed=seed, **kw)

    @classmethod
    def paper(cls, seed=0):
        """Seven experts: two per scale and one on all scales, 8^3 grid."""
        return cls(
            expert_wiring=((0,), (0,), (1,), (1,), (2,), (2,), "all"),
            m=8, t_max=512, gate_preset="paper", expert_preset="paper",
            seed=seed, dtype="float32",
        )

    def to_dict(self):
        d = asdict(self)
        d["scales"] = list(self.scales)
        d["expert_wiring"] = [list(w) for w in self.expert_wiring]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["scales"] = tuple(d["scales"])
        d["expert_wiring"] = tuple(tuple(w) for w in d["expert_wiring"])
        return cls(**d)

    def parameter_counts(self):
        """(gate, [experts]) parameter counts without allocating weights."""
        m = self.m
        gate = count_parameters(
            gate_layers(self.gate_preset, self.n_experts), (self.n_scales * N_CHANNELS, m, m, m)
        )
        experts = [
            count_parameters(expert_layers(self.expert_preset, len(w)), (len(w) * N_CHANNELS, m, m, m))
            for w in self.expert_wiring
        ]
        return gate, experts


# PCPNet training regimen: 1024 samples x 32 shapes per epoch, 512-point patches.
PCPNET_REGIMEN = {"samples_per_epoch": 32_768, "t_max": 512, "m": 8, "noise_levels": (0.0, 0.00125, 0.006, 0.012)}


# -- model ------------------------------------------------------------------------

class MoeModel:
    def __init__(self, config: MoeConfig, gate: Network | None = None, experts=None):
        self.config = config
        c = config
        m = c.m
        if gate is None:
            gate = Network(
                gate_layers(c.gate_preset, c.n_experts),
                (c.n_scales * N_CHANNELS, m, m, m), seed=c.seed, dtype=c.dtype,
            )
            if c.uniform_gate_init:
                # a randomly initialized gate is already peaked and hands one
                # expert nearly all the gradient before the others can learn
                for t in gate.layer_params[-2]:
                    t.data[:] = 0
        if experts is None:
            experts = [
                Network(
                    expert_layers(c.expert_preset, len(w)),
                    (len(w) * N_CHANNELS, m, m, m), seed=c.seed + 1 + i, dtype=c.dtype,
                )
                for i, w in enumerate(c.expert_wiring)
            ]
        if gate.output_shape != (c.n_experts,):
            raise ConfigError(f"gate emits {gate.output_shape}, expected ({c.n_experts},)")
        for e in experts:
            if e.output_shape != (3,):
                raise ConfigError(f"expert emits {e.output_shape}, expected (3,)")
        self.gate = gate
        self.experts = list(experts)
        self._channels = [
            np.concatenate([np.arange(s * N_CHANNELS, (s + 1) * N_CHANNELS) for s in w])
            for w in c.expert_wiring
        ]
        self.input_shift = None
        self.input_scale = None

    @property
    def n_experts(self):
        return len(self.experts)

    @property
    def dtype(self):
        return self.gate.dtype

    def parameters(self):
        ps = self.gate.parameters()
        for e in self.experts:
            ps += e.parameters()
        return ps

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def expert_input(self, X, i):
        """Channels of the scales wired to expert ``i``; X is (B, n*20, m, m, m)."""
        idx = self._channels[i]
        if len(idx) == X.shape[1]:
            return X
        return X[:, idx]

    def set_standardization(self, shift, scale):
        """Per-channel ``(x - shift) / scale`` applied to every input; None clears it."""
        if shift is None:
            self.input_shift = self.input_scale = None
            return
        C = self.config.n_scales * N_CHANNELS
        shift = np.asarray(shift, dtype=np.float64).reshape(-1)
        scale = np.asarray(scale, dtype=np.float64).reshape(-1)
        if shift.shape != (C,) or scale.shape != (C,):
            raise ConfigError(f"standardization needs {C} channels")
        if not (np.all(np.isfinite(shift)) and np.all(scale > 0)):
            raise ConfigError("standardization scale must be positive and finite")
        self.input_shift, self.input_scale = shift, scale

    def inputs(self, features):
        """Validated, standardized (B, n*20, m, m, m) network input."""
        X = self._as_batch(features)
        if self.input_shift is None:
            return X
        s = (slice(None),) + (None,) * 3
        return ((X - self.input_shift[s]) / self.input_scale[s]).astype(self.dtype)

    def _as_batch(self, features):
        if isinstance(features, MupsFeature):
            features = features.tensor[None]
        X = np.asarray(features, dtype=self.dtype)
        expected = (self.config.n_scales * N_CHANNELS,) + (self.config.m,) * 3
        if X.shape == expected:
            X = X[None]
        if X.shape[1:] != expected:
            raise DataError(f"feature shape {X.shape[1:]} does not match model input {expected}")
        return X


# -- loss -------------------------------------------------------------------------

def specialization_loss(q, normals, target):
    """Loss value and per-expert sin distances for one sample (numpy).

    ``q``: (E,) gate probabilities; ``normals``: (E, 3) expert outputs.
    """
    q = np.asarray(q, dtype=np.float64)
    N = np.asarray(normals, dtype=np.float64)
    g = np.asarray(target, dtype=np.float64)
    nn = np.linalg.norm(N, axis=-1)
    if np.any(nn < COLLAPSE_TOL):
        raise NumericError("collapsed expert output")
    d = np.linalg.norm(np.cross(N, g), axis=-1) / (nn * np.linalg.norm(g))
    return float(np.sum(q * d)), d


def _loss_graph(model: MoeModel, X, targets):
    """(mean loss Tensor, per-sample losses, D (B, E), q (B, E))."""
    B = X.shape[0]
    q = forward(model.gate, X)
    outs = [forward(e, model.expert_input(X, i)).reshape(B, 1, 3) for i, e in enumerate(model.experts)]
    N = ag.concat(outs, axis=1)
    g = Tensor(np.asarray(targets, dtype=model.dtype)[:, None, :])
    n_norm = ag.norm(N)
    if np.any(n_norm.data < COLLAPSE_TOL):
        b, i = np.argwhere(n_norm.data < COLLAPSE_TOL)[0]
        raise NumericError(f"collapsed expert output (sample {b}, expert {i})")
    D = ag.norm(ag.cross(N, g)) / (n_norm * ag.norm(g))
    per_sample = (q * D).sum(axis=1)
    return per_sample.mean(), per_sample.data, D.data, q.data


def moe_loss(model: MoeModel, feature, target):
    """Loss and per-expert D_N for one sample, all experts evaluated."""
    X = model.inputs(feature)
    g = np.asarray(target, dtype=np.float64).reshape(1, 3)
    loss, _, D, _ = _loss_graph(model, X, g)
    return float(loss.data), D[0].astype(np.float64)


def batch_loss(model: MoeModel, X, targets) -> Tensor:
    """Differentiable mean loss over a batch (used for gradient checks)."""
    return _loss_graph(model, model.inputs(X), targets)[0]


@dataclass(frozen=True, eq=False)
class TrainBatch:
    features: np.ndarray = field(repr=False)
    targets: np.ndarray = field(repr=False)

    def __post_init__(self):
        f = np.asarray(self.features)
        t = np.asarray(self.targets, dtype=np.float64).reshape(-1, 3)
        if len(f) != len(t):
            raise DataError(f"{len(f)} features but {len(t)} targets")
        if len(f) == 0:
            raise DataError("empty batch")
        if np.any(np.abs(np.linalg.norm(t, axis=1) - 1.0) > 1e-6):
            raise DataError("targets must be unit normals")
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "targets", t)

    @classmethod
    def from_features(cls, features, targets):
        return cls(np.stack([f.tensor for f in features]), targets)

    def __len__(self):
        return len(self.targets)


def make_optimizer(model: MoeModel, config: AdamConfig = AdamConfig(), gate_lr_scale: float = 1.0) -> Adam:
    """Joint optimizer; the gate's step size is ``gate_lr_scale`` times the experts'."""
    n_gate = len(model.gate.parameters())
    scales = [gate_lr_scale] * n_gate + [1.0] * (len(model.parameters()) - n_gate)
    return Adam(model.parameters(), config, lr_scales=scales)


def train_step(model: MoeModel, batch: TrainBatch, optimizer: Adam) -> float:
    """One joint gate+experts Adam step on the batch mean loss."""
    X = model.inputs(batch.features)
    model.zero_grad()
    loss, per_sample, _, _ = _loss_graph(model, X, batch.targets)
    bad = np.flatnonzero(~np.isfinite(per_sample))
    if bad.size:
        raise NumericError(f"non-finite loss at sample {bad[0]}")
    loss.backward()
    optimizer.step()
    return float(loss.data)


_SYMMETRIES = grid_symmetries()
_SYM_MATRICES = np.stack([symmetry_matrix(p, s) for p, s in _SYMMETRIES])


def augment_batch(X, Y, rng: np.random.Generator):
    """Apply an independent random lattice symmetry to every sample.

    Features and target normals are transformed consistently, so the result
    is what encoding the transformed neighborhoods would have produced.
    """
    picks = rng.integers(len(_SYMMETRIES), size=len(X))
    Xa = np.empty_like(X)
    for b, k in enumerate(picks):
        Xa[b] = apply_symmetry(X[b], *_SYMMETRIES[k])
    Ya = np.einsum("bij,bj->bi", _SYM_MATRICES[picks], Y)
    return Xa, Ya


def train(
    model: MoeModel,
    features,
    targets,
    epochs: int,
    batch_size: int = 32,
    optimizer: Adam | None = None,
    rng: np.random.Generator | None = None,
    callback=None,
    augment: bool = False,
    schedule: str | None = None,
) -> list[float]:
    """Shuffled mini-batch training; returns the mean loss of every epoch.

    With ``augment`` each mini-batch is passed through random lattice
    symmetries (see ``augment_batch``).  ``schedule="cosine"`` anneals the
    learning rate from its configured value to zero over the run.
    """
    if schedule not in (None, "cosine"):
        raise ConfigError(f"unknown schedule {schedule!r}")
    X = np.asarray(features, dtype=model.dtype)
    Y = np.asarray(targets, dtype=np.float64)
    TrainBatch(X[:1], Y[:1])
    optimizer = optimizer or make_optimizer(model)
    rng = rng or np.random.default_rng(model.config.seed)
    history = []
    for epoch in range(epochs):
        if schedule == "cosine":
            optimizer.lr_factor = 0.5 * (1.0 + np.cos(np.pi * epoch / epochs))
        order = rng.permutation(len(X))
        total = 0.0
        for start in range(0, len(X), batch_size):
            sel = order[start:start + batch_size]
            xb, yb = X[sel], Y[sel]
            if augment:
                xb, yb = augment_batch(xb, yb, rng)
            total += train_step(model, TrainBatch(xb, yb), optimizer) * len(sel)
        history.append(total / len(X))
        if callback is not None:
            callback(epoch, history[-1])
    return history


def expert_errors(model: MoeModel, features, targets, chunk: int = 256) -> np.ndarray:
    """(B, E) sin distance of every expert's output to the targets."""
    return _expert_errors(model, model.inputs(features), targets, chunk)


def _expert_errors(model, X, targets, chunk=256):
    Y = np.asarray(targets, dtype=np.float64).reshape(-1, 3)
    D = np.empty((len(X), model.n_experts))
    for s in range(0, len(X), chunk):
        xb = X[s:s + chunk]
        for i, e in enumerate(model.experts):
            n = forward(e, model.expert_input(xb, i)).data.astype(np.float64)
            D[s:s + chunk, i] = sin_errors(n, Y[s:s + chunk])
    return D


def fit_gate_head(
    model: MoeModel,
    features,
    targets,
    epochs: int = 10,
    batch_size: int = 32,
    lr: float = 1e-3,
    rng: np.random.Generator | None = None,
) -> list[float]:
    """Fit the gate's output layer to frozen experts under the mixture loss.

    The trunk activations are centered before fitting and the shift is folded
    back into the bias, so the gate keeps its architecture.  Uncentered ReLU
    features share a large positive component; the loss then drives every
    sample toward the expert with the lowest average error and the softmax
    saturates before per-sample routing forms.
    """
    gate = model.gate
    if model.n_experts == 1:
        return []
    if gate.specs[-1].kind != "softmax" or gate.specs[-2].kind != "dense":
        raise ConfigError("gate must end in dense + softmax")
    rng = rng or np.random.default_rng(model.config.seed)
    X = model.inputs(features)
    D = _expert_errors(model, X, targets)
    H = np.concatenate([
        forward_prefix(gate, X[s:s + 256], len(gate.specs) - 2).reshape(len(X[s:s + 256]), -1)
        for s in range(0, len(X), 256)
    ]).astype(np.float64)
    mu = H.mean(axis=0)
    H -= mu
    w, b = gate.layer_params[-2]
    W = Tensor(w.data.astype(np.float64), requires_grad=True)
    c = Tensor((b.data + w.data.T @ mu.astype(w.dtype)).astype(np.float64), requires_grad=True)
    opt = Adam([W, c], AdamConfig(lr=lr))
    history = []
    for _ in range(epochs):
        order = rng.permutation(len(H))
        total = 0.0
        for s in range(0, len(H), batch_size):
            sel = order[s:s + batch_size]
            W.grad = c.grad = None
            q = ag.softmax(Tensor(H[sel]) @ W + c, axis=-1)
            loss = (q * Tensor(D[sel])).sum(axis=1).mean()
            loss.backward()
            opt.step()
            total += float(loss.data) * len(sel)
        history.append(total / len(H))
    w.data[:] = W.data
    b.data[:] = c.data - W.data.T @ mu
    return history


@dataclass(frozen=True)
class StagedSchedule:
    """Three-stage recipe: experts alone, gate head alone, then jointly.

    Each stage starts a fresh Adam; the first and last anneal by cosine.
    """

    expert_epochs: int = 10
    expert_lr: float = 3e-3
    head_epochs: int = 10
    head_lr: float = 1e-3
    joint_epochs: int = 20
    joint_lr: float = 2e-3
    gate_lr_scale: float = 0.03
    # standardize input channels with symmetry-consistent training statistics
    standardize: bool = True

    def __post_init__(self):
        if min(self.expert_epochs, self.head_epochs, self.joint_epochs) < 0:
            raise ConfigError("stage epochs must be non-negative")
        if min(self.expert_lr, self.head_lr, self.joint_lr) <= 0 or self.gate_lr_scale < 0:
            raise ConfigError("learning rates must be positive")

    @property
    def epochs(self):
        return self.expert_epochs + self.head_epochs + self.joint_epochs


def train_staged(
    model: MoeModel,
    features,
    targets,
    schedule: StagedSchedule = StagedSchedule(),
    batch_size: int = 32,
    rng: np.random.Generator | None = None,
    augment: bool = True,
    callback=None,
) -> list[float]:
    """Train with ``schedule``; returns one loss per epoch over all stages.

    The gate is frozen while the experts learn from its initial mixture
    (uniform by default), so every expert sees every sample before routing
    begins.  With a single expert the head stage is skipped.  With
    ``schedule.standardize`` the model's input standardization is first set
    from ``features``.
    """
    rng = rng or np.random.default_rng(model.config.seed)
    history = []

    def log(_, loss):
        history.append(loss)
        if callback is not None:
            callback(len(history) - 1, loss)

    s = schedule
    if s.standardize:
        model.set_standardization(*orbit_standardization(model._as_batch(features)))
    kw = dict(batch_size=batch_size, rng=rng, augment=augment, schedule="cosine", callback=log)
    if s.expert_epochs:
        opt = make_optimizer(model, AdamConfig(lr=s.expert_lr), gate_lr_scale=0.0)
        train(model, features, targets, s.expert_epochs, optimizer=opt, **kw)
    if s.head_epochs and model.n_experts > 1:
        for loss in fit_gate_head(model, features, targets, s.head_epochs, batch_size, s.head_lr, rng):
            log(None, loss)
    if s.joint_epochs:
        opt = make_optimizer(model, AdamConfig(lr=s.joint_lr), gate_lr_scale=s.gate_lr_scale)
        train(model, features, targets, s.joint_epochs, optimizer=opt, **kw)
    return history


# -- inference ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Prediction:
    normal: np.ndarray
    expert_index: int
    q: np.ndarray


def _unit(v):
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(n < COLLAPSE_TOL):
        raise NumericError("collapsed expert output")
    return v / n


def predict_normal(model: MoeModel, feature) -> Prediction:
    """Route to argmax q (lowest index on ties) and evaluate only that expert."""
    X = model.inputs(feature)
    q = forward(model.gate, X).data[0].astype(np.float64)
    i = int(np.argmax(q))
    out = forward(model.experts[i], model.expert_input(X, i)).data[0].astype(np.float64)
    return Prediction(_unit(out), i, q)


def predict_batch(model: MoeModel, features, chunk: int = 256):
    """Vectorized argmax-gated inference; each sample hits exactly one expert.

    Returns (normals (B, 3), expert_index (B,), q (B, E)).
    """
    X = model.inputs(features)
    B = len(X)
    q = np.empty((B, model.n_experts))
    for s in range(0, B, chunk):
        q[s:s + chunk] = forward(model.gate, X[s:s + chunk]).data
    choice = np.argmax(q, axis=1)
    normals = np.empty((B, 3))
    for i in range(model.n_experts):
        sel = np.flatnonzero(choice == i)
        for s in range(0, len(sel), chunk):
            part = sel[s:s + chunk]
            normals[part] = forward(model.experts[i], model.expert_input(X[part], i)).data
    return _unit(normals), choice, q


@dataclass(frozen=True)
class ExpertStats:
    count: int
    mean_error_deg: float


def expert_stats(model: MoeModel, features, targets) -> list[ExpertStats]:
    """Points routed to each expert and their mean unoriented error.

    Experts that receive no points report a NaN mean error.
    """
    X = model._as_batch(features)
    if len(X) == 0:
        raise DataError("empty dataset")
    normals, choice, _ = predict_batch(model, X)
    errs = angle_errors(normals, np.asarray(targets).reshape(-1, 3))
    out = []
    for i in range(model.n_experts):
        sel = choice == i
        mean = float(errs[sel].mean()) if sel.any() else float("nan")
        out.append(ExpertStats(int(sel.sum()), mean))
    return out


# -- persistence ----------------------------------------------------------------------

def save_model(model: MoeModel, directory):
    """Write gate/expert checkpoints plus a ``config.json`` sidecar."""
    d = Path(directory)
    os.makedirs(d, exist_ok=True)
    save_network(model.gate, d / "gate.nstn")
    for i, e in enumerate(model.experts):
        save_network(e, d / f"expert_{i}.nstn")
    with open(d / "config.json", "w") as fh:
        json.dump(model.config.to_dict(), fh, indent=2, sort_keys=True)
    norm = d / "standardization.json"
    if model.input_shift is not None:
        with open(norm, "w") as fh:
            json.dump({"shift": model.input_shift.tolist(), "scale": model.input_scale.tolist()}, fh)
    elif norm.exists():
        norm.unlink()


def load_model(directory) -> MoeModel:
    d = Path(directory)
    cfg_path = d / "config.json"
    if not cfg_path.exists():
        raise DataError(f"{d}: missing config.json")
    with open(cfg_path) as fh:
        config = MoeConfig.from_dict(json.load(fh))
    gate = load_network(d / "gate.nstn")
    experts = [load_network(d / f"expert_{i}.nstn") for i in range(config.n_experts)]
    model = MoeModel(config, gate, experts)
    norm = d / "standardization.json"
    if norm.exists():
        try:
            with open(norm) as fh:
                stats = json.load(fh)
            model.set_standardization(stats["shift"], stats["scale"])
        except (ValueError, KeyError, ConfigError) as exc:
            raise DataError(f"{norm}: {exc}") from None
    return model
