"""Layer specifications and feed-forward networks built on the autograd core."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigError
from . import autograd as ag
from .autograd import Tensor

KINDS = ("conv3d", "inception3d", "maxpool3d", "dense", "relu", "softmax")


@dataclass(frozen=True)
class LayerSpec:
    """One layer.  ``kernel`` is an int for conv3d and a pair for inception3d."""

    kind: str
    channels: int | None = None
    kernel: int | tuple[int, int] | None = None
    units: int | None = None
    size: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown layer kind {self.kind!r}")
        if self.kind == "conv3d":
            if not (_pos(self.channels) and _pos(self.kernel)):
                raise ConfigError("conv3d needs positive channels and kernel")
        elif self.kind == "inception3d":
            k = self.kernel
            if not (isinstance(k, (tuple, list)) and len(k) == 2 and all(_pos(v) for v in k)):
                raise ConfigError("inception3d needs two positive kernel sizes")
            object.__setattr__(self, "kernel", tuple(int(v) for v in k))
            if not _pos(self.channels) or self.channels % 2:
                raise ConfigError("inception3d needs an even positive channel count")
        elif self.kind == "maxpool3d":
            if not _pos(self.size):
                raise ConfigError("maxpool3d needs a positive window size")
        elif self.kind == "dense":
            if not _pos(self.units):
                raise ConfigError("dense needs positive units")

    def __str__(self):
        if self.kind == "conv3d":
            return f"conv3d({self.kernel},{self.channels})"
        if self.kind == "inception3d":
            return f"inception3d({self.kernel[0]},{self.kernel[1]},{self.channels})"
        if self.kind == "maxpool3d":
            return f"maxpool3d({self.size})"
        if self.kind == "dense":
            return f"dense({self.units})"
        return self.kind

    def to_dict(self):
        d = {k: v for k, v in asdict(self).items() if v is not None}
        if isinstance(d.get("kernel"), tuple):
            d["kernel"] = list(d["kernel"])
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if isinstance(d.get("kernel"), list):
            d["kernel"] = tuple(d["kernel"])
        return cls(**d)


def _pos(v):
    return isinstance(v, (int, np.integer)) and v > 0


def conv3d(kernel, channels):
    return LayerSpec("conv3d", channels=channels, kernel=kernel)


def inception3d(k1, k2, channels):
    return LayerSpec("inception3d", channels=channels, kernel=(k1, k2))


def maxpool3d(size=2):
    return LayerSpec("maxpool3d", size=size)


def dense(units):
    return LayerSpec("dense", units=units)


def relu():
    return LayerSpec("relu")


def softmax():
    return LayerSpec("softmax")


def parse_layers(text: str) -> list[LayerSpec]:
    """Parse e.g. ``"inception3d(3,5,128) relu maxpool3d(2) dense(3)"``."""
    out = []
    for tok in text.replace(";", " ").split():
        name, _, rest = tok.partition("(")
        args = [int(a) for a in rest.rstrip(")").split(",") if a.strip()] if rest else []
        makers = {
            "conv3d": conv3d, "inception3d": inception3d, "maxpool3d": maxpool3d,
            "dense": dense, "relu": relu, "softmax": softmax,
        }
        if name not in makers:
            raise ConfigError(f"unknown layer {tok!r}")
        try:
            out.append(makers[name](*args))
        except TypeError as exc:
            raise ConfigError(f"bad arguments in {tok!r}") from exc
    return out


def _param_shapes(spec: LayerSpec, in_shape):
    if spec.kind == "conv3d":
        k = spec.kernel
        return [(spec.channels, in_shape[0], k, k, k), (spec.channels,)]
    if spec.kind == "inception3d":
        half = spec.channels // 2
        return [
            (half, in_shape[0]) + (spec.kernel[0],) * 3, (half,),
            (half, in_shape[0]) + (spec.kernel[1],) * 3, (half,),
        ]
    if spec.kind == "dense":
        return [(int(np.prod(in_shape)), spec.units), (spec.units,)]
    return []


def _out_shape(spec: LayerSpec, in_shape):
    if spec.kind in ("conv3d", "inception3d", "maxpool3d"):
        if len(in_shape) != 4:
            raise ConfigError(f"{spec} needs (C, D, H, W) input, got {in_shape}")
        if spec.kind == "maxpool3d":
            s = spec.size
            if any(d % s for d in in_shape[1:]):
                raise ConfigError(f"{spec} cannot tile spatial shape {in_shape[1:]}")
            return (in_shape[0],) + tuple(d // s for d in in_shape[1:])
        return (spec.channels,) + tuple(in_shape[1:])
    if spec.kind == "dense":
        return (spec.units,)
    return tuple(in_shape)


def infer_shapes(specs, input_shape):
    """Per-layer output shapes (without batch dim).  Raises naming the layer."""
    shapes, cur = [], tuple(input_shape)
    for i, spec in enumerate(specs):
        try:
            cur = _out_shape(spec, cur)
        except ConfigError as exc:
            raise ConfigError(f"layer {i} ({spec}): {exc}") from None
        shapes.append(cur)
    return shapes


def count_parameters(specs, input_shape) -> int:
    total, cur = 0, tuple(input_shape)
    for spec, out in zip(specs, infer_shapes(specs, input_shape)):
        total += sum(int(np.prod(s)) for s in _param_shapes(spec, cur))
        cur = out
    return total


def _glorot(rng, shape, dtype):
    if len(shape) == 2:
        fan_in, fan_out = shape
    else:
        rf = int(np.prod(shape[2:]))
        fan_in, fan_out = shape[1] * rf, shape[0] * rf
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Network:
    """A sequential stack of layers with its own parameters.

    Input is a single sample of ``input_shape`` or a batch with a leading
    batch dimension.  ``n_forward`` counts forward evaluations.
    """

    def __init__(self, specs, input_shape, seed=0, dtype=np.float64):
        self.specs = tuple(specs)
        self.input_shape = tuple(int(d) for d in input_shape)
        self.dtype = np.dtype(dtype)
        self.shapes = infer_shapes(self.specs, self.input_shape)
        rng = np.random.default_rng(seed)
        self.layer_params: list[list[Tensor]] = []
        cur = self.input_shape
        for spec, out in zip(self.specs, self.shapes):
            ps = []
            for shp in _param_shapes(spec, cur):
                if len(shp) == 1:
                    data = np.zeros(shp, dtype=self.dtype)
                else:
                    data = _glorot(rng, shp, self.dtype)
                ps.append(Tensor(data, requires_grad=True))
            self.layer_params.append(ps)
            cur = out
        self.n_forward = 0
        self._last = None

    @property
    def output_shape(self):
        return self.shapes[-1] if self.shapes else self.input_shape

    def parameters(self) -> list[Tensor]:
        return [p for ps in self.layer_params for p in ps]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def __call__(self, x):
        return forward(self, x)

    def __repr__(self):
        layers = " ".join(str(s) for s in self.specs)
        return f"Network({self.input_shape} -> {self.output_shape}: {layers})"


def _apply(spec, params, x: Tensor) -> Tensor:
    if spec.kind == "conv3d":
        return ag.conv3d(x, params[0], params[1])
    if spec.kind == "inception3d":
        a = ag.conv3d(x, params[0], params[1])
        b = ag.conv3d(x, params[2], params[3])
        return ag.concat([a, b], axis=1)
    if spec.kind == "maxpool3d":
        return ag.maxpool3d(x, spec.size)
    if spec.kind == "dense":
        if x.ndim > 2:
            x = x.reshape(x.shape[0], -1)
        return x @ params[0] + params[1]
    if spec.kind == "relu":
        return ag.relu(x)
    return ag.softmax(x, axis=-1)


def forward(net: Network, x) -> Tensor:
    """Run the network; the returned tensor carries the graph for backward."""
    t = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=net.dtype))
    if t.dtype != net.dtype:
        t = Tensor(t.data.astype(net.dtype)) if not t.requires_grad else t
    single = t.shape == net.input_shape
    if single:
        t = t.reshape((1,) + net.input_shape)
    elif t.shape[1:] != net.input_shape:
        first = net.specs[0] if net.specs else "input"
        raise ConfigError(
            f"layer 0 ({first}): input shape {t.shape} does not match {net.input_shape}"
        )
    inp = t
    for i, (spec, params) in enumerate(zip(net.specs, net.layer_params)):
        try:
            t = _apply(spec, params, t)
        except ConfigError as exc:
            raise ConfigError(f"layer {i} ({spec}): {exc}") from None
    if single:
        t = t.reshape(net.output_shape)
    net.n_forward += 1
    net._last = (inp, t)
    return t


def forward_prefix(net: Network, x, n_layers: int) -> np.ndarray:
    """Activations after the first ``n_layers`` layers of a batch (no graph kept)."""
    t = Tensor(np.asarray(x, dtype=net.dtype))
    if t.shape[1:] != net.input_shape:
        raise ConfigError(f"input shape {t.shape} does not match {net.input_shape}")
    for spec, params in zip(net.specs[:n_layers], net.layer_params[:n_layers]):
        t = _apply(spec, params, t)
    return t.data


def backward(net: Network, loss_gradient) -> list[np.ndarray]:
    """Backpropagate ``loss_gradient`` (d loss / d output) from the last forward."""
    if net._last is None:
        raise RuntimeError("backward called before forward")
    _, out = net._last
    net.zero_grad()
    g = loss_gradient.data if isinstance(loss_gradient, Tensor) else np.asarray(loss_gradient)
    out.backward(g.astype(out.dtype))
    return [p.grad if p.grad is not None else np.zeros_like(p.data) for p in net.parameters()]
