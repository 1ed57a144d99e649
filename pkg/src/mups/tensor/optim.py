"""Adam optimizer and finite-difference gradient checking."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NumericError
from .autograd import Tensor
from .network import Network, backward, forward


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


class Adam:
    """Adam with optional per-parameter learning-rate multipliers.

    ``lr_factor`` scales every step and is what schedules adjust.
    """

    def __init__(self, params: list[Tensor], config: AdamConfig = AdamConfig(), lr_scales=None):
        self.params = list(params)
        self.config = config
        self.lr_scales = [1.0] * len(self.params) if lr_scales is None else list(lr_scales)
        if len(self.lr_scales) != len(self.params):
            raise ValueError("one lr scale per parameter is required")
        self.lr_factor = 1.0
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, grads=None):
        """Update parameters in place; ``grads`` defaults to each ``p.grad``."""
        if grads is None:
            grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        if len(grads) != len(self.params):
            raise ValueError(f"got {len(grads)} gradients for {len(self.params)} parameters")
        for p, g in zip(self.params, grads):
            if np.shape(g) != p.shape:
                raise ValueError(f"gradient shape {np.shape(g)} != parameter shape {p.shape}")
            if not np.all(np.isfinite(g)):
                raise NumericError("non-finite gradient")
        c = self.config
        self.t += 1
        bc1 = 1.0 - c.beta1**self.t
        bc2 = 1.0 - c.beta2**self.t
        for p, g, m, v, scale in zip(self.params, grads, self.m, self.v, self.lr_scales):
            lr = c.lr * self.lr_factor * scale
            g = np.asarray(g, dtype=p.dtype)
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            p.data -= (lr * (m / bc1) / (np.sqrt(v / bc2) + c.eps)).astype(p.dtype)


def optimizer_step(net: Network, gradients, optimizer: Adam) -> Network:
    optimizer.step(gradients)
    return net


def check_gradients(params: list[Tensor], loss_fn, step=1e-5, floor=1e-6):
    """Max relative error between autograd and central differences.

    ``loss_fn()`` must rebuild the graph from the current parameter values and
    return a scalar Tensor.  Relative error is ``|a - n| / max(|a|, |n|, floor)``.
    """
    for p in params:
        p.grad = None
    loss_fn().backward()
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params]
    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        af = a.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = float(loss_fn().data)
            flat[i] = orig - step
            down = float(loss_fn().data)
            flat[i] = orig
            num = (up - down) / (2.0 * step)
            err = abs(af[i] - num) / max(abs(af[i]), abs(num), floor)
            worst = max(worst, err)
    return worst


def grad_check(net: Network, x, loss, step=1e-5) -> float:
    """Check ``loss(forward(net, x))`` gradients for every parameter of ``net``."""
    def closure():
        return loss(forward(net, x))

    closure()
    # exercise the network-level backward path as well
    out = net._last[1]
    backward(net, np.zeros(out.shape))
    return check_gradients(net.parameters(), closure, step)
