"""Minimal reverse-mode autodiff with the 3D CNN layer set used by the estimator."""

from .autograd import Tensor, concat, conv3d as conv3d_op, cross, maxpool3d as maxpool3d_op, norm, relu as relu_op, softmax as softmax_op
from .checkpoint import load_network, save_network
from .network import (
    LayerSpec,
    Network,
    backward,
    conv3d,
    count_parameters,
    dense,
    forward,
    forward_prefix,
    inception3d,
    infer_shapes,
    maxpool3d,
    parse_layers,
    relu,
    softmax,
)
from .optim import Adam, AdamConfig, check_gradients, grad_check, optimizer_step

__all__ = [
    "Adam", "AdamConfig", "LayerSpec", "Network", "Tensor", "backward", "check_gradients",
    "concat", "conv3d", "conv3d_op", "count_parameters", "cross", "dense", "forward",
    "forward_prefix", "grad_check", "inception3d", "infer_shapes", "load_network", "maxpool3d",
    "maxpool3d_op",
    "norm", "optimizer_step", "parse_layers", "relu", "relu_op", "save_network", "softmax",
    "softmax_op",
]
