"""Binary network checkpoints.

Layout (little-endian)::

    "NSTN" u32 version u32 layer_count
    u32 len + JSON {input_shape, dtype}
    per layer: u32 len + JSON layer spec, u32 n_params,
               per param: u32 ndim, ndim x u32 dims, float32 data
"""

from __future__ import annotations

import io
import json
import struct

import numpy as np

from ..errors import DataError
from .autograd import Tensor
from .network import LayerSpec, Network

MAGIC = b"NSTN"
VERSION = 1
_U32 = struct.Struct("<I")


def _put_json(buf, obj):
    raw = json.dumps(obj, sort_keys=True).encode()
    buf.write(_U32.pack(len(raw)))
    buf.write(raw)


def _get(buf, n):
    raw = buf.read(n)
    if len(raw) != n:
        raise DataError("truncated checkpoint")
    return raw


def _get_u32(buf):
    return _U32.unpack(_get(buf, 4))[0]


def _get_json(buf):
    return json.loads(_get(buf, _get_u32(buf)))


def to_bytes(net: Network) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(_U32.pack(VERSION))
    buf.write(_U32.pack(len(net.specs)))
    _put_json(buf, {"input_shape": list(net.input_shape), "dtype": net.dtype.name})
    for spec, params in zip(net.specs, net.layer_params):
        _put_json(buf, spec.to_dict())
        buf.write(_U32.pack(len(params)))
        for p in params:
            buf.write(_U32.pack(p.ndim))
            for d in p.shape:
                buf.write(_U32.pack(d))
            buf.write(p.data.astype("<f4").tobytes(order="C"))
    return buf.getvalue()


def from_bytes(raw: bytes) -> Network:
    buf = io.BytesIO(raw)
    if _get(buf, 4) != MAGIC:
        raise DataError("not a network checkpoint (bad magic)")
    version = _get_u32(buf)
    if version != VERSION:
        raise DataError(f"unsupported checkpoint version {version}")
    n_layers = _get_u32(buf)
    meta = _get_json(buf)
    specs, blobs = [], []
    for _ in range(n_layers):
        specs.append(LayerSpec.from_dict(_get_json(buf)))
        params = []
        for _ in range(_get_u32(buf)):
            shape = tuple(_get_u32(buf) for _ in range(_get_u32(buf)))
            count = int(np.prod(shape))
            params.append(np.frombuffer(_get(buf, 4 * count), dtype="<f4").reshape(shape))
        blobs.append(params)
    if buf.read(1):
        raise DataError("trailing bytes in checkpoint")
    net = Network(specs, meta["input_shape"], dtype=meta["dtype"])
    for ps, arrays in zip(net.layer_params, blobs):
        if [p.shape for p in ps] != [a.shape for a in arrays]:
            raise DataError("checkpoint parameter shapes do not match layer specs")
        for p, a in zip(ps, arrays):
            p.data = a.astype(net.dtype)
    return net


def save_network(net: Network, path):
    with open(path, "wb") as fh:
        fh.write(to_bytes(net))


def load_network(path) -> Network:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
