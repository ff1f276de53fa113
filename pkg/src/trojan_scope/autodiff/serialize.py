"""Binary weight files.

Layout: magic ``b"TSCP"``, format version (u32 LE), parameterized-layer count
(u32 LE), then one blob per parameterized layer holding that layer's
parameters (weight then bias) as little-endian float32, in declaration order.
Shapes and architecture live in a JSON document next to the blob.
"""
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"TSCP"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sII")


class WeightFormatError(ValueError):
    pass


def pack_weights(layers):
    """``layers`` is a list of parameter lists (one per parameterized layer)."""
    parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, len(layers))]
    for params in layers:
        for p in params:
            parts.append(np.ascontiguousarray(p, dtype="<f4").tobytes())
    return b"".join(parts)


def unpack_weights(blob, layer_shapes):
    """Inverse of :func:`pack_weights`; ``layer_shapes`` mirrors the nesting."""
    if len(blob) < _HEADER.size:
        raise WeightFormatError("weight file truncated before header")
    magic, version, count = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise WeightFormatError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise WeightFormatError(f"unsupported format version {version}")
    if count != len(layer_shapes):
        raise WeightFormatError(f"file has {count} layers, metadata expects {len(layer_shapes)}")
    expected = _HEADER.size + 4 * sum(int(np.prod(s)) for shapes in layer_shapes for s in shapes)
    if len(blob) != expected:
        raise WeightFormatError(f"weight file is {len(blob)} bytes, expected {expected}")
    offset = _HEADER.size
    out = []
    for shapes in layer_shapes:
        params = []
        for shape in shapes:
            n = int(np.prod(shape))
            params.append(np.frombuffer(blob, dtype="<f4", count=n, offset=offset).reshape(shape).astype(np.float32))
            offset += 4 * n
        out.append(params)
    return out


def save_network(net, directory, extra_meta=None):
    """Write ``weights.bin`` and ``meta.json`` for a :class:`Network`."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    layers = [[p.data for p in layer.params] for layer in net.param_layers()]
    (directory / "weights.bin").write_bytes(pack_weights(layers))
    meta = net.metadata()
    meta["format"] = {"magic": MAGIC.decode(), "version": FORMAT_VERSION}
    if extra_meta:
        meta.update(extra_meta)
    (directory / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return meta


def load_network(directory):
    from .network import Network

    directory = Path(directory)
    meta = json.loads((directory / "meta.json").read_text())
    net = Network(meta["layers"], meta["input_shape"], seed=meta["seed"], arch_id=meta["architecture"])
    shapes = [[p.shape for p in layer.params] for layer in net.param_layers()]
    arrays = unpack_weights((directory / "weights.bin").read_bytes(), shapes)
    for layer, values in zip(net.param_layers(), arrays):
        for p, v in zip(layer.params, values):
            p.data = v
    return net, meta
