"""Binary model checkpoints.

Layout (all integers little-endian uint64, all parameters little-endian
float64)::

    b"BLEFPM1\\0"
    n_arrays
    per array: ndim, dims..., payload
    footer_len, footer (UTF-8 JSON: config, input shape, array names)

Arrays are written in ``params`` order followed by ``buffers`` order.
"""

import json
import struct

import numpy as np

from ..errors import MalformedFile
from .model import Model, NetworkConfig

MAGIC = b"BLEFPM1\0"
FORMAT_VERSION = 1


def _u64(fh, value):
    fh.write(struct.pack("<Q", int(value)))


def _read_u64(fh):
    raw = fh.read(8)
    if len(raw) != 8:
        raise MalformedFile("truncated checkpoint")
    return struct.unpack("<Q", raw)[0]


def save_model(model: Model, path) -> None:
    arrays = list(model.params.items()) + list(model.buffers.items())
    footer = json.dumps({
        "version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "in_channels": model.in_channels,
        "in_length": model.in_length,
        "params": list(model.params),
        "buffers": list(model.buffers),
        "history": model.history,
    }, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        _u64(fh, len(arrays))
        for _, arr in arrays:
            _u64(fh, arr.ndim)
            for d in arr.shape:
                _u64(fh, d)
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        _u64(fh, len(footer))
        fh.write(footer)


def load_model(path) -> Model:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise MalformedFile(f"{path}: not a blefp model checkpoint")
        arrays = []
        for _ in range(_read_u64(fh)):
            shape = tuple(_read_u64(fh) for _ in range(_read_u64(fh)))
            n = int(np.prod(shape, dtype=np.int64))
            raw = fh.read(8 * n)
            if len(raw) != 8 * n:
                raise MalformedFile("truncated parameter payload")
            arrays.append(np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64))
        footer_len = _read_u64(fh)
        try:
            meta = json.loads(fh.read(footer_len).decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise MalformedFile(f"bad checkpoint footer: {exc}") from exc
    names = meta["params"] + meta["buffers"]
    if len(names) != len(arrays):
        raise MalformedFile("footer names do not match array count")
    model = Model(NetworkConfig.from_dict(meta["config"]), meta["in_channels"], meta["in_length"],
                  history=list(meta.get("history", [])))
    for name, arr in zip(names, arrays):
        target = model.params if name in meta["params"] else model.buffers
        target[name] = arr
    return model
