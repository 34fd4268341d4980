"""Model checkpoints.

Layout (all integers little-endian): magic ``3DCP``, u8 version, u32
byte length of the UTF-8 network-config text block, the block itself,
u32 parameter count, then per parameter: u32 path length, the UTF-8
path, u8 rank, rank u32 extents, and the float32 payload.  Round trips
are bit-exact on the float32 parameter data.
"""

from __future__ import annotations

import struct

import numpy as np

from .autodiff import Tensor
from .errors import FormatError
from .network import NetworkConfig, config_from_text, config_to_text, parameter_shapes

CHECKPOINT_MAGIC = b"3DCP"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, params: dict, cfg: NetworkConfig) -> None:
    cfg_blob = config_to_text(cfg).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sBI", CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(cfg_blob)))
        fh.write(cfg_blob)
        fh.write(struct.pack("<I", len(params)))
        for key, tensor in params.items():
            name = key.encode("utf-8")
            value = np.ascontiguousarray(tensor.value, dtype="<f4")
            fh.write(struct.pack("<I", len(name)))
            fh.write(name)
            fh.write(struct.pack("<B", value.ndim))
            fh.write(struct.pack(f"<{value.ndim}I", *value.shape))
            fh.write(value.tobytes())


class _Reader:
    def __init__(self, blob, path):
        self.blob = blob
        self.path = path
        self.pos = 0

    def take(self, fmt):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.blob):
            raise FormatError(f"{self.path}: truncated checkpoint")
        out = struct.unpack_from(fmt, self.blob, self.pos)
        self.pos += size
        return out

    def raw(self, size):
        if self.pos + size > len(self.blob):
            raise FormatError(f"{self.path}: truncated checkpoint")
        out = self.blob[self.pos:self.pos + size]
        self.pos += size
        return out


def load_checkpoint(path):
    """Read (params, config); parameters come back ready to train."""
    with open(path, "rb") as fh:
        blob = fh.read()
    r = _Reader(blob, path)
    magic, version, cfg_len = r.take("<4sBI")
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    cfg = config_from_text(r.raw(cfg_len).decode("utf-8"))
    (count,) = r.take("<I")
    params = {}
    for _ in range(count):
        (name_len,) = r.take("<I")
        key = r.raw(name_len).decode("utf-8")
        (rank,) = r.take("<B")
        shape = r.take(f"<{rank}I") if rank else ()
        size = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(r.raw(4 * size), dtype="<f4").reshape(shape)
        params[key] = Tensor(data.astype(np.float32), requires_grad=True)

    expected = parameter_shapes(cfg)
    if set(params) != set(expected):
        missing = sorted(set(expected) - set(params)) + sorted(set(params) - set(expected))
        raise FormatError(f"{path}: parameter keys do not match config (first: {missing[0]})")
    for key, shape in expected.items():
        if tuple(params[key].shape) != tuple(shape):
            raise FormatError(f"{path}: parameter {key} has shape {params[key].shape}, "
                              f"config expects {shape}")
    return params, cfg
