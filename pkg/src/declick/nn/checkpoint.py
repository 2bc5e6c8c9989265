"""Binary checkpoints for value networks.

Format: magic "DCLK1", u32 version, u8 kind length + ascii kind,
u32 input length, u32 array count, then per array: u16 name length +
utf-8 name, u8 ndim, u32 dims, raw little-endian float32 data.
Parameters and batchnorm running statistics are stored.
"""
from __future__ import annotations

import struct

import numpy as np

from .network import ValueNetwork

MAGIC = b"DCLK1"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _arrays(net: ValueNetwork):
    yield from net.named_params()
    for i, bn in enumerate(net.batchnorms()):
        yield f"bn{i}.running_mean", bn.running_mean
        yield f"bn{i}.running_var", bn.running_var


def save_checkpoint(net: ValueNetwork, path):
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        kind = net.kind.encode("ascii")
        fh.write(struct.pack("<B", len(kind)) + kind)
        fh.write(struct.pack("<I", net.input_len))
        items = list(_arrays(net))
        fh.write(struct.pack("<I", len(items)))
        for name, arr in items:
            nb = name.encode("utf-8")
            fh.write(struct.pack("<H", len(nb)) + nb)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read(fh, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointError("truncated checkpoint file")
    return buf


def load_checkpoint(path, expect_kind: str | None = None,
                    dtype=np.float64) -> ValueNetwork:
    with open(path, "rb") as fh:
        if _read(fh, len(MAGIC)) != MAGIC:
            raise CheckpointError("bad magic: not a value-network checkpoint")
        (version,) = struct.unpack("<I", _read(fh, 4))
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        (klen,) = struct.unpack("<B", _read(fh, 1))
        kind = _read(fh, klen).decode("ascii")
        if expect_kind is not None and kind != expect_kind:
            raise CheckpointError(
                f"checkpoint holds a {kind} network, expected {expect_kind}")
        (input_len,) = struct.unpack("<I", _read(fh, 4))
        net = ValueNetwork(kind, seed=0, dtype=dtype, input_len=input_len)
        targets = dict(_arrays(net))
        (count,) = struct.unpack("<I", _read(fh, 4))
        seen = set()
        for _ in range(count):
            (nlen,) = struct.unpack("<H", _read(fh, 2))
            name = _read(fh, nlen).decode("utf-8")
            (ndim,) = struct.unpack("<B", _read(fh, 1))
            shape = struct.unpack(f"<{ndim}I", _read(fh, 4 * ndim))
            data = np.frombuffer(_read(fh, 4 * int(np.prod(shape))),
                                 dtype="<f4").reshape(shape)
            if name not in targets:
                raise CheckpointError(f"unexpected array {name!r}")
            if targets[name].shape != data.shape:
                raise CheckpointError(f"shape mismatch for {name!r}")
            targets[name][...] = data.astype(dtype)
            seen.add(name)
        if seen != set(targets):
            raise CheckpointError("checkpoint is missing arrays")
    return net
