"""Binary checkpoints: named little-endian tensors, a config echo and the step.

Layout::

    b"MSSE" | u32 version | u32 count
    count x ( u16 name_len | name utf-8 | u8 dtype | u8 rank | u32 dims[rank] | payload )
    u64 step

Adam moments are stored as ``<name>/m`` and ``<name>/v``; the run config is a
u8 tensor named ``meta/config`` holding JSON.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..model import Classifier
from ..tensor import ShapeError
from .optim import Adam

MAGIC = b"MSSE"
VERSION = 1
CONFIG_KEY = "meta/config"
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("u1")}
_TAGS = {np.dtype(v).newbyteorder("="): k for k, v in _DTYPES.items()}


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    tensors: dict
    step: int

    @property
    def config(self) -> dict | None:
        raw = self.tensors.get(CONFIG_KEY)
        return None if raw is None else json.loads(raw.tobytes().decode("utf-8"))


def model_tensors(model: Classifier) -> dict[str, np.ndarray]:
    out = {}
    for lname, lp in model.named_params().items():
        for pname, p in lp.items():
            key = f"{lname}.{pname}"
            out[key] = p.value
            out[key + "/m"] = p.m
            out[key + "/v"] = p.v
    return out


def write_tensors(path, tensors: dict, step: int) -> None:
    buf = bytearray(MAGIC)
    buf += struct.pack("<II", VERSION, len(tensors))
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        tag = _TAGS.get(arr.dtype.newbyteorder("="))
        if tag is None:
            raise CheckpointError(f"tensor {name!r}: unsupported dtype {arr.dtype}")
        raw = name.encode("utf-8")
        buf += struct.pack("<H", len(raw)) + raw
        buf += struct.pack("<BB", tag, arr.ndim)
        buf += struct.pack(f"<{arr.ndim}I", *arr.shape)
        buf += np.ascontiguousarray(arr, dtype=_DTYPES[tag]).tobytes()
    buf += struct.pack("<Q", step)
    Path(path).write_bytes(bytes(buf))


def save_checkpoint(path, model: Classifier, optimizer: Adam, config: dict | None = None) -> None:
    tensors = model_tensors(model)
    if config is not None:
        tensors[CONFIG_KEY] = np.frombuffer(
            json.dumps(config, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    write_tensors(path, tensors, optimizer.step_count)


def read_checkpoint(path) -> Checkpoint:
    data = Path(path).read_bytes()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise CheckpointError(f"{path}: truncated checkpoint")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    if take(4) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    version, count = struct.unpack("<II", take(8))
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2))
        name = take(nlen).decode("utf-8")
        tag, rank = struct.unpack("<BB", take(2))
        if tag not in _DTYPES:
            raise CheckpointError(f"{path}: tensor {name!r} has unknown dtype tag {tag}")
        shape = struct.unpack(f"<{rank}I", take(4 * rank))
        dt = _DTYPES[tag]
        n = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(take(n * dt.itemsize), dtype=dt).reshape(shape)
        tensors[name] = arr.astype(dt.newbyteorder("="))
    (step,) = struct.unpack("<Q", take(8))
    if pos != len(data):
        raise CheckpointError(f"{path}: {len(data) - pos} trailing bytes")
    return Checkpoint(tensors, step)


def restore(ckpt: Checkpoint, model: Classifier, optimizer: Adam | None = None) -> None:
    """Copy tensors into ``model`` (and the step into ``optimizer``).

    Every model tensor must be present with an identical shape; the error
    names the first offending tensor.
    """
    targets = {}
    for lname, lp in model.named_params().items():
        for pname, p in lp.items():
            key = f"{lname}.{pname}"
            targets[key] = p.value
            targets[key + "/m"] = p.m
            targets[key + "/v"] = p.v
    for key, dst in targets.items():
        if key not in ckpt.tensors:
            raise ShapeError(f"checkpoint is missing tensor {key!r}")
        src = ckpt.tensors[key]
        if src.shape != dst.shape:
            raise ShapeError(f"tensor {key!r}: checkpoint shape {src.shape} != model shape {dst.shape}")
    extra = sorted(set(ckpt.tensors) - set(targets) - {CONFIG_KEY})
    if extra:
        raise ShapeError(f"checkpoint has unexpected tensor {extra[0]!r}")
    for key, dst in targets.items():
        dst[...] = ckpt.tensors[key]
    if optimizer is not None:
        optimizer.step_count = ckpt.step


def load_checkpoint(path, model: Classifier, optimizer: Adam | None = None) -> Checkpoint:
    ckpt = read_checkpoint(path)
    restore(ckpt, model, optimizer)
    return ckpt
