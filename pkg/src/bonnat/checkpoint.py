"""Versioned binary checkpoints: a fixed header followed by named
parameter blocks of little-endian float64. Writes are atomic
(temp file then rename).
"""
from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .model import LengthPredictor, ModelDims, NatModel, TrainState

MAGIC = b"BONNATCK"
VERSION = 1
_HEADER = struct.Struct("<I5iqq")  # version, V, d, h, p_max, dl_max, seed, step


class CheckpointError(ValueError):
    pass


def save(path: str | Path, state: TrainState, seed: int) -> None:
    path = Path(path)
    blocks = dict(state.model.params)
    blocks.update(state.lp.params)
    d = state.model.dims
    buf = bytearray()
    buf += MAGIC
    buf += _HEADER.pack(VERSION, d.vocab, d.d, d.h, d.p_max, d.dl_max,
                        seed, state.step)
    buf += struct.pack("<I", len(blocks))
    for name, arr in blocks.items():
        raw = name.encode("utf-8")
        buf += struct.pack("<H", len(raw)) + raw
        buf += struct.pack("<B", arr.ndim)
        buf += struct.pack(f"<{arr.ndim}i", *arr.shape)
        buf += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(bytes(buf))
    os.replace(tmp, path)


def load(path: str | Path) -> tuple[TrainState, dict]:
    data = Path(path).read_bytes()
    if data[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"not a checkpoint file: {path}")
    off = len(MAGIC)
    version, vocab, d, h, p_max, dl_max, seed, step = _HEADER.unpack_from(data, off)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    off += _HEADER.size
    (count,) = struct.unpack_from("<I", data, off)
    off += 4
    blocks: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off : off + name_len].decode("utf-8")
        off += name_len
        (ndim,) = struct.unpack_from("<B", data, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}i", data, off)
        off += 4 * ndim
        size = int(np.prod(shape)) * 8
        arr = np.frombuffer(data[off : off + size], dtype="<f8").reshape(shape)
        blocks[name] = arr.copy()
        off += size
    dims = ModelDims(vocab=vocab, d=d, h=h, p_max=p_max, dl_max=dl_max)
    model_params = {k: blocks[k] for k in NatModel.PARAM_NAMES}
    lp_params = {k: blocks[k] for k in LengthPredictor.PARAM_NAMES}
    state = TrainState(
        model=NatModel(dims, model_params),
        lp=LengthPredictor(dl_max, lp_params),
        step=step,
    )
    header = {"version": version, "seed": seed, "step": step, "dims": dims}
    return state, header
