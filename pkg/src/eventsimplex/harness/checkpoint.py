"""Binary checkpoints: config and time transform as text metadata plus named float64 tensors.

Layout (little-endian): magic ``EVSXCKPT``, uint32 version, uint32 metadata
length, UTF-8 ``key=value`` lines, uint32 tensor count, then per tensor
uint32 name length, name, uint32 ndim, uint32 dims, float64 data.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..events import TimeTransform
from ..model import EventModel
from ..numdiff import Tensor
from .config import TrainConfig

MAGIC = b"EVSXCKPT"
VERSION = 1


@dataclass
class Checkpoint:
    config: TrainConfig
    n_classes: int
    transform: TimeTransform
    params: dict[str, np.ndarray]
    meta: dict[str, str] | None = None

    def build_model(self) -> EventModel:
        spec = self.config.model_spec(self.n_classes)
        params = {k: Tensor(v.copy(), True, k) for k, v in self.params.items()}
        return EventModel(spec, params=params)

    @classmethod
    def from_model(cls, model: EventModel, config: TrainConfig, transform: TimeTransform,
                   meta: dict[str, str] | None = None) -> "Checkpoint":
        return cls(config, model.spec.n_classes, transform,
                   {k: p.data.copy() for k, p in model.params.items()}, meta)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    kv = {f"config.{k}": v for k, v in ckpt.config.to_kv().items()}
    kv.update({"n_classes": str(ckpt.n_classes), "transform.eps": repr(ckpt.transform.eps),
               "transform.log_min": repr(ckpt.transform.log_min),
               "transform.log_max": repr(ckpt.transform.log_max)})
    kv.update({f"meta.{k}": v for k, v in (ckpt.meta or {}).items()})
    meta = "".join(f"{k}={v}\n" for k, v in kv.items()).encode("utf-8")
    chunks = [MAGIC, struct.pack("<II", VERSION, len(meta)), meta, struct.pack("<I", len(ckpt.params))]
    for name, arr in ckpt.params.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        chunks += [struct.pack("<I", len(raw)), raw, struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape),
                   arr.tobytes()]
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path) -> Checkpoint:
    buf = Path(path).read_bytes()
    if buf[:len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    pos = len(MAGIC)

    def take(fmt):
        nonlocal pos
        out = struct.unpack_from(fmt, buf, pos)
        pos += struct.calcsize(fmt)
        return out

    version, meta_len = take("<II")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    kv = dict(line.split("=", 1) for line in buf[pos:pos + meta_len].decode("utf-8").splitlines() if line)
    pos += meta_len
    (count,) = take("<I")
    params = {}
    for _ in range(count):
        (n,) = take("<I")
        name = buf[pos:pos + n].decode("utf-8")
        pos += n
        (ndim,) = take("<I")
        shape = take(f"<{ndim}I")
        size = int(np.prod(shape))
        params[name] = np.frombuffer(buf, "<f8", size, pos).reshape(shape).astype(np.float64)
        pos += 8 * size
    config = TrainConfig.from_kv({k[7:]: v for k, v in kv.items() if k.startswith("config.")})
    transform = TimeTransform(float(kv["transform.eps"]), float(kv["transform.log_min"]),
                              float(kv["transform.log_max"]))
    meta = {k[5:]: v for k, v in kv.items() if k.startswith("meta.")}
    return Checkpoint(config, int(kv["n_classes"]), transform, params, meta)
