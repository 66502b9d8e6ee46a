"""Binary checkpoint format.

Layout (all integers little-endian u32)::

    b"DLVM" | version | metadata length | metadata (UTF-8 JSON)
    | tensor count | per tensor: name length, name, rank, extents..., float64 data

Metadata holds the config text, vocabulary, RNG state and step counters.
JSON is written with sorted keys so that save -> load -> save is
byte-identical.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"DLVM"
FORMAT_VERSION = 1


class CheckpointError(IOError):
    pass


@dataclass
class Checkpoint:
    config_text: str
    tensors: "OrderedDict[str, np.ndarray]"
    rng_state: dict = field(default_factory=dict)
    step: int = 0
    adam_step: int = 0
    vocab: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def metadata(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "config": self.config_text,
            "rng_state": self.rng_state,
            "step": self.step,
            "adam_step": self.adam_step,
            "vocab": self.vocab,
            "extra": self.extra,
        }

    def params(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((k, v) for k, v in self.tensors.items() if not k.startswith("adam."))


def to_bytes(ckpt: Checkpoint) -> bytes:
    meta = json.dumps(ckpt.metadata(), sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(meta)), meta, struct.pack("<I", len(ckpt.tensors))]
    for name, arr in ckpt.tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        raw_name = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    """Write atomically: temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(to_bytes(ckpt))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.offset = 0

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.buf):
            raise CheckpointError(f"truncated checkpoint at offset {self.offset} (needed {n} bytes)")
        out = self.buf[self.offset : self.offset + n]
        self.offset += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def from_bytes(buf: bytes) -> Checkpoint:
    r = _Reader(buf)
    if r.take(4) != MAGIC:
        raise CheckpointError("not a checkpoint: bad magic bytes")
    version = r.u32()
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {FORMAT_VERSION})")
    meta = json.loads(r.take(r.u32()).decode("utf-8"))
    tensors = OrderedDict()
    for _ in range(r.u32()):
        name = r.take(r.u32()).decode("utf-8")
        rank = r.u32()
        shape = tuple(r.u32() for _ in range(rank))
        count = int(np.prod(shape)) if rank else 1
        tensors[name] = np.frombuffer(r.take(8 * count), dtype="<f8").reshape(shape).astype(np.float64)
    if r.offset != len(buf):
        raise CheckpointError(f"trailing bytes after offset {r.offset}")
    return Checkpoint(
        config_text=meta["config"],
        tensors=tensors,
        rng_state=meta["rng_state"],
        step=meta["step"],
        adam_step=meta["adam_step"],
        vocab=meta["vocab"],
        extra=meta["extra"],
    )


def load_checkpoint(path) -> Checkpoint:
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return from_bytes(buf)
