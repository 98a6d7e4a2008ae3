"""Checkpoint binary format.

Layout (all integers little-endian u32): magic "DDRC", version, length-prefixed
UTF-8 spec/metadata text, tensor count, then per tensor a length-prefixed name,
four dims (natural shape left-padded with 1s), and float32 data. Parameters are
stored as float32 in memory too, so save -> load round-trips bit-exactly.
"""

from __future__ import annotations

import os
import struct
from dataclasses import fields
from pathlib import Path

import numpy as np

from .models import ArchSpec, Model, _layout

MAGIC = b"DDRC"
VERSION = 1


class CheckpointError(ValueError):
    """Malformed checkpoint or architecture mismatch."""


def _spec_text(spec: ArchSpec, meta: dict[str, str] | None) -> str:
    lines = []
    for f in fields(ArchSpec):
        value = getattr(spec, f.name)
        if f.name == "global_residual":
            value = int(value)
        lines.append(f"{f.name}={value}")
    for key in sorted(meta or {}):
        lines.append(f"meta.{key}={meta[key]}")
    return "\n".join(lines)


def _parse_spec_text(text: str) -> tuple[ArchSpec, dict[str, str]]:
    raw: dict[str, str] = {}
    meta: dict[str, str] = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition("=")
        if key.startswith("meta."):
            meta[key[5:]] = value
        else:
            raw[key] = value
    try:
        spec = ArchSpec(
            kind=raw["kind"],
            global_residual=bool(int(raw["global_residual"])),
            n_blocks=int(raw["n_blocks"]),
            channels=int(raw["channels"]),
            scale=int(raw["scale"]),
            num_classes=int(raw["num_classes"]),
            in_channels=int(raw["in_channels"]),
        )
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"bad arch spec in checkpoint: {exc}") from exc
    return spec, meta


def save_checkpoint(model: Model, path: str | os.PathLike, meta: dict[str, str] | None = None) -> None:
    spec_bytes = _spec_text(model.spec, meta).encode("utf-8")
    chunks = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(spec_bytes)), spec_bytes]
    chunks.append(struct.pack("<I", len(model.params)))
    for name, value in model.params.items():
        name_bytes = name.encode("utf-8")
        dims = (1,) * (4 - value.ndim) + value.shape
        chunks.append(struct.pack("<I", len(name_bytes)))
        chunks.append(name_bytes)
        chunks.append(struct.pack("<4I", *dims))
        chunks.append(np.ascontiguousarray(value, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(
                f"truncated checkpoint: wanted {n} bytes at offset {self.pos}, "
                f"have {len(self.data) - self.pos}"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_checkpoint(
    path: str | os.PathLike, expect_spec: ArchSpec | None = None
) -> tuple[Model, dict[str, str]]:
    """Load a model; raises CheckpointError on format or spec mismatch."""
    reader = _Reader(Path(path).read_bytes())
    if reader.take(4) != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint")
    version = reader.u32()
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    spec, meta = _parse_spec_text(reader.take(reader.u32()).decode("utf-8"))
    if expect_spec is not None and spec != expect_spec:
        raise CheckpointError(f"{path}: checkpoint spec {spec} does not match expected {expect_spec}")

    shapes = {name: shape for name, shape, _ in _layout(spec)}
    count = reader.u32()
    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        name = reader.take(reader.u32()).decode("utf-8")
        dims = struct.unpack("<4I", reader.take(16))
        size = int(np.prod(dims))
        flat = np.frombuffer(reader.take(size * 4), dtype="<f4")
        if name not in shapes:
            raise CheckpointError(f"{path}: unexpected tensor {name!r} for this architecture")
        if int(np.prod(shapes[name])) != size:
            raise CheckpointError(
                f"{path}: tensor {name!r} has {size} values, expected shape {shapes[name]}"
            )
        params[name] = flat.reshape(shapes[name]).copy()
    missing = [name for name in shapes if name not in params]
    if missing:
        raise CheckpointError(f"{path}: missing tensors {missing}")
    ordered = {name: params[name] for name, _, _ in _layout(spec)}
    return Model(spec, ordered), meta
