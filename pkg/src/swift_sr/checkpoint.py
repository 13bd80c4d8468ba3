"""Bit-exact named-tensor archive.

Layout (all integers little-endian):

    magic "SSRG" | version u32 | tensor count u32
    per tensor: name length u16 | UTF-8 name | dtype u8 (0 = f32)
                | rank u8 | dims u32 each | raw little-endian f32 payload
    crc32 u32 over every byte between the header and the checksum

Models are stored as their named state plus a few ``meta.*`` tensors that
encode which topology to rebuild; optimizer state rides along under the
``opt.`` namespace when training checkpoints are written.
"""

from __future__ import annotations

import struct
import zlib
from collections import OrderedDict
from typing import Mapping

import numpy as np

from .errors import FormatError, ShapeError
from .models import (
    Discriminator,
    DiscriminatorConfig,
    Generator,
    GeneratorConfig,
    Layer,
)

MAGIC = b"SSRG"
VERSION = 1
DTYPE_F32 = 0

_KIND_CODES = {"generator": 0.0, "discriminator": 1.0}
_VARIANT_CODES = {"dsconv": 0.0, "standard": 1.0}


def write_checkpoint(path, tensors: Mapping[str, np.ndarray]) -> None:
    """Serialize named float32 arrays; iteration order is preserved on read."""
    body = bytearray()
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise FormatError(f"tensor name too long: {name[:40]}...")
        body += struct.pack("<H", len(encoded))
        body += encoded
        body += struct.pack("<BB", DTYPE_F32, arr.ndim)
        body += struct.pack(f"<{arr.ndim}I", *arr.shape)
        body += arr.tobytes()
    blob = MAGIC + struct.pack("<II", VERSION, len(tensors)) + bytes(body)
    blob += struct.pack("<I", zlib.crc32(bytes(body)) & 0xFFFFFFFF)
    with open(path, "wb") as f:
        f.write(blob)


def read_checkpoint(path) -> "OrderedDict[str, np.ndarray]":
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 12:
        raise FormatError("checkpoint truncated before header", offset=len(blob))
    if blob[:4] != MAGIC:
        raise FormatError(f"bad magic {blob[:4]!r}, expected {MAGIC!r}", offset=0)
    version, count = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", offset=4)
    offset = 12
    out: OrderedDict[str, np.ndarray] = OrderedDict()

    def need(nbytes, what):
        if offset + nbytes > len(blob) - 4:
            raise FormatError(f"checkpoint truncated reading {what}", offset=offset)

    for _ in range(count):
        need(2, "name length")
        (name_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        need(name_len, "name")
        name = blob[offset : offset + name_len].decode("utf-8")
        offset += name_len
        need(2, "dtype/rank")
        dtype_code, rank = struct.unpack_from("<BB", blob, offset)
        offset += 2
        if dtype_code != DTYPE_F32:
            raise FormatError(f"unknown dtype code {dtype_code} for {name!r}", offset=offset - 2)
        need(4 * rank, "dims")
        dims = struct.unpack_from(f"<{rank}I", blob, offset)
        offset += 4 * rank
        nbytes = 4 * int(np.prod(dims, dtype=np.int64)) if rank else 4
        need(nbytes, f"payload of {name!r}")
        arr = np.frombuffer(blob, dtype="<f4", count=nbytes // 4, offset=offset).reshape(dims)
        offset += nbytes
        if name in out:
            raise FormatError(f"duplicate tensor name {name!r}", offset=offset)
        out[name] = arr.copy()
    if offset != len(blob) - 4:
        raise FormatError("trailing bytes after tensor records", offset=offset)
    (stored_crc,) = struct.unpack_from("<I", blob, offset)
    actual_crc = zlib.crc32(blob[12:offset]) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise FormatError(
            f"crc mismatch: stored {stored_crc:#010x}, computed {actual_crc:#010x}",
            offset=offset,
        )
    return out


# ---------------------------------------------------------------------------
# Model <-> tensor-dict mapping
# ---------------------------------------------------------------------------


def model_meta(model: Layer) -> "OrderedDict[str, np.ndarray]":
    meta: OrderedDict[str, np.ndarray] = OrderedDict()
    if isinstance(model, Generator):
        cfg = model.cfg
        meta["meta.arch"] = np.array(
            [_KIND_CODES["generator"], _VARIANT_CODES[model.variant]], dtype=np.float32
        )
        meta["meta.generator_config"] = np.array(
            [cfg.in_channels, cfg.base_channels, cfg.num_residual_blocks, cfg.upscale_factor],
            dtype=np.float32,
        )
    elif isinstance(model, Discriminator):
        cfg = model.cfg
        meta["meta.arch"] = np.array([_KIND_CODES["discriminator"], 0.0], dtype=np.float32)
        meta["meta.discriminator_config"] = np.array(
            [cfg.in_channels, cfg.pool_size, cfg.hidden_units, *cfg.block_channels, *cfg.strides],
            dtype=np.float32,
        )
    else:
        raise ShapeError(f"cannot serialize model of type {type(model).__name__}")
    return meta


def model_from_meta(tensors: Mapping[str, np.ndarray]):
    """Instantiate the topology a checkpoint describes (weights not loaded)."""
    if "meta.arch" not in tensors:
        raise FormatError("checkpoint carries no meta.arch tensor")
    kind_code, variant_code = (float(v) for v in np.asarray(tensors["meta.arch"]).reshape(-1)[:2])
    if kind_code == _KIND_CODES["generator"]:
        vals = np.asarray(tensors["meta.generator_config"]).reshape(-1)
        cfg = GeneratorConfig(
            in_channels=int(vals[0]),
            base_channels=int(vals[1]),
            num_residual_blocks=int(vals[2]),
            upscale_factor=int(vals[3]),
        )
        variant = "standard" if variant_code == _VARIANT_CODES["standard"] else "dsconv"
        return Generator(cfg, variant=variant)
    if kind_code == _KIND_CODES["discriminator"]:
        vals = np.asarray(tensors["meta.discriminator_config"]).reshape(-1)
        cfg = DiscriminatorConfig(
            in_channels=int(vals[0]),
            pool_size=int(vals[1]),
            hidden_units=int(vals[2]),
            block_channels=tuple(int(v) for v in vals[3:11]),
            strides=tuple(int(v) for v in vals[11:19]),
        )
        return Discriminator(cfg)
    raise FormatError(f"unknown model kind code {kind_code}")


def load_state_into(model: Layer, tensors: Mapping[str, np.ndarray], prefix: str = "") -> None:
    """Copy named tensors into a model, requiring an exact name/shape match
    over the ``prefix`` namespace (``meta.*`` entries are ignored)."""
    state = dict(model.named_state())
    available = {
        name[len(prefix) :]: arr
        for name, arr in tensors.items()
        if name.startswith(prefix) and not name.startswith("meta.")
    }
    for name in state:
        if name not in available:
            raise FormatError(f"missing parameter {prefix + name!r} in checkpoint")
    for name in available:
        if name not in state:
            raise FormatError(f"unexpected tensor {prefix + name!r} for this topology")
    for name, param in state.items():
        arr = np.asarray(available[name], dtype=np.float32)
        if arr.shape != param.data.shape:
            raise FormatError(
                f"shape mismatch for {prefix + name!r}: checkpoint {arr.shape}, "
                f"model {param.data.shape}"
            )
        param.data[:] = arr


def save_model(model: Layer, path, extra: Mapping[str, np.ndarray] | None = None) -> None:
    tensors = model_meta(model)
    for name, p in model.named_state():
        tensors[name] = p.data
    if extra:
        for name, arr in extra.items():
            tensors[name] = np.asarray(arr, dtype=np.float32)
    write_checkpoint(path, tensors)


RESERVED_PREFIXES = ("meta.", "opt.", "state.", "disc.")


def load_model(path):
    """Rebuild and populate the model stored at ``path``.

    Training checkpoints are generator checkpoints with extra namespaces
    (``disc.*``, ``opt.*``, ``state.*``), so those are skipped here; the
    full tensor dict is returned alongside for callers that need them.
    """
    tensors = read_checkpoint(path)
    model = model_from_meta(tensors)
    own = {
        name: arr
        for name, arr in tensors.items()
        if not name.startswith(RESERVED_PREFIXES)
    }
    load_state_into(model, own)
    return model, tensors
