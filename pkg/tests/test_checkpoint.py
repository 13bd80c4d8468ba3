import struct

import numpy as np
import pytest

from swift_sr import checkpoint as ckpt
from swift_sr.errors import FormatError
from swift_sr.models import (
    DiscriminatorConfig,
    GeneratorConfig,
    build_discriminator,
    build_generator,
)

SMALL_GEN = GeneratorConfig(base_channels=8, num_residual_blocks=2)
SMALL_DISC = DiscriminatorConfig(
    block_channels=(8, 8, 16, 16, 32, 32, 64, 64), pool_size=3, hidden_units=32
)


def test_raw_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    tensors = {
        "a.weight": rng.normal(size=(2, 3, 3, 3)).astype(np.float32),
        "b.bias": rng.normal(size=(7,)).astype(np.float32),
        "c.scalarish": rng.normal(size=(1,)).astype(np.float32),
    }
    path = tmp_path / "t.ckpt"
    ckpt.write_checkpoint(path, tensors)
    back = ckpt.read_checkpoint(path)
    assert list(back) == list(tensors)
    for name in tensors:
        assert np.array_equal(back[name], tensors[name])
        assert back[name].dtype == np.float32


def test_model_round_trip_bitwise(tmp_path):
    gen = build_generator(SMALL_GEN, seed=5)
    path = tmp_path / "gen.ckpt"
    ckpt.save_model(gen, path)
    loaded, _ = ckpt.load_model(path)
    assert loaded.kind == "generator"
    assert loaded.cfg == SMALL_GEN
    orig = dict(gen.named_state())
    for name, p in loaded.named_state():
        assert np.array_equal(p.data, orig[name].data), name


def test_corrupted_magic_rejected(tmp_path):
    gen = build_generator(SMALL_GEN, seed=5)
    path = tmp_path / "gen.ckpt"
    ckpt.save_model(gen, path)
    blob = bytearray(path.read_bytes())
    blob[0:4] = b"NOPE"
    path.write_bytes(bytes(blob))
    with pytest.raises(FormatError, match="magic"):
        ckpt.read_checkpoint(path)


def test_corrupted_payload_fails_crc(tmp_path):
    gen = build_generator(SMALL_GEN, seed=5)
    path = tmp_path / "gen.ckpt"
    ckpt.save_model(gen, path)
    blob = bytearray(path.read_bytes())
    blob[len(blob) // 2] ^= 0xFF
    path.write_bytes(bytes(blob))
    with pytest.raises(FormatError, match="crc|truncated|dtype|name"):
        ckpt.read_checkpoint(path)


def test_truncated_file(tmp_path):
    gen = build_generator(SMALL_GEN, seed=5)
    path = tmp_path / "gen.ckpt"
    ckpt.save_model(gen, path)
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) // 3])
    with pytest.raises(FormatError, match="truncated"):
        ckpt.read_checkpoint(path)
    path.write_bytes(blob[:6])
    with pytest.raises(FormatError, match="truncated"):
        ckpt.read_checkpoint(path)


def test_version_mismatch(tmp_path):
    path = tmp_path / "v.ckpt"
    ckpt.write_checkpoint(path, {"x": np.zeros(1, dtype=np.float32)})
    blob = bytearray(path.read_bytes())
    blob[4:8] = struct.pack("<I", 99)
    path.write_bytes(bytes(blob))
    with pytest.raises(FormatError, match="version"):
        ckpt.read_checkpoint(path)


def test_cross_topology_load_names_first_missing(tmp_path):
    disc = build_discriminator(SMALL_DISC, seed=1)
    path = tmp_path / "disc.ckpt"
    ckpt.save_model(disc, path)
    tensors = ckpt.read_checkpoint(path)
    gen = build_generator(SMALL_GEN, seed=1)
    with pytest.raises(FormatError, match="missing parameter 'head_conv"):
        ckpt.load_state_into(gen, tensors)


def test_unexpected_tensor_rejected(tmp_path):
    gen = build_generator(SMALL_GEN, seed=5)
    path = tmp_path / "gen.ckpt"
    extra = {"rogue.weight": np.zeros(3, dtype=np.float32)}
    ckpt.save_model(gen, path, extra=extra)
    tensors = ckpt.read_checkpoint(path)
    fresh = build_generator(SMALL_GEN, seed=0)
    with pytest.raises(FormatError, match="unexpected tensor 'rogue.weight'"):
        ckpt.load_state_into(fresh, tensors)


def test_shape_mismatch_reported(tmp_path):
    gen = build_generator(SMALL_GEN, seed=5)
    path = tmp_path / "gen.ckpt"
    ckpt.save_model(gen, path)
    tensors = dict(ckpt.read_checkpoint(path))
    tensors["head_conv.dw.weight"] = np.zeros((1, 1, 3, 3), dtype=np.float32)
    with pytest.raises(FormatError, match="shape mismatch"):
        ckpt.load_state_into(gen, tensors)


def test_discriminator_round_trip(tmp_path):
    disc = build_discriminator(SMALL_DISC, seed=9)
    path = tmp_path / "d.ckpt"
    ckpt.save_model(disc, path)
    loaded, _ = ckpt.load_model(path)
    assert loaded.kind == "discriminator"
    assert loaded.cfg == SMALL_DISC
    orig = dict(disc.named_state())
    for name, p in loaded.named_state():
        assert np.array_equal(p.data, orig[name].data)
