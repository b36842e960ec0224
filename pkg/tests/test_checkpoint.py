"""检查点读写测试"""
import json
import struct
from dataclasses import replace

import numpy as np
import pytest

from checkpoint import (
    decode_checkpoint, encode_checkpoint, load_checkpoint, read_checkpoint_extra, save_checkpoint,
)
from constants import CHECKPOINT_MAGIC, CHECKPOINT_VERSION
from errors import FormatError
from model import SaliencyModel


@pytest.fixture
def model(tiny_model_config):
    model = SaliencyModel(tiny_model_config)
    rng = np.random.default_rng(8)
    for adapter in model.adapters:
        adapter.up.spline_coeffs.data = rng.normal(0, 0.1, size=adapter.up.spline_coeffs.shape)
    return model


def test_save_load_save_is_byte_identical(model, tmp_path):
    first = tmp_path / "a.ckpt"
    second = tmp_path / "b.ckpt"
    save_checkpoint(model, str(first), extra={"epoch": 3})
    save_checkpoint(load_checkpoint(str(first)), str(second), extra={"epoch": 3})
    assert first.read_bytes() == second.read_bytes()


def test_loaded_model_forward_is_bit_exact(model, rng):
    rgb, thermal = rng.uniform(size=(16, 16, 3)), rng.uniform(size=(16, 16, 1))
    restored = decode_checkpoint(encode_checkpoint(model))
    assert restored.predict(rgb, thermal).tobytes() == model.predict(rgb, thermal).tobytes()
    assert restored.labels == model.labels
    assert restored.config == model.config


def test_float32_model_roundtrip(tiny_model_config):
    model = SaliencyModel(replace(tiny_model_config, precision=32))
    restored = decode_checkpoint(encode_checkpoint(model))
    for (name, a), (_, b) in zip(model.named_parameters(), restored.named_parameters()):
        assert b.data.dtype == np.float32, name
        assert a.data.tobytes() == b.data.tobytes(), name


def test_prefix_layout(model):
    payload = encode_checkpoint(model)
    magic, version, header_len = struct.unpack_from("<8sIQ", payload, 0)
    assert magic == CHECKPOINT_MAGIC and version == CHECKPOINT_VERSION
    assert payload[20:20 + header_len].startswith(b"{")


def test_extra_metadata(model, tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, str(path), extra={"variant": "full", "seed": 1})
    assert read_checkpoint_extra(str(path)) == {"variant": "full", "seed": 1}


def test_corrupted_magic(model):
    payload = bytearray(encode_checkpoint(model))
    payload[0:8] = b"NOTACKPT"
    with pytest.raises(FormatError, match="magic"):
        decode_checkpoint(bytes(payload))


def test_version_mismatch(model):
    payload = bytearray(encode_checkpoint(model))
    struct.pack_into("<I", payload, 8, CHECKPOINT_VERSION + 1)
    with pytest.raises(FormatError, match="version"):
        decode_checkpoint(bytes(payload))


@pytest.mark.parametrize("keep", [4, 30, -1])
def test_truncated(model, keep):
    payload = encode_checkpoint(model)
    with pytest.raises(FormatError, match="truncated"):
        decode_checkpoint(payload[:keep])


def test_config_mismatch_is_format_error(model):
    other = SaliencyModel(replace(model.config, use_adapters=False))
    payload = encode_checkpoint(other)
    # 头部配置改回带适配器，张量集合与之不符
    header_len = struct.unpack_from("<Q", payload, 12)[0]
    header = payload[20:20 + header_len].replace(b'"use_adapters":false', b'"use_adapters":true ')
    with pytest.raises(FormatError, match="disagree"):
        decode_checkpoint(payload[:20] + header + payload[20 + header_len:])


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_checkpoint(str(tmp_path / "absent.ckpt"))


def _rewrite_header(payload: bytes, mutate) -> bytes:
    header_len = struct.unpack_from("<Q", payload, 12)[0]
    header = json.loads(payload[20:20 + header_len])
    header = mutate(header)
    raw = json.dumps(header).encode("utf-8")
    return struct.pack("<8sIQ", CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(raw)) + raw + payload[20 + header_len:]


def _drop(key):
    def mutate(header):
        del header[key]
        return header
    return mutate


def _drop_record_field(key):
    def mutate(header):
        del header["tensors"][0][key]
        return header
    return mutate


def _set_record_field(key, value):
    def mutate(header):
        header["tensors"][0][key] = value
        return header
    return mutate


@pytest.mark.parametrize("mutate", [
    _drop("config"),
    _drop("tensors"),
    _drop("extra"),
    _drop_record_field("offset"),
    _drop_record_field("nbytes"),
    _drop_record_field("dtype"),
    _drop_record_field("label"),
    _drop_record_field("shape"),
    _set_record_field("dtype", "not-a-dtype"),
    _set_record_field("offset", "zero"),
    _set_record_field("shape", 7),
    lambda header: ["not", "an", "object"],
    lambda header: {**header, "tensors": {"a": 1}},
    lambda header: {**header, "config": {**header["config"], "patch_size": 3}},
    lambda header: {**header, "config": {**header["config"], "colour": 1}},
])
def test_malformed_header_is_format_error(model, mutate):
    payload = _rewrite_header(encode_checkpoint(model), mutate)
    with pytest.raises(FormatError):
        decode_checkpoint(payload)


def test_extra_reader_validates_header(model, tmp_path):
    payload = encode_checkpoint(model, extra={"epoch": 1})
    cases = {
        "magic": b"NOTACKPT" + payload[8:],
        "version": payload[:8] + struct.pack("<I", CHECKPOINT_VERSION + 1) + payload[12:],
        "truncated": payload[:30],
        "not valid JSON": payload[:20] + b"\xff" + payload[21:],
    }
    for match, content in cases.items():
        path = tmp_path / "bad.ckpt"
        path.write_bytes(content)
        with pytest.raises(FormatError, match=match):
            read_checkpoint_extra(str(path))
    with pytest.raises(FileNotFoundError):
        read_checkpoint_extra(str(tmp_path / "absent.ckpt"))


def test_extra_reader_rejects_missing_fields(model, tmp_path):
    path = tmp_path / "m.ckpt"
    path.write_bytes(_rewrite_header(encode_checkpoint(model), _drop("extra")))
    with pytest.raises(FormatError, match="lacks"):
        read_checkpoint_extra(str(path))
