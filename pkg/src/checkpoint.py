"""
检查点容器
自描述二进制格式：magic | uint32 版本 | uint64 头长度 | JSON 头 | 原始张量字节（小端）
JSON 头记录模型配置以及每个张量的名称、形状、dtype、分组标签、偏移与字节数
"""
import json
import logging
import os
import struct
from typing import Any, Dict, Tuple

import numpy as np

from constants import CHECKPOINT_MAGIC, CHECKPOINT_VERSION
from errors import ConfigError, FormatError
from model import ModelConfig, SaliencyModel
from utils import canonical_json, ensure_parent_dir

logger = logging.getLogger(__name__)

_PREFIX = struct.Struct("<8sIQ")


def encode_checkpoint(model: SaliencyModel, extra: Dict[str, Any] = None) -> bytes:
    """
    序列化模型为字节串

    Args:
        model: 模型
        extra: 附加元数据（须可 JSON 序列化且确定）

    Returns:
        bytes: 检查点内容
    """
    records = []
    blobs = []
    offset = 0
    for name, param in model.named_parameters():
        array = np.ascontiguousarray(param.data)
        data = array.astype(array.dtype.newbyteorder("<"), copy=False).tobytes()
        records.append({
            "name": name,
            "shape": list(array.shape),
            "dtype": array.dtype.newbyteorder("<").str,
            "label": model.labels[name],
            "offset": offset,
            "nbytes": len(data),
        })
        blobs.append(data)
        offset += len(data)
    header = {"config": model.config.to_dict(), "tensors": records, "extra": extra or {}}
    header_bytes = canonical_json(header).encode("utf-8")
    return _PREFIX.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(header_bytes)) + header_bytes + b"".join(blobs)


_HEADER_FIELDS = ("config", "tensors", "extra")
_RECORD_FIELDS = ("name", "shape", "dtype", "label", "offset", "nbytes")


def _read_header(payload: bytes) -> Tuple[Dict[str, Any], int]:
    """
    校验前缀并解析 JSON 头

    Args:
        payload: 至少包含前缀与完整 JSON 头的字节串

    Returns:
        tuple: (头字典, 张量数据起始偏移)
    """
    if len(payload) < _PREFIX.size:
        raise FormatError("Checkpoint truncated: missing prefix")
    magic, version, header_len = _PREFIX.unpack_from(payload, 0)
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"Not a checkpoint file (magic {magic!r})")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"Checkpoint version {version} unsupported (expected {CHECKPOINT_VERSION})")
    start = _PREFIX.size
    if len(payload) < start + header_len:
        raise FormatError("Checkpoint truncated: incomplete header")
    try:
        header = json.loads(payload[start:start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"Checkpoint header is not valid JSON: {e}")

    if not isinstance(header, dict):
        raise FormatError("Checkpoint header must be a JSON object")
    missing = [key for key in _HEADER_FIELDS if key not in header]
    if missing:
        raise FormatError(f"Checkpoint header lacks fields {missing}")
    if not isinstance(header["config"], dict) or not isinstance(header["extra"], dict):
        raise FormatError("Checkpoint header fields 'config' and 'extra' must be objects")
    if not isinstance(header["tensors"], list):
        raise FormatError("Checkpoint header field 'tensors' must be a list")
    for i, rec in enumerate(header["tensors"]):
        if not isinstance(rec, dict):
            raise FormatError(f"Checkpoint tensor record {i} is not an object")
        absent = [key for key in _RECORD_FIELDS if key not in rec]
        if absent:
            raise FormatError(f"Checkpoint tensor record {rec.get('name', i)} lacks fields {absent}")
    return header, start + header_len


def decode_checkpoint(payload: bytes) -> SaliencyModel:
    """
    从字节串恢复模型

    Args:
        payload: 检查点内容

    Returns:
        SaliencyModel: 恢复后的模型
    """
    header, body_start = _read_header(payload)
    body = payload[body_start:]

    try:
        model = SaliencyModel(ModelConfig(**header["config"]))
    except (TypeError, ConfigError) as e:
        raise FormatError(f"Checkpoint config does not match ModelConfig: {e}")
    params = dict(model.named_parameters())
    stored = {rec["name"]: rec for rec in header["tensors"]}
    if set(stored) != set(params):
        missing = sorted(set(params) - set(stored))
        unexpected = sorted(set(stored) - set(params))
        raise FormatError(f"Checkpoint tensors disagree with config (missing {missing}, unexpected {unexpected})")

    for name, param in params.items():
        rec = stored[name]
        try:
            shape = tuple(rec["shape"])
            end = int(rec["offset"]) + int(rec["nbytes"])
            dtype = np.dtype(rec["dtype"])
        except (TypeError, ValueError) as e:
            raise FormatError(f"Tensor {name}: malformed record ({e})")
        if shape != param.shape:
            raise FormatError(f"Tensor {name}: stored shape {rec['shape']} != config shape {list(param.shape)}")
        if end > len(body):
            raise FormatError(f"Checkpoint truncated inside tensor {name}")
        try:
            array = np.frombuffer(body[int(rec["offset"]):end], dtype=dtype)
        except ValueError as e:
            raise FormatError(f"Tensor {name}: {e}")
        if array.size != int(np.prod(param.shape)):
            raise FormatError(f"Tensor {name}: byte count does not match shape")
        param.data = array.reshape(param.shape).astype(param.data.dtype)
        if rec["label"] != model.labels[name]:
            raise FormatError(f"Tensor {name}: partition label {rec['label']} != {model.labels[name]}")
    return model


def save_checkpoint(model: SaliencyModel, path: str, extra: Dict[str, Any] = None):
    """写入检查点文件"""
    ensure_parent_dir(path)
    payload = encode_checkpoint(model, extra)
    with open(path, "wb") as f:
        f.write(payload)
    logger.info(f"Checkpoint saved: {path} ({len(payload)} bytes)")


def load_checkpoint(path: str) -> SaliencyModel:
    """读取检查点文件"""
    if not os.path.exists(path):
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    with open(path, "rb") as f:
        payload = f.read()
    model = decode_checkpoint(payload)
    logger.info(f"Checkpoint loaded: {path}")
    return model


def read_checkpoint_extra(path: str) -> Dict[str, Any]:
    """只读取检查点头中的附加元数据（前缀与头的校验同 decode_checkpoint）"""
    if not os.path.exists(path):
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    with open(path, "rb") as f:
        prefix = f.read(_PREFIX.size)
        head = prefix
        if len(prefix) == _PREFIX.size:
            _, _, header_len = _PREFIX.unpack(prefix)
            head += f.read(min(header_len, os.path.getsize(path)))
    header, _ = _read_header(head)
    return header["extra"]
