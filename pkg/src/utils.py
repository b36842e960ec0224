"""
工具函数模块
"""
import hashlib
import json
import os
from typing import Any, Optional

import numpy as np


def stable_hash(text: str) -> int:
    """
    计算字符串的稳定整数哈希（与进程哈希种子无关）

    Args:
        text: 输入字符串，例如样本 ID

    Returns:
        int: 32 位无符号整数
    """
    digest = hashlib.md5(text.encode("utf-8")).hexdigest()
    return int(digest[:8], 16)


def derive_rng(seed: int, *tags: Any) -> np.random.Generator:
    """
    由 (seed, 标签...) 派生独立的随机数生成器
    标签可以是整数或字符串，字符串先经 stable_hash 转换

    Args:
        seed: 全局种子
        tags: 流标签，例如 ("mask", sample_id, epoch)

    Returns:
        np.random.Generator: PCG64 生成器
    """
    entropy = [int(seed) & 0xFFFFFFFF]
    for tag in tags:
        if isinstance(tag, str):
            entropy.append(stable_hash(tag))
        else:
            entropy.append(int(tag) & 0xFFFFFFFF)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def round_half_away(values: np.ndarray) -> np.ndarray:
    """
    四舍五入（0.5 远离零），numpy 默认的 round 是银行家舍入

    Args:
        values: 浮点数组

    Returns:
        np.ndarray: 取整后的浮点数组
    """
    return np.sign(values) * np.floor(np.abs(values) + 0.5)


def quantize_u8(values: np.ndarray) -> np.ndarray:
    """
    将 [0,1] 浮点图像量化为 8 位

    Args:
        values: 浮点数组

    Returns:
        np.ndarray: uint8 数组
    """
    scaled = round_half_away(np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0) * 255.0)
    return scaled.astype(np.uint8)


def canonical_json(obj: Any) -> str:
    """序列化为键有序、无多余空白的 JSON"""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def ensure_parent_dir(path: str):
    """确保文件所在目录存在"""
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def resolve_threads(cli_value: Optional[int] = None) -> int:
    """
    解析线程数：命令行优先，其次环境变量 KAN_SAM_THREADS，默认 1

    Args:
        cli_value: 命令行 --threads 值

    Returns:
        int: 线程数 (>= 1)
    """
    if cli_value is not None:
        return max(1, int(cli_value))
    env_value = os.getenv("KAN_SAM_THREADS", "1")
    try:
        return max(1, int(env_value))
    except ValueError:
        return 1
