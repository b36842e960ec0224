"""
二进制 PPM (P6) / PGM (P5) 读写，maxval 255
"""
import logging
import re

import numpy as np

from errors import FormatError
from utils import ensure_parent_dir, quantize_u8

logger = logging.getLogger(__name__)

_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def encode(image: np.ndarray) -> bytes:
    """
    编码 uint8 图像

    Args:
        image: [H,W] 或 [H,W,1] 灰度 (P5)，[H,W,3] 彩色 (P6)

    Returns:
        bytes: 文件内容
    """
    image = np.asarray(image)
    if image.dtype != np.uint8:
        raise FormatError(f"Netpbm encoder expects uint8 pixels, got {image.dtype}")
    if image.ndim == 3 and image.shape[2] == 1:
        image = image[:, :, 0]
    if image.ndim == 2:
        magic = b"P5"
    elif image.ndim == 3 and image.shape[2] == 3:
        magic = b"P6"
    else:
        raise FormatError(f"Unsupported image shape for netpbm: {image.shape}")
    h, w = image.shape[:2]
    header = magic + f"\n{w} {h}\n255\n".encode("ascii")
    return header + np.ascontiguousarray(image).tobytes()


def decode(payload: bytes) -> np.ndarray:
    """
    解码 P5/P6 内容

    Returns:
        np.ndarray: P5 -> [H,W] uint8，P6 -> [H,W,3] uint8
    """
    tokens = []
    pos = 0
    for _ in range(4):
        match = _TOKEN.match(payload, pos)
        if match is None:
            raise FormatError("Netpbm header truncated")
        tokens.append(match.group(1))
        pos = match.end()
    magic, width, height, maxval = tokens
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"Unsupported netpbm magic {magic!r}")
    try:
        w, h, m = int(width), int(height), int(maxval)
    except ValueError:
        raise FormatError("Netpbm header fields are not integers")
    if w < 1 or h < 1:
        raise FormatError(f"Netpbm dimensions must be positive, got {w}x{h}")
    if m != 255:
        raise FormatError(f"Only maxval 255 is supported, got {m}")
    if pos >= len(payload) or payload[pos:pos + 1] not in (b" ", b"\n", b"\r", b"\t"):
        raise FormatError("Netpbm header must end with a single whitespace byte")
    pos += 1
    channels = 3 if magic == b"P6" else 1
    expected = w * h * channels
    body = payload[pos:pos + expected]
    if len(body) != expected:
        raise FormatError(f"Netpbm raster truncated: {len(body)} of {expected} bytes")
    pixels = np.frombuffer(body, dtype=np.uint8)
    return pixels.reshape((h, w, 3) if channels == 3 else (h, w)).copy()


def write_image(path: str, image: np.ndarray):
    """写入图像；浮点 [0,1] 输入先四舍五入量化为 8 位"""
    image = np.asarray(image)
    if image.dtype != np.uint8:
        image = quantize_u8(image)
    ensure_parent_dir(path)
    with open(path, "wb") as f:
        f.write(encode(image))
    logger.debug(f"Wrote {path} {image.shape}")


def read_image(path: str) -> np.ndarray:
    """读取 P5/P6 图像为 uint8 数组"""
    with open(path, "rb") as f:
        payload = f.read()
    try:
        return decode(payload)
    except FormatError as e:
        raise FormatError(f"{path}: {e}")


def to_float(image: np.ndarray) -> np.ndarray:
    """uint8 -> [0,1] float64"""
    return np.asarray(image, dtype=np.float64) / 255.0
