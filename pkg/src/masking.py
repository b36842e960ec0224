"""
互斥随机掩码
训练时对输入 RGB-热红外图像对逐像素掩码，被掩码的像素只在一个模态中被置为填充值
"""
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from constants import (
    MASK_MODE_PER_MODALITY, MASK_MODE_PER_PAIR, MASK_MODES, MASK_PREVIEW_COLORS,
    MASK_RGB, MASK_THERMAL, MASK_UNMASKED,
)
from errors import ConfigError, DimensionError
from utils import derive_rng

logger = logging.getLogger(__name__)


@dataclass
class MaskConfig:
    """掩码配置"""

    p_mask: float = 0.10
    fill_value: float = 0.0
    enabled: bool = True
    mode: str = MASK_MODE_PER_PAIR

    def validate(self):
        if not 0.0 <= self.p_mask <= 1.0:
            raise ConfigError(f"mask.p_mask must lie in [0, 1], got {self.p_mask}")
        if self.mode not in MASK_MODES:
            raise ConfigError(f"mask.mode must be one of {MASK_MODES}, got {self.mode}")
        if self.mode == MASK_MODE_PER_MODALITY and self.p_mask > 0.5:
            raise ConfigError("mask.p_mask above 0.5 cannot give disjoint per-modality supports")


@dataclass
class MaskPattern:
    """逐像素三值分配 {Unmasked, MaskRgb, MaskThermal}"""

    assignment: np.ndarray  # [H, W] uint8

    @property
    def height(self) -> int:
        return int(self.assignment.shape[0])

    @property
    def width(self) -> int:
        return int(self.assignment.shape[1])

    def fraction(self, label: int) -> float:
        return float(np.mean(self.assignment == label))

    def masked_fraction(self) -> float:
        return float(np.mean(self.assignment != MASK_UNMASKED))


def sample_mask(h: int, w: int, cfg: MaskConfig, rng_seed) -> MaskPattern:
    """
    采样掩码图案

    Args:
        h: 高
        w: 宽
        cfg: 掩码配置
        rng_seed: 整数种子或 np.random.Generator

    Returns:
        MaskPattern: 给定种子下确定的图案
    """
    if h < 1 or w < 1:
        raise DimensionError(f"Mask size must be positive, got {h}x{w}")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else derive_rng(int(rng_seed), "mask")
    assignment = np.full((h, w), MASK_UNMASKED, dtype=np.uint8)
    if cfg.mode == MASK_MODE_PER_PAIR:
        masked = rng.random((h, w)) < cfg.p_mask
        pick_rgb = rng.random((h, w)) < 0.5
        assignment[masked & pick_rgb] = MASK_RGB
        assignment[masked & ~pick_rgb] = MASK_THERMAL
    else:
        # 一次均匀抽样切分为互不相交的两段，每段概率 p
        u = rng.random((h, w))
        assignment[u < cfg.p_mask] = MASK_RGB
        assignment[(u >= cfg.p_mask) & (u < 2.0 * cfg.p_mask)] = MASK_THERMAL
    return MaskPattern(assignment)


def apply_mask(rgb: np.ndarray, thermal: np.ndarray, pattern: MaskPattern,
               cfg: MaskConfig) -> Tuple[np.ndarray, np.ndarray]:
    """
    应用掩码：MaskRgb 像素的所有 RGB 通道置为填充值，MaskThermal 对称处理

    Args:
        rgb: [H,W,3]
        thermal: [H,W,1]
        pattern: 掩码图案
        cfg: 掩码配置

    Returns:
        tuple: (rgb', thermal') 新数组
    """
    if rgb.shape[:2] != pattern.assignment.shape or thermal.shape[:2] != pattern.assignment.shape:
        raise DimensionError(
            f"Mask pattern {pattern.assignment.shape} does not match images {rgb.shape} / {thermal.shape}")
    rgb_out = np.array(rgb, copy=True)
    thermal_out = np.array(thermal, copy=True)
    rgb_out[pattern.assignment == MASK_RGB] = cfg.fill_value
    thermal_out[pattern.assignment == MASK_THERMAL] = cfg.fill_value
    return rgb_out, thermal_out


def preview_image(pattern: MaskPattern) -> np.ndarray:
    """
    掩码图案的三色预览 (H, W, 3) uint8：黑=未掩码，红=RGB 掩码，蓝=热红外掩码
    """
    image = np.zeros((pattern.height, pattern.width, 3), dtype=np.uint8)
    for label, color in MASK_PREVIEW_COLORS.items():
        image[pattern.assignment == label] = color
    return image
