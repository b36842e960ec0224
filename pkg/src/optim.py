"""
AdamW 优化器（解耦权重衰减）与梯度裁剪
"""
import logging
import math
from typing import Dict, List, Sequence, Tuple

import numpy as np

from autograd import Tensor
from constants import CLIP_MODES, CLIP_NORM, SCHEDULE_CONSTANT, SCHEDULE_COSINE, SCHEDULES
from errors import ConfigError, ContractError

logger = logging.getLogger(__name__)


def global_norm(grads: Sequence[np.ndarray]) -> float:
    """全部梯度拼接后的 L2 范数（float64 累加）"""
    total = 0.0
    for g in grads:
        total += float(np.sum(np.square(g, dtype=np.float64)))
    return math.sqrt(total)


def clip_grad_norm(grads: List[np.ndarray], max_norm: float) -> Tuple[List[np.ndarray], float]:
    """
    全局范数裁剪；范数不超过阈值时原样返回

    Returns:
        tuple: (裁剪后梯度, 裁剪前范数)
    """
    norm = global_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return grads, norm
    scale = max_norm / norm
    return [(g * scale).astype(g.dtype, copy=False) for g in grads], norm


def clip_grad_value(grads: List[np.ndarray], max_value: float) -> Tuple[List[np.ndarray], float]:
    """逐元素裁剪到 [-max_value, max_value]"""
    norm = global_norm(grads)
    return [np.clip(g, -max_value, max_value) for g in grads], norm


def scheduled_lr(base_lr: float, step: int, total_steps: int, schedule: str = SCHEDULE_CONSTANT) -> float:
    """
    学习率计划

    Args:
        base_lr: 初始学习率
        step: 当前步（从 0 开始）
        total_steps: 总步数
        schedule: constant 或 cosine

    Returns:
        float: 本步学习率
    """
    if schedule == SCHEDULE_CONSTANT:
        return base_lr
    if schedule == SCHEDULE_COSINE:
        progress = min(step, total_steps) / max(total_steps, 1)
        return base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))
    raise ConfigError(f"Unknown lr schedule '{schedule}', expected one of {SCHEDULES}")


class AdamW:
    """
    AdamW：p ← p·(1 − lr·wd) − lr·m̂/(sqrt(v̂) + eps)
    只为传入的参数（可调分组）建立一阶/二阶矩缓冲
    """

    def __init__(self, named_params: Sequence[Tuple[str, Tensor]], lr: float = 1e-4,
                 betas: Tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 5e-4, grad_clip: float = 0.5, clip_mode: str = CLIP_NORM):
        """
        初始化优化器

        Args:
            named_params: (名称, 参数) 列表，参数必须 requires_grad
            lr: 学习率
            betas: (β1, β2)
            eps: 数值稳定项
            weight_decay: 解耦权重衰减系数
            grad_clip: 裁剪阈值
            clip_mode: norm（全局范数）或 value（逐元素）
        """
        if lr < 0:
            raise ConfigError(f"learning rate must be >= 0, got {lr}")
        if clip_mode not in CLIP_MODES:
            raise ConfigError(f"clip_mode must be one of {CLIP_MODES}, got {clip_mode}")
        for name, p in named_params:
            if not p.requires_grad:
                raise ContractError(f"AdamW was given frozen parameter {name}")
        self.params = list(named_params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.grad_clip = grad_clip
        self.clip_mode = clip_mode
        self.step_count = 0
        self.exp_avg: Dict[str, np.ndarray] = {name: np.zeros_like(p.data) for name, p in self.params}
        self.exp_avg_sq: Dict[str, np.ndarray] = {name: np.zeros_like(p.data) for name, p in self.params}
        logger.info(f"AdamW over {len(self.params)} tensors "
                    f"({sum(p.size for _, p in self.params)} values), clip={clip_mode}:{grad_clip}")

    def state_names(self) -> List[str]:
        return list(self.exp_avg)

    def step(self, lr: float = None) -> Dict[str, float]:
        """
        执行一步更新（读取 param.grad，None 视为零梯度）

        Args:
            lr: 覆盖本步学习率（学习率计划）

        Returns:
            dict: grad_norm（裁剪前）、clipped_norm、lr
        """
        lr = self.lr if lr is None else lr
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for _, p in self.params]
        if self.clip_mode == CLIP_NORM:
            grads, norm = clip_grad_norm(grads, self.grad_clip)
        else:
            grads, norm = clip_grad_value(grads, self.grad_clip)

        self.step_count += 1
        bias1 = 1.0 - self.beta1 ** self.step_count
        bias2 = 1.0 - self.beta2 ** self.step_count
        for (name, p), g in zip(self.params, grads):
            m = self.exp_avg[name]
            v = self.exp_avg_sq[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / bias1) / (np.sqrt(v / bias2) + self.eps)
            # 参数数组整体替换，保持其他引用看到的旧值不变
            new_data = p.data * (1.0 - lr * self.weight_decay) - lr * update
            p.data = new_data.astype(p.data.dtype, copy=False)
        stats = {"grad_norm": norm, "clipped_norm": global_norm(grads), "lr": lr}
        logger.debug(f"AdamW step {self.step_count}: {stats}")
        return stats
