"""
基础网络层
参数容器 Module 以及线性层、1x1 卷积、LayerNorm
"""
import logging
from typing import Dict, List, Tuple

import numpy as np

from autograd import (
    Tensor, add, matmul, mul, pointwise_conv, power, sub, tensor_mean,
)

logger = logging.getLogger(__name__)


def uniform_init(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    """
    中心化均匀分布初始化，范围 ±1/sqrt(fan_in)

    Args:
        rng: 随机数生成器
        shape: 参数形状
        fan_in: 输入扇入

    Returns:
        np.ndarray: 初始化数组
    """
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """参数容器：按注册顺序保存参数与子模块"""

    def __init__(self):
        self._params: Dict[str, Tensor] = {}
        self._children: Dict[str, "Module"] = {}

    def add_param(self, name: str, value: np.ndarray) -> Tensor:
        param = Tensor(value, requires_grad=True, name=name)
        self._params[name] = param
        return param

    def add_child(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> List[Tuple[str, Tensor]]:
        items = [(f"{prefix}{name}", p) for name, p in self._params.items()]
        for child_name, child in self._children.items():
            items.extend(child.named_parameters(f"{prefix}{child_name}."))
        return items

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


class Linear(Module):
    """二维线性层 [N,in] -> [N,out]"""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator,
                 zero_init: bool = False):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        if zero_init:
            weight = np.zeros((in_features, out_features))
        else:
            weight = uniform_init(rng, (in_features, out_features), in_features)
        self.weight = self.add_param("weight", weight)
        self.bias = self.add_param("bias", np.zeros(out_features))

    def __call__(self, x: Tensor) -> Tensor:
        return add(matmul(x, self.weight), self.bias)


class PointwiseConv(Module):
    """1x1 卷积 [H,W,in] -> [H,W,out]"""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator,
                 zero_init: bool = False):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        if zero_init:
            weight = np.zeros((in_channels, out_channels))
        else:
            weight = uniform_init(rng, (in_channels, out_channels), in_channels)
        self.weight = self.add_param("weight", weight)
        self.bias = self.add_param("bias", np.zeros(out_channels))

    def __call__(self, x: Tensor) -> Tensor:
        return pointwise_conv(x, self.weight, self.bias)


class LayerNorm(Module):
    """对最后一维做归一化"""

    def __init__(self, channels: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.gamma = self.add_param("gamma", np.ones(channels))
        self.beta = self.add_param("beta", np.zeros(channels))

    def __call__(self, x: Tensor) -> Tensor:
        centered = sub(x, tensor_mean(x, axis=-1, keepdims=True))
        var = tensor_mean(mul(centered, centered), axis=-1, keepdims=True)
        normed = mul(centered, power(add(var, self.eps), -0.5))
        return add(mul(normed, self.gamma), self.beta)
