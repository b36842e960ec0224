"""
KAN 层与 KAN 适配器
B 样条基 (Cox-de Boor)、样条矩阵层、两层 KAN 堆叠，以及把热红外提示注入 RGB 特征流的适配器
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from autograd import (
    Tensor, add, as_tensor, matmul, mul, nearest_resize, record, reshape_view, silu, transpose,
)
from constants import ADAPTER_KAN, ADAPTER_MLP
from errors import ConfigError, DimensionError
from layers import Linear, Module, PointwiseConv, uniform_init

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SplineGrid:
    """均匀扩展节点网格：G 个内部区间，两侧各扩展 k 个节点"""

    degree: int = 3
    intervals: int = 5
    lo: float = -1.0
    hi: float = 1.0

    def validate(self):
        if self.intervals < 1:
            raise ConfigError(f"Spline grid needs at least one interval, got G={self.intervals}")
        if self.degree < 0:
            raise ConfigError(f"Spline degree must be >= 0, got k={self.degree}")
        if not self.lo < self.hi:
            raise ConfigError(f"Spline domain is empty: [{self.lo}, {self.hi}]")

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / self.intervals

    @property
    def knots(self) -> np.ndarray:
        """长度 G + 2k + 1 的节点向量"""
        steps = np.arange(-self.degree, self.intervals + self.degree + 1, dtype=np.float64)
        return self.lo + steps * self.spacing

    @property
    def n_basis(self) -> int:
        return self.intervals + self.degree

    def greville(self) -> np.ndarray:
        """Greville 横坐标：系数取这些值时样条精确再现 f(x) = x (k >= 1)"""
        t = self.knots
        k = self.degree
        return np.array([t[j + 1:j + k + 1].mean() for j in range(self.n_basis)])


def _basis_levels(x: np.ndarray, grid: SplineGrid):
    """
    Cox-de Boor 递推，返回第 k-1 阶与第 k 阶基函数

    Args:
        x: 已截断到定义域的输入
        grid: 样条网格

    Returns:
        tuple: (B^{k-1} 或 None, B^k)，最后一维分别为 G+k+1 与 G+k
    """
    t = grid.knots
    k = grid.degree
    lead = x.shape
    flat = x.reshape(-1)
    xe = flat[:, None]
    bases = ((xe >= t[:-1]) & (xe < t[1:])).astype(np.float64)
    # 右端点归入最后一个内部区间
    at_hi = flat >= grid.hi
    if np.any(at_hi):
        bases[at_hi] = 0.0
        bases[at_hi, k + grid.intervals - 1] = 1.0
    previous = None
    for d in range(1, k + 1):
        previous = bases
        left = (xe - t[:-(d + 1)]) / (t[d:-1] - t[:-(d + 1)]) * bases[:, :-1]
        right = (t[d + 1:] - xe) / (t[d + 1:] - t[1:-d]) * bases[:, 1:]
        bases = left + right
    if previous is not None:
        previous = previous.reshape(lead + (previous.shape[-1],))
    return previous, bases.reshape(lead + (bases.shape[-1],))


def bspline_basis(x, grid: SplineGrid) -> np.ndarray:
    """
    计算 B 样条基函数值

    Args:
        x: 标量或数组，先截断到 [lo, hi]
        grid: 样条网格

    Returns:
        np.ndarray: 形状 x.shape + (G+k,)
    """
    grid.validate()
    xc = np.clip(np.asarray(x, dtype=np.float64), grid.lo, grid.hi)
    _, bases = _basis_levels(xc, grid)
    return bases


def bspline_basis_tensor(x: Tensor, grid: SplineGrid) -> Tensor:
    """
    可微的 B 样条基原语 [..., n] -> [..., n, G+k]
    导数 dB_j^k/dx = (B_j^{k-1} - B_{j+1}^{k-1}) / h（均匀节点），截断区域外为 0
    """
    grid.validate()
    x = as_tensor(x)
    raw = x.data.astype(np.float64)
    xc = np.clip(raw, grid.lo, grid.hi)
    lower, bases = _basis_levels(xc, grid)
    dtype = x.data.dtype

    def backward(g):
        if grid.degree == 0:
            return (np.zeros_like(x.data),)
        dbases = (lower[..., :-1] - lower[..., 1:]) / grid.spacing
        inside = (raw > grid.lo) & (raw < grid.hi)
        return ((np.sum(g * dbases, axis=-1) * inside).astype(dtype),)

    return record("bspline_basis", bases.astype(dtype), (x,), backward)


class KanLayer(Module):
    """
    样条矩阵层：y_q = Σ_p scale[q,p] · (base[q,p]·silu(x_p) + Σ_j c[q,p,j]·B_j(x_p))
    """

    def __init__(self, n_in: int, n_out: int, grid: Optional[SplineGrid] = None,
                 rng: Optional[np.random.Generator] = None, zero_init: bool = False):
        """
        初始化 KAN 层

        Args:
            n_in: 输入维度
            n_out: 输出维度
            grid: 样条网格（默认 k=3, G=5, [-1,1]）
            rng: 随机数生成器
            zero_init: 为 True 时样条系数与基路径权重全零（输出恒为 0）
        """
        super().__init__()
        if n_in < 1 or n_out < 1:
            raise ConfigError(f"KanLayer dimensions must be positive, got {n_in}->{n_out}")
        self.n_in = n_in
        self.n_out = n_out
        self.grid = grid or SplineGrid()
        self.grid.validate()
        rng = rng or np.random.default_rng(0)
        nb = self.grid.n_basis
        if zero_init:
            coeffs = np.zeros((n_out, n_in, nb))
            base = np.zeros((n_out, n_in))
        else:
            coeffs = rng.normal(0.0, 0.1, size=(n_out, n_in, nb))
            base = uniform_init(rng, (n_out, n_in), n_in)
        self.spline_coeffs = self.add_param("spline_coeffs", coeffs)
        self.base_weight = self.add_param("base_weight", base)
        self.edge_scale = self.add_param("edge_scale", np.ones((n_out, n_in)))

    @classmethod
    def identity(cls, n: int, grid: Optional[SplineGrid] = None) -> "KanLayer":
        """
        在 [lo, hi] 上精确实现恒等映射的层：对角边的样条系数取 Greville 横坐标，
        基路径为零（三次样条再现线性函数）

        Args:
            n: 维度
            grid: 样条网格（阶数需 >= 1）

        Returns:
            KanLayer: 恒等配置的层
        """
        layer = cls(n, n, grid=grid, zero_init=True)
        if layer.grid.degree < 1:
            raise ConfigError("Identity configuration needs spline degree >= 1")
        coeffs = np.zeros((n, n, layer.grid.n_basis))
        for p in range(n):
            coeffs[p, p] = layer.grid.greville()
        layer.spline_coeffs.data = coeffs.astype(layer.spline_coeffs.data.dtype)
        return layer

    def __call__(self, x: Tensor) -> Tensor:
        return kan_layer_forward(self, x)


def kan_layer_forward(layer: KanLayer, x: Tensor) -> Tensor:
    """
    KAN 层前向：输出为所有边激活之和

    Args:
        layer: KAN 层
        x: [..., n_in]

    Returns:
        Tensor: [..., n_out]
    """
    x = as_tensor(x)
    if x.ndim < 1 or x.shape[-1] != layer.n_in:
        raise DimensionError(f"KanLayer expects last dimension {layer.n_in}, got shape {x.shape}")
    lead = x.shape[:-1]
    flat = reshape_view(x, (-1, layer.n_in))
    nb = layer.grid.n_basis

    base_w = mul(layer.edge_scale, layer.base_weight)
    base_part = matmul(silu(flat), transpose(base_w))

    bases = bspline_basis_tensor(flat, layer.grid)
    bases = reshape_view(bases, (-1, layer.n_in * nb))
    scaled = mul(layer.spline_coeffs, reshape_view(layer.edge_scale, (layer.n_out, layer.n_in, 1)))
    spline_w = reshape_view(scaled, (layer.n_out, layer.n_in * nb))
    spline_part = matmul(bases, transpose(spline_w))

    return reshape_view(add(base_part, spline_part), lead + (layer.n_out,))


def kan_stack_forward(down: KanLayer, up: KanLayer, x: Tensor) -> Tensor:
    """两层 KAN 复合：up(down(x))，对应表示定理的内层/外层函数"""
    if up.n_in != down.n_out:
        raise DimensionError(f"KAN stack mismatch: down outputs {down.n_out}, up expects {up.n_in}")
    return kan_layer_forward(up, kan_layer_forward(down, x))


class _ThermalPromptAdapter(Module):
    """
    适配器公共部分：热红外对齐投影与注入公式
    F' = F + A(F + T') + T'，T' = align_proj(resize(T))
    """

    kind = ""

    def __init__(self, channels: int, thermal_channels: int, reduction: int,
                 rng: np.random.Generator):
        super().__init__()
        if reduction < 1 or channels % reduction != 0:
            raise ConfigError(f"Adapter reduction {reduction} must divide channel count {channels}")
        self.channels = channels
        self.thermal_channels = thermal_channels
        self.reduction = reduction
        self.hidden = channels // reduction
        self.align_proj = self.add_child(
            "align_proj", PointwiseConv(thermal_channels, channels, rng))

    def align(self, thermal: Tensor, height: int, width: int) -> Tensor:
        thermal = as_tensor(thermal)
        if thermal.ndim != 3 or thermal.shape[2] != self.thermal_channels:
            raise ConfigError(
                f"Thermal prompt has shape {thermal.shape}, adapter expects {self.thermal_channels} channels")
        return self.align_proj(nearest_resize(thermal, height, width))

    def transform(self, tokens: Tensor) -> Tensor:
        raise NotImplementedError

    def __call__(self, f_rgb: Tensor, thermal: Tensor) -> Tensor:
        return adapter_forward(self, f_rgb, thermal)


class KanAdapter(_ThermalPromptAdapter):
    """KAN 适配器：down (C -> C/r) 与 up (C/r -> C) 两层 KAN，up 层零初始化"""

    kind = ADAPTER_KAN

    def __init__(self, channels: int, thermal_channels: int, reduction: int = 4,
                 grid: Optional[SplineGrid] = None, rng: Optional[np.random.Generator] = None):
        rng = rng or np.random.default_rng(0)
        super().__init__(channels, thermal_channels, reduction, rng)
        self.grid = grid or SplineGrid()
        self.down = self.add_child("down", KanLayer(channels, self.hidden, self.grid, rng))
        self.up = self.add_child("up", KanLayer(self.hidden, channels, self.grid, rng, zero_init=True))
        logger.debug(f"KanAdapter C={channels} C_t={thermal_channels} r={reduction}")

    def transform(self, tokens: Tensor) -> Tensor:
        return kan_stack_forward(self.down, self.up, tokens)


class MlpAdapter(_ThermalPromptAdapter):
    """MLP 对照适配器：C -> hidden -> C，silu 激活，第二层零初始化"""

    kind = ADAPTER_MLP

    def __init__(self, channels: int, thermal_channels: int, reduction: int = 4,
                 hidden_ratio: int = 1, rng: Optional[np.random.Generator] = None):
        rng = rng or np.random.default_rng(0)
        super().__init__(channels, thermal_channels, reduction, rng)
        self.hidden = self.hidden * hidden_ratio
        self.fc1 = self.add_child("fc1", Linear(channels, self.hidden, rng))
        self.fc2 = self.add_child("fc2", Linear(self.hidden, channels, rng, zero_init=True))

    def transform(self, tokens: Tensor) -> Tensor:
        return self.fc2(silu(self.fc1(tokens)))


def adapter_forward(adapter: _ThermalPromptAdapter, f_rgb: Tensor, thermal: Tensor) -> Tensor:
    """
    热红外提示注入：先加到 RGB 特征上送入适配器，输出后再加一次

    Args:
        adapter: KAN 或 MLP 适配器
        f_rgb: [H,W,C] RGB 特征
        thermal: [H',W',C_t] 热红外特征

    Returns:
        Tensor: [H,W,C] 融合后的特征
    """
    f_rgb = as_tensor(f_rgb)
    if f_rgb.ndim != 3 or f_rgb.shape[2] != adapter.channels:
        raise ConfigError(f"RGB features {f_rgb.shape} do not match adapter channels {adapter.channels}")
    h, w, c = f_rgb.shape
    prompt = adapter.align(thermal, h, w)
    prompted = add(f_rgb, prompt)
    tokens = reshape_view(prompted, (h * w, c))
    delta = reshape_view(adapter.transform(tokens), (h, w, c))
    return add(add(f_rgb, delta), prompt)


# ---------------------------------------------------------------------------
# 参数量与计算量（闭式公式）
# ---------------------------------------------------------------------------

def kan_layer_param_count(n_in: int, n_out: int, intervals: int, degree: int) -> int:
    """样条系数 + 基路径权重 + 边缩放"""
    return n_out * n_in * (intervals + degree) + n_out * n_in + n_out * n_in


def align_param_count(channels: int, thermal_channels: int) -> int:
    return thermal_channels * channels + channels


def kan_adapter_param_count(channels: int, thermal_channels: int, reduction: int,
                            intervals: int, degree: int, include_align: bool = True) -> int:
    hidden = channels // reduction
    total = (kan_layer_param_count(channels, hidden, intervals, degree)
             + kan_layer_param_count(hidden, channels, intervals, degree))
    if include_align:
        total += align_param_count(channels, thermal_channels)
    return total


def mlp_adapter_param_count(channels: int, thermal_channels: int, reduction: int,
                            hidden_ratio: int = 1, include_align: bool = True) -> int:
    hidden = (channels // reduction) * hidden_ratio
    total = channels * hidden + hidden + hidden * channels + channels
    if include_align:
        total += align_param_count(channels, thermal_channels)
    return total


def break_even_threshold(channels: int, reduction: int, hidden_ratio: int = 1) -> float:
    """
    KAN 适配器参数少于 MLP 对照的条件：G + k + 2 < 返回值
    （两者共享对齐投影，不计入比较）
    """
    hidden = channels // reduction
    return mlp_adapter_param_count(channels, 0, reduction, hidden_ratio, include_align=False) / (
        2.0 * channels * hidden)


def kan_adapter_flops(channels: int, reduction: int, intervals: int, degree: int) -> int:
    """
    每像素乘加次数估计：每条边 (G+k) 个样条项 + 1 个基路径项，
    外加每个输入的 Cox-de Boor 递推约 (k+1)^2 次运算
    """
    hidden = channels // reduction
    edges = 2 * channels * hidden
    basis_evals = (channels + hidden) * (degree + 1) ** 2
    return edges * (intervals + degree + 1) + basis_evals


def mlp_adapter_flops(channels: int, reduction: int, hidden_ratio: int = 1) -> int:
    hidden = (channels // reduction) * hidden_ratio
    return 2 * channels * hidden


def count_params(module) -> int:
    """
    统计 KAN 层、适配器或整个模型的参数个数

    Args:
        module: 任意 Module

    Returns:
        int: 参数总数
    """
    return module.num_parameters()
