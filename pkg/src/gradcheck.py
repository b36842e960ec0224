"""
梯度校验
在 64 位精度下用中心差分检查原语、网络层与整模型的解析梯度
"""
import logging
from typing import Callable, Dict

import numpy as np

from autograd import (
    Tensor, add, concat, div, exp, finite_diff_check, finite_diff_check_param, matmul, mul,
    nearest_resize, nearest_upsample, permute, pointwise_conv, power, precision, relu,
    reshape_view, sigmoid, silu, softmax, sub, tensor_mean, tensor_sum, transpose, zero_grads,
)
from kan import KanAdapter, KanLayer, SplineGrid, bspline_basis_tensor, kan_stack_forward
from layers import LayerNorm
from losses import total_loss
from model import AttentionBlock, ModelConfig, SaliencyModel, partition_parameters
from utils import derive_rng

logger = logging.getLogger(__name__)

PRIMITIVE_TOLERANCE = 1e-5
LAYER_TOLERANCE = 1e-5
MODEL_TOLERANCE = 1e-4
# 参数梯度相对误差的分母下限（边缘基函数对应的样条系数梯度可接近 0）
PARAM_GRAD_FLOOR = 1e-4


def _weighted_sum(out: Tensor, rng: np.random.Generator) -> Tensor:
    """用固定随机权重把任意输出化为标量，避免梯度恰好对称抵消"""
    weights = Tensor(rng.uniform(-1.0, 1.0, size=out.shape))
    return tensor_sum(mul(out, weights))


def _away_from_zero(rng: np.random.Generator, shape) -> np.ndarray:
    magnitude = rng.uniform(0.1, 2.0, size=shape)
    return np.where(rng.random(shape) < 0.5, -magnitude, magnitude)


def primitive_checks(seed: int = 0) -> Dict[str, float]:
    """
    逐个原语的最大相对误差

    Args:
        seed: 随机种子

    Returns:
        dict: 名称 -> 误差
    """
    results = {}
    with precision(64):
        rng = derive_rng(seed, "gradcheck", "primitive")
        w_rng = derive_rng(seed, "gradcheck", "weights")
        other = Tensor(rng.uniform(-2.0, 2.0, size=(4, 5)))
        positive = Tensor(rng.uniform(0.5, 2.0, size=(4, 5)))
        right = Tensor(rng.uniform(-2.0, 2.0, size=(5, 3)))
        conv_w = Tensor(rng.uniform(-1.0, 1.0, size=(3, 2)))
        conv_b = Tensor(rng.uniform(-1.0, 1.0, size=(2,)))
        x45 = rng.uniform(-2.0, 2.0, size=(4, 5))
        x443 = rng.uniform(-2.0, 2.0, size=(4, 4, 3))

        def weighted(fn: Callable[[Tensor], Tensor]) -> Callable[[Tensor], Tensor]:
            weights = Tensor(w_rng.uniform(-1.0, 1.0, size=fn(Tensor(probe_of[fn])).shape))
            return lambda t: tensor_sum(mul(fn(t), weights))

        cases = {
            "add": (lambda t: add(t, other), x45),
            "sub": (lambda t: sub(other, t), x45),
            "mul": (lambda t: mul(t, other), x45),
            "div": (lambda t: div(other, add(mul(t, t), 1.0)), x45),
            "div_denominator": (lambda t: div(t, positive), x45),
            "power": (lambda t: power(add(mul(t, t), 0.5), -0.5), x45),
            "exp": (lambda t: exp(t), x45),
            "sigmoid": (lambda t: sigmoid(t), x45),
            "silu": (lambda t: silu(t), x45),
            "relu": (lambda t: relu(t), _away_from_zero(rng, (4, 5))),
            "sum_axis": (lambda t: tensor_sum(t, axis=1), x45),
            "mean_axis": (lambda t: tensor_mean(t, axis=0, keepdims=True), x45),
            "matmul": (lambda t: matmul(t, right), x45),
            "transpose": (lambda t: transpose(t), x45),
            "permute": (lambda t: permute(t, (2, 0, 1)), x443),
            "reshape": (lambda t: reshape_view(t, (2, 24)), x443),
            "concat": (lambda t: concat([t, mul(t, t)], axis=2), x443),
            "nearest_upsample": (lambda t: nearest_upsample(t, 2), x443),
            "nearest_resize": (lambda t: nearest_resize(t, 3, 2), x443),
            "pointwise_conv": (lambda t: pointwise_conv(t, conv_w, conv_b), x443),
            "softmax": (lambda t: softmax(t, axis=-1), x45),
            "bspline_basis": (lambda t: bspline_basis_tensor(t, SplineGrid()),
                              rng.uniform(-0.95, 0.95, size=(3, 2))),
        }
        probe_of = {fn: x for fn, x in cases.values()}
        for name, (fn, x) in cases.items():
            results[name] = finite_diff_check(weighted(fn), x)

        pred = rng.uniform(0.05, 0.95, size=(8, 8))
        gt = (rng.random((8, 8)) < 0.4).astype(np.float64)
        results["hybrid_loss"] = finite_diff_check(lambda t: total_loss(t, gt).objective, pred)
    return results


def _spanning_inputs(rng: np.random.Generator, n_tokens: int, channels: int, grid: SplineGrid) -> np.ndarray:
    """每个通道的取值均匀铺满样条定义域（逐通道打乱顺序），使每个基函数都有支撑"""
    margin = 0.05 * (grid.hi - grid.lo)
    column = np.linspace(grid.lo + margin, grid.hi - margin, n_tokens)
    return np.stack([rng.permutation(column) for _ in range(channels)], axis=1)


def layer_checks(seed: int = 0) -> Dict[str, float]:
    """网络层（KAN 层、KAN 堆叠、适配器、LayerNorm、注意力块）的输入与参数梯度"""
    results = {}
    with precision(64):
        rng = derive_rng(seed, "gradcheck", "layer")
        grid = SplineGrid()
        layer = KanLayer(4, 3, grid, derive_rng(seed, "gradcheck", "kan"))
        x = _spanning_inputs(rng, 6, 4, grid)
        w_out = Tensor(rng.uniform(-1.0, 1.0, size=(6, 3)))

        def layer_loss(t):
            return tensor_sum(mul(layer(t), w_out))

        results["kan_layer.input"] = finite_diff_check(layer_loss, x)
        probe = Tensor(x)
        for name, param in layer.named_parameters():
            results[f"kan_layer.{name}"] = finite_diff_check_param(
                lambda: layer_loss(probe), param, floor=PARAM_GRAD_FLOOR)

        down = KanLayer(4, 2, grid, derive_rng(seed, "gradcheck", "down"))
        up = KanLayer(2, 4, grid, derive_rng(seed, "gradcheck", "up"))
        w_stack = Tensor(rng.uniform(-1.0, 1.0, size=(6, 4)))
        results["kan_stack.input"] = finite_diff_check(
            lambda t: tensor_sum(mul(kan_stack_forward(down, up, t), w_stack)), x)

        adapter = KanAdapter(8, 4, reduction=4, grid=grid, rng=derive_rng(seed, "gradcheck", "adapter"))
        adapter.up.spline_coeffs.data = rng.normal(0.0, 0.1, size=adapter.up.spline_coeffs.shape)
        adapter.up.base_weight.data = rng.uniform(-0.5, 0.5, size=adapter.up.base_weight.shape)
        # 热红外提示保持小幅，down 层输入仍覆盖整个定义域
        thermal = Tensor(rng.uniform(-0.05, 0.05, size=(2, 2, 4)))
        f_rgb = _spanning_inputs(rng, 16, 8, grid).reshape(4, 4, 8)
        w_adapter = Tensor(rng.uniform(-1.0, 1.0, size=(4, 4, 8)))

        def adapter_loss(t):
            return tensor_sum(mul(adapter(t, thermal), w_adapter))

        results["kan_adapter.input"] = finite_diff_check(adapter_loss, f_rgb)
        rgb_probe = Tensor(f_rgb)
        for name, param in adapter.named_parameters():
            results[f"kan_adapter.{name}"] = finite_diff_check_param(
                lambda: adapter_loss(rgb_probe), param, floor=PARAM_GRAD_FLOOR)

        norm = LayerNorm(5)
        norm.gamma.data = rng.uniform(0.5, 1.5, size=5)
        results["layer_norm.input"] = finite_diff_check(
            lambda t: _weighted_sum(norm(t), derive_rng(seed, "gradcheck", "ln")), rng.normal(size=(3, 5)))

        block = AttentionBlock(4, derive_rng(seed, "gradcheck", "attention"))
        results["attention_block.input"] = finite_diff_check(
            lambda t: _weighted_sum(block(t), derive_rng(seed, "gradcheck", "attn")), rng.normal(size=(5, 4)))
    return results


def model_checks(seed: int = 0, coords_per_tensor: int = 4) -> Dict[str, float]:
    """
    16x16 小模型（patch 4，64 位）的整模型梯度校验
    适配器 up 层先随机化，使热红外路径与 down 层都有非零梯度

    Args:
        seed: 随机种子
        coords_per_tensor: 每个可调张量抽查的坐标数

    Returns:
        dict: 名称 -> 误差
    """
    results = {}
    config = ModelConfig(input_size=16, patch_size=4, precision=64, seed=seed)
    model = SaliencyModel(config)
    rng = derive_rng(seed, "gradcheck", "model")
    with precision(64):
        for adapter in model.adapters:
            adapter.up.spline_coeffs.data = rng.normal(0.0, 0.1, size=adapter.up.spline_coeffs.shape)
            adapter.up.base_weight.data = rng.uniform(-0.3, 0.3, size=adapter.up.base_weight.shape)
        rgb = rng.uniform(0.0, 1.0, size=(16, 16, 3))
        thermal = rng.uniform(0.0, 1.0, size=(16, 16, 1))
        gt = np.zeros((16, 16))
        gt[4:12, 5:11] = 1.0

        def loss_of_input(t):
            return total_loss(model.forward(t, thermal), gt).objective

        results["model.rgb_input"] = finite_diff_check(loss_of_input, rgb, max_coords=16, seed=seed)
        zero_grads(model.parameters())
        rgb_tensor = Tensor(rgb)
        for name, param in partition_parameters(model)[1]:
            results[f"model.{name}"] = finite_diff_check_param(
                lambda: total_loss(model.forward(rgb_tensor, thermal), gt).objective, param,
                max_coords=coords_per_tensor, seed=seed)
        zero_grads(model.parameters())
    return results


SCALES = {
    "primitive": (primitive_checks, PRIMITIVE_TOLERANCE),
    "layer": (layer_checks, LAYER_TOLERANCE),
    "model": (model_checks, MODEL_TOLERANCE),
}


def run_gradcheck(scale: str, seed: int = 0) -> Dict[str, object]:
    """
    执行某一尺度的梯度校验

    Returns:
        dict: scale、tolerance、worst、passed、errors（名称 -> 误差）
    """
    fn, tolerance = SCALES[scale]
    errors = fn(seed)
    worst = max(errors.values()) if errors else 0.0
    for name, err in errors.items():
        level = logging.WARNING if err >= tolerance else logging.DEBUG
        logger.log(level, f"gradcheck {scale}/{name}: {err:.3e}")
    logger.info(f"gradcheck {scale}: worst relative error {worst:.3e} over {len(errors)} targets")
    return {"scale": scale, "tolerance": tolerance, "worst": worst, "passed": worst < tolerance,
            "errors": errors}
