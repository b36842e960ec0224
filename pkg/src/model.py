"""
显著性检测网络
共享 patch embedding、冻结的三阶段层级编码器（每阶段后接热红外提示适配器）、
冻结的 FPN 颈部与可调的掩码解码器
"""
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from autograd import (
    Tensor, add, as_tensor, concat, matmul, mul, nearest_upsample, no_grad, permute,
    precision, reshape_view, sigmoid, silu, softmax, transpose,
)
from constants import ADAPTER_KAN, ADAPTER_KINDS, PARTITION_FROZEN, PARTITION_TUNABLE
from errors import ConfigError, DimensionError
from kan import KanAdapter, MlpAdapter, SplineGrid
from layers import LayerNorm, Linear, Module, PointwiseConv
from masking import MaskConfig, apply_mask, sample_mask
from utils import derive_rng

logger = logging.getLogger(__name__)


@dataclass
class ModelConfig:
    """模型配置（桌面规模）"""

    input_size: int = 64
    patch_size: int = 8
    in_channels: int = 3
    stage_channels: List[int] = field(default_factory=lambda: [32, 64, 128])
    blocks_per_stage: int = 2
    fpn_dim: int = 64
    adapter_reduction: int = 4
    adapter_kind: str = ADAPTER_KAN
    use_adapters: bool = True
    mlp_hidden_ratio: int = 1
    spline_degree: int = 3
    spline_intervals: int = 5
    spline_lo: float = -1.0
    spline_hi: float = 1.0
    precision: int = 32
    seed: int = 0

    def validate(self):
        stages = len(self.stage_channels)
        if stages < 1:
            raise ConfigError("model.stage_channels must list at least one stage")
        if any(c < 1 for c in self.stage_channels):
            raise ConfigError(f"model.stage_channels must be positive, got {self.stage_channels}")
        if self.patch_size < 2 or self.patch_size & (self.patch_size - 1):
            raise ConfigError(f"model.patch_size must be a power of two >= 2, got {self.patch_size}")
        if self.input_size % (self.patch_size * 2 ** (stages - 1)) != 0:
            raise ConfigError(
                f"model.input_size {self.input_size} not divisible by "
                f"patch_size * 2^(stages-1) = {self.patch_size * 2 ** (stages - 1)}")
        if self.blocks_per_stage < 0:
            raise ConfigError("model.blocks_per_stage must be >= 0")
        if self.fpn_dim < 2 ** self.decoder_blocks:
            raise ConfigError(f"model.fpn_dim {self.fpn_dim} too small for {self.decoder_blocks} decoder blocks")
        if self.adapter_kind not in ADAPTER_KINDS:
            raise ConfigError(f"model.adapter_kind must be one of {ADAPTER_KINDS}, got {self.adapter_kind}")
        for c in self.stage_channels:
            if c % self.adapter_reduction != 0:
                raise ConfigError(f"model.adapter_reduction {self.adapter_reduction} must divide channel count {c}")
        if self.mlp_hidden_ratio < 1:
            raise ConfigError("model.mlp_hidden_ratio must be >= 1")
        if self.precision not in (32, 64):
            raise ConfigError(f"model.precision must be 32 or 64, got {self.precision}")
        self.spline_grid().validate()

    @property
    def decoder_blocks(self) -> int:
        return int(math.log2(self.patch_size))

    def spline_grid(self) -> SplineGrid:
        return SplineGrid(self.spline_degree, self.spline_intervals, self.spline_lo, self.spline_hi)

    def to_dict(self) -> dict:
        return asdict(self)


class PatchEmbed(Module):
    """不重叠的 ps x ps 图块展平后线性投影到 C0 通道"""

    def __init__(self, patch_size: int, in_channels: int, out_channels: int, rng: np.random.Generator):
        super().__init__()
        self.patch_size = patch_size
        self.in_channels = in_channels
        self.proj = self.add_child("proj", Linear(patch_size * patch_size * in_channels, out_channels, rng))

    def __call__(self, image: Tensor) -> Tensor:
        image = as_tensor(image)
        ps = self.patch_size
        if image.ndim != 3 or image.shape[2] != self.in_channels:
            raise DimensionError(f"Patch embedding expects [H,W,{self.in_channels}], got {image.shape}")
        h, w, c = image.shape
        if h % ps or w % ps:
            raise DimensionError(f"Image {h}x{w} not divisible by patch size {ps}")
        gh, gw = h // ps, w // ps
        patches = reshape_view(image, (gh, ps, gw, ps, c))
        patches = permute(patches, (0, 2, 1, 3, 4))
        tokens = self.proj(reshape_view(patches, (gh * gw, ps * ps * c)))
        return reshape_view(tokens, (gh, gw, self.proj.out_features))


class PatchMerge(Module):
    """2x2 相邻 token 合并后投影（空间减半）"""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator):
        super().__init__()
        self.proj = self.add_child("proj", Linear(4 * in_channels, out_channels, rng))

    def __call__(self, fmap: Tensor) -> Tensor:
        h, w, c = fmap.shape
        if h % 2 or w % 2:
            raise DimensionError(f"Patch merge needs even spatial size, got {h}x{w}")
        grouped = permute(reshape_view(fmap, (h // 2, 2, w // 2, 2, c)), (0, 2, 1, 3, 4))
        tokens = self.proj(reshape_view(grouped, (h // 2 * (w // 2), 4 * c)))
        return reshape_view(tokens, (h // 2, w // 2, self.proj.out_features))


class AttentionBlock(Module):
    """预归一化的单头全局自注意力 + 两层前馈（扩展 x2）"""

    def __init__(self, channels: int, rng: np.random.Generator):
        super().__init__()
        self.channels = channels
        self.norm1 = self.add_child("norm1", LayerNorm(channels))
        self.q = self.add_child("q", Linear(channels, channels, rng))
        self.k = self.add_child("k", Linear(channels, channels, rng))
        self.v = self.add_child("v", Linear(channels, channels, rng))
        self.out = self.add_child("out", Linear(channels, channels, rng))
        self.norm2 = self.add_child("norm2", LayerNorm(channels))
        self.fc1 = self.add_child("fc1", Linear(channels, 2 * channels, rng))
        self.fc2 = self.add_child("fc2", Linear(2 * channels, channels, rng))

    def _scores(self, h: Tensor) -> Tensor:
        scores = matmul(self.q(h), transpose(self.k(h)))
        return softmax(mul(scores, 1.0 / math.sqrt(self.channels)), axis=-1)

    def attention_weights(self, tokens: Tensor) -> Tensor:
        return self._scores(self.norm1(tokens))

    def __call__(self, tokens: Tensor) -> Tensor:
        h = self.norm1(tokens)
        weights = self._scores(h)
        tokens = add(tokens, self.out(matmul(weights, self.v(h))))
        ff = self.fc2(silu(self.fc1(self.norm2(tokens))))
        return add(tokens, ff)


class EncoderStage(Module):
    """编码器阶段：可选的 patch merge，随后若干注意力块"""

    def __init__(self, in_channels: int, channels: int, blocks: int, downsample: bool,
                 rng: np.random.Generator):
        super().__init__()
        self.channels = channels
        self.merge = self.add_child("merge", PatchMerge(in_channels, channels, rng)) if downsample else None
        self.blocks = [self.add_child(f"block{i}", AttentionBlock(channels, rng)) for i in range(blocks)]

    def __call__(self, fmap: Tensor) -> Tensor:
        if self.merge is not None:
            fmap = self.merge(fmap)
        h, w, c = fmap.shape
        tokens = reshape_view(fmap, (h * w, c))
        for block in self.blocks:
            tokens = block(tokens)
        return reshape_view(tokens, (h, w, c))


class FpnNeck(Module):
    """侧向 1x1 卷积到 fpn_dim，自顶向下最近邻上采样相加"""

    def __init__(self, stage_channels: List[int], fpn_dim: int, rng: np.random.Generator):
        super().__init__()
        self.laterals = [self.add_child(f"lateral{i}", PointwiseConv(c, fpn_dim, rng))
                         for i, c in enumerate(stage_channels)]

    def __call__(self, features: List[Tensor]) -> Tensor:
        top = self.laterals[-1](features[-1])
        for lateral, fmap in zip(reversed(self.laterals[:-1]), reversed(features[:-1])):
            factor = fmap.shape[0] // top.shape[0]
            top = add(lateral(fmap), nearest_upsample(top, factor))
        return top


class MaskDecoder(Module):
    """上采样块 (最近邻 x2 + 1x1 卷积 + silu) 逐级减半通道，最后 1 通道头 + sigmoid"""

    def __init__(self, fpn_dim: int, blocks: int, rng: np.random.Generator):
        super().__init__()
        self.convs = []
        channels = fpn_dim
        for i in range(blocks - 1):
            self.convs.append(self.add_child(f"up{i}", PointwiseConv(channels, channels // 2, rng)))
            channels //= 2
        self.head = self.add_child("head", PointwiseConv(channels, 1, rng))

    def __call__(self, fmap: Tensor) -> Tensor:
        for conv in self.convs:
            fmap = silu(conv(nearest_upsample(fmap, 2)))
        logits = self.head(nearest_upsample(fmap, 2))
        h, w, _ = logits.shape
        return reshape_view(sigmoid(logits), (h, w))


class SaliencyModel(Module):
    """
    RGB-T 显著性模型
    patch_embed / stages / fpn 冻结；adapters 与 decoder 可调
    """

    def __init__(self, config: ModelConfig):
        """
        初始化模型

        Args:
            config: 模型配置
        """
        super().__init__()
        config.validate()
        self.config = config
        seed = config.seed
        channels = config.stage_channels
        with precision(config.precision):
            self.patch_embed = self.add_child("patch_embed", PatchEmbed(
                config.patch_size, config.in_channels, channels[0], derive_rng(seed, "patch_embed")))
            self.stages = []
            for i, c in enumerate(channels):
                prev = channels[i - 1] if i > 0 else c
                self.stages.append(self.add_child(f"stage{i}", EncoderStage(
                    prev, c, config.blocks_per_stage, i > 0, derive_rng(seed, "stage", i))))
            self.adapters = []
            if config.use_adapters:
                for i, c in enumerate(channels):
                    self.adapters.append(self.add_child(f"adapter{i}", self._build_adapter(c, i)))
            self.fpn = self.add_child("fpn", FpnNeck(channels, config.fpn_dim, derive_rng(seed, "fpn")))
            self.decoder = self.add_child("decoder", MaskDecoder(
                config.fpn_dim, config.decoder_blocks, derive_rng(seed, "decoder")))

        self.labels: Dict[str, str] = {}
        for name, param in self.named_parameters():
            tunable = name.startswith("adapter") or name.startswith("decoder.")
            self.labels[name] = PARTITION_TUNABLE if tunable else PARTITION_FROZEN
            param.requires_grad = tunable
        frozen, tunable = partition_parameters(self)
        logger.info(f"SaliencyModel built: {self.num_parameters()} params "
                    f"({sum(p.size for _, p in tunable)} tunable, adapters={len(self.adapters)})")

    def _build_adapter(self, channels: int, index: int):
        cfg = self.config
        rng = derive_rng(cfg.seed, "adapter", index)
        thermal_channels = cfg.stage_channels[0]
        if cfg.adapter_kind == ADAPTER_KAN:
            return KanAdapter(channels, thermal_channels, cfg.adapter_reduction, cfg.spline_grid(), rng)
        return MlpAdapter(channels, thermal_channels, cfg.adapter_reduction, cfg.mlp_hidden_ratio, rng)

    def _input(self, value) -> Tensor:
        dtype = np.float32 if self.config.precision == 32 else np.float64
        if isinstance(value, Tensor):
            if value.data.dtype != dtype and not value.requires_grad:
                return Tensor._wrap(value.data.astype(dtype))
            return value
        return Tensor._wrap(np.asarray(value, dtype=dtype))

    def encoder_stage(self, fmap: Tensor, stage_index: int) -> Tensor:
        if not 0 <= stage_index < len(self.stages):
            raise DimensionError(f"Stage index {stage_index} out of range")
        return self.stages[stage_index](fmap)

    def encode(self, rgb: Tensor, thermal: Optional[Tensor]) -> List[Tensor]:
        """返回各阶段输出特征图"""
        fmap = self.patch_embed(rgb)
        thermal_embed = None
        if self.adapters and thermal is not None:
            thermal_embed = self.patch_embed(concat([thermal] * self.config.in_channels, axis=2))
        features = []
        for i, stage in enumerate(self.stages):
            fmap = stage(fmap)
            if thermal_embed is not None:
                fmap = self.adapters[i](fmap, thermal_embed)
            features.append(fmap)
        return features

    def forward(self, rgb, thermal, train_mode: bool = False, mask_cfg: Optional[MaskConfig] = None,
                mask_rng=None) -> Tensor:
        """
        前向推理

        Args:
            rgb: [H,W,3]
            thermal: [H,W,1]（None 表示无热红外路径）
            train_mode: 训练模式下先采样并应用互斥掩码
            mask_cfg: 掩码配置
            mask_rng: 掩码随机源（种子或 Generator）

        Returns:
            Tensor: [H,W] 显著图，取值 [0,1]
        """
        with precision(self.config.precision):
            return self._forward(rgb, thermal, train_mode, mask_cfg, mask_rng)

    def _forward(self, rgb, thermal, train_mode, mask_cfg, mask_rng) -> Tensor:
        rgb = self._input(rgb)
        if thermal is not None:
            thermal = self._input(thermal)
            if thermal.ndim == 2:
                thermal = reshape_view(thermal, thermal.shape + (1,))
            if thermal.shape[:2] != rgb.shape[:2]:
                raise DimensionError(f"RGB {rgb.shape} and thermal {thermal.shape} are not aligned")
        if train_mode and mask_cfg is not None and mask_cfg.enabled and thermal is not None:
            pattern = sample_mask(rgb.shape[0], rgb.shape[1], mask_cfg,
                                  mask_rng if mask_rng is not None else 0)
            masked_rgb, masked_thermal = apply_mask(rgb.data, thermal.data, pattern, mask_cfg)
            rgb, thermal = Tensor._wrap(masked_rgb), Tensor._wrap(masked_thermal)
        features = self.encode(rgb, thermal)
        return self.decoder(self.fpn(features))

    __call__ = forward

    def predict(self, rgb: np.ndarray, thermal: Optional[np.ndarray]) -> np.ndarray:
        """评估模式推理，返回 float64 数组"""
        with no_grad():
            return self.forward(rgb, thermal, train_mode=False).data.astype(np.float64)


def forward(model: SaliencyModel, rgb, thermal, train_mode: bool = False,
            mask_cfg: Optional[MaskConfig] = None, mask_rng=None) -> Tensor:
    return model.forward(rgb, thermal, train_mode, mask_cfg, mask_rng)


def partition_parameters(model: SaliencyModel) -> Tuple[List[Tuple[str, Tensor]], List[Tuple[str, Tensor]]]:
    """
    按标签划分参数

    Returns:
        tuple: (冻结参数列表, 可调参数列表)，元素为 (名称, 张量)
    """
    frozen, tunable = [], []
    for name, param in model.named_parameters():
        if model.labels.get(name) == PARTITION_TUNABLE:
            tunable.append((name, param))
        else:
            frozen.append((name, param))
    return frozen, tunable
