"""
KAN-SAM Constants
掩码标签、实验变体、数据集格式与退出码等常量
"""

# 掩码像素标签（三值互斥域）
MASK_UNMASKED = 0
MASK_RGB = 1
MASK_THERMAL = 2

# 掩码概率解释方式
MASK_MODE_PER_PAIR = "per_pair"            # 10% 总概率，再均匀选择模态
MASK_MODE_PER_MODALITY = "per_modality"    # 每个模态各 10%，支撑集互斥
MASK_MODES = [MASK_MODE_PER_PAIR, MASK_MODE_PER_MODALITY]

# mask-preview 调色板 (R, G, B)
MASK_PREVIEW_COLORS = {
    MASK_UNMASKED: (0, 0, 0),
    MASK_RGB: (255, 0, 0),
    MASK_THERMAL: (0, 0, 255),
}

# 参数分组标签
PARTITION_FROZEN = "frozen"
PARTITION_TUNABLE = "tunable"

# 适配器类型
ADAPTER_KAN = "kan"
ADAPTER_MLP = "mlp"
ADAPTER_KINDS = [ADAPTER_KAN, ADAPTER_MLP]

# 消融实验变体: 名称 -> (启用掩码, 启用适配器)
VARIANT_BASE = "base"
VARIANT_MASK_ONLY = "mask-only"
VARIANT_KAN_ONLY = "kan-only"
VARIANT_FULL = "full"
VARIANTS = {
    VARIANT_BASE: (False, False),
    VARIANT_MASK_ONLY: (True, False),
    VARIANT_KAN_ONLY: (False, True),
    VARIANT_FULL: (True, True),
}

# 变体在报告中的显示名
VARIANT_LABELS = {
    VARIANT_BASE: "SAM2",
    VARIANT_MASK_ONLY: "SAM2+Mask",
    VARIANT_KAN_ONLY: "SAM2+KAN",
    VARIANT_FULL: "SAM2+Mask+KAN",
}

# 合成数据集场景
REGIME_RGB_EASY = "rgb-easy"
REGIME_THERMAL_INFORMATIVE = "thermal-informative"
REGIMES = [REGIME_RGB_EASY, REGIME_THERMAL_INFORMATIVE]

SHAPE_ELLIPSE = "ellipse"
SHAPE_RECTANGLE = "rectangle"
SHAPE_TRIANGLE = "triangle"
SHAPES = [SHAPE_ELLIPSE, SHAPE_RECTANGLE, SHAPE_TRIANGLE]

SPLIT_TRAIN = "train"
SPLIT_TEST = "test"

# 清单文件格式
MANIFEST_MAGIC = "#kan-sam-manifest"
MANIFEST_VERSION = 1
MANIFEST_COLUMNS = ["id", "split", "rgb", "thermal", "gt"]

# 检查点格式
CHECKPOINT_MAGIC = b"KSAMCKPT"
CHECKPOINT_VERSION = 1

# 评估指标
METRIC_FIELDS = ["f_avg", "f_max", "f_w", "mae", "e_m", "s_m"]
THRESHOLD_SWEEP = "sweep"
THRESHOLD_ADAPTIVE = "adaptive"
THRESHOLD_MODES = [THRESHOLD_SWEEP, THRESHOLD_ADAPTIVE]
THRESHOLD_COUNT = 256
F_BETA2 = 0.3
WF_BETA2 = 1.0
S_ALPHA = 0.5
LOSS_SMOOTH = 1.0

# 梯度裁剪与学习率计划
CLIP_NORM = "norm"
CLIP_VALUE = "value"
CLIP_MODES = [CLIP_NORM, CLIP_VALUE]
SCHEDULE_CONSTANT = "constant"
SCHEDULE_COSINE = "cosine"
SCHEDULES = [SCHEDULE_CONSTANT, SCHEDULE_COSINE]

# gradcheck 尺度
GRADCHECK_SCALES = ["primitive", "layer", "model"]

# 进程退出码
EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def variant_flags(variant: str) -> tuple:
    """
    获取消融变体对应的开关

    Args:
        variant: 变体名称 (base/mask-only/kan-only/full)

    Returns:
        tuple: (启用掩码, 启用适配器)
    """
    if variant not in VARIANTS:
        raise KeyError(f"Unknown variant: {variant}")
    return VARIANTS[variant]


def sweep_thresholds():
    """
    阈值扫描使用的 256 个阈值：[0,1] 等分 256 个区间的中点

    Returns:
        list: 升序阈值
    """
    return [(i + 0.5) / THRESHOLD_COUNT for i in range(THRESHOLD_COUNT)]
