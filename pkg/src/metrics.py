"""
显著性检测评估指标
MAE / F_avg / F_max / 加权 F / S-measure / E-measure，全部以 float64 计算
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy import ndimage

from constants import (
    F_BETA2, METRIC_FIELDS, S_ALPHA, THRESHOLD_ADAPTIVE, THRESHOLD_MODES, THRESHOLD_SWEEP,
    WF_BETA2, sweep_thresholds,
)
from errors import ConfigError, DatasetError, DimensionError
from utils import round_half_away

logger = logging.getLogger(__name__)

_EPS = np.spacing(1)
_THRESHOLDS = np.asarray(sweep_thresholds(), dtype=np.float64)


def _prepare(pred, gt) -> Tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt)
    if pred.ndim == 3 and pred.shape[2] == 1:
        pred = pred[:, :, 0]
    if gt.ndim == 3 and gt.shape[2] == 1:
        gt = gt[:, :, 0]
    if pred.shape != gt.shape or pred.ndim != 2:
        raise DimensionError(f"Prediction {pred.shape} and ground truth {gt.shape} must be equal 2-D maps")
    return np.clip(pred, 0.0, 1.0), gt > 0.5


def adaptive_threshold(pred: np.ndarray) -> float:
    """自适应阈值 min(2·mean(pred), 1)"""
    return float(min(2.0 * float(np.mean(pred)), 1.0))


def mae(pred, gt) -> float:
    """平均绝对误差"""
    pred, gt = _prepare(pred, gt)
    return float(np.mean(np.abs(pred - gt)))


def _f_beta(binary: np.ndarray, gt: np.ndarray, beta2: float) -> float:
    tp = float(np.count_nonzero(binary & gt))
    n_pred = float(np.count_nonzero(binary))
    n_gt = float(np.count_nonzero(gt))
    if n_pred == 0 or n_gt == 0:
        return 0.0
    p, r = tp / n_pred, tp / n_gt
    denom = beta2 * p + r
    if denom == 0:
        return 0.0
    return (1.0 + beta2) * p * r / denom


def f_curve(pred, gt, beta2: float = F_BETA2) -> np.ndarray:
    """256 个阈值下的 F_β 曲线"""
    pred, gt = _prepare(pred, gt)
    return np.array([_f_beta(pred >= t, gt, beta2) for t in _THRESHOLDS])


def f_measures(pred, gt, mode: str = THRESHOLD_SWEEP, beta2: float = F_BETA2) -> Tuple[float, float]:
    """
    F_avg 与 F_max

    Args:
        pred: [H,W] 预测
        gt: [H,W] 真值
        mode: sweep（阈值扫描均值）或 adaptive（自适应阈值）
        beta2: β²

    Returns:
        tuple: (f_avg, f_max)
    """
    curve = f_curve(pred, gt, beta2)
    f_max = float(curve.max())
    if mode == THRESHOLD_SWEEP:
        return float(curve.mean()), f_max
    if mode == THRESHOLD_ADAPTIVE:
        p, g = _prepare(pred, gt)
        f_adp = _f_beta(p >= adaptive_threshold(p), g, beta2)
        return f_adp, max(f_max, f_adp)
    raise ConfigError(f"Unknown threshold mode: {mode}")


def _gaussian_kernel(size: int = 7, sigma: float = 5.0) -> np.ndarray:
    half = size // 2
    y, x = np.mgrid[-half:half + 1, -half:half + 1]
    kernel = np.exp(-(x * x + y * y) / (2.0 * sigma * sigma))
    kernel[kernel < _EPS * kernel.max()] = 0
    return kernel / kernel.sum()


def _propagate_error(error: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """
    背景像素取最近前景像素的误差；多个前景像素等距时取其中最大误差
    """
    fg = np.argwhere(gt)
    bg = np.argwhere(~gt)
    fg_error = error[gt]
    out = error.copy()
    for start in range(0, len(bg), 1024):
        chunk = bg[start:start + 1024]
        d2 = ((chunk[:, None, :] - fg[None, :, :]) ** 2).sum(axis=2)
        nearest = d2 == d2.min(axis=1, keepdims=True)
        out[chunk[:, 0], chunk[:, 1]] = np.where(nearest, fg_error[None, :], -np.inf).max(axis=1)
    return out


def weighted_f(pred, gt, beta2: float = WF_BETA2, return_flag: bool = False):
    """
    加权 F-measure

    误差 |pred-gt| 先经 7x7、σ=5 高斯依赖项修正（作用于前景像素），
    背景像素再按到最近前景像素的欧氏距离以 0.5 为底衰减加权

    Args:
        pred: [H,W] 预测
        gt: [H,W] 真值
        beta2: β²
        return_flag: 同时返回"真值全零"警告标志

    Returns:
        float 或 (float, bool)
    """
    pred, gt = _prepare(pred, gt)
    if not gt.any():
        logger.warning("Weighted F-measure undefined for an all-zero ground truth; reporting 0")
        return (0.0, True) if return_flag else 0.0

    error = np.abs(pred - gt)
    dist = ndimage.distance_transform_edt(~gt)
    et = _propagate_error(error, gt)
    ea = ndimage.convolve(et, _gaussian_kernel(), mode="constant", cval=0.0)
    min_e_ea = np.where(gt & (ea < error), ea, error)
    weight = np.where(gt, 1.0, 2.0 - np.exp(np.log(0.5) / 5.0 * dist))
    ew = min_e_ea * weight

    tpw = float(np.sum(gt)) - float(np.sum(ew[gt]))
    fpw = float(np.sum(ew[~gt]))
    recall = 1.0 - float(np.mean(ew[gt]))
    precision = tpw / (tpw + fpw + _EPS)
    q = (1.0 + beta2) * recall * precision / (recall + beta2 * precision + _EPS)
    return (q, False) if return_flag else q


def _centroid(gt: np.ndarray) -> Tuple[int, int]:
    h, w = gt.shape
    if not gt.any():
        return int(round_half_away(np.float64(h / 2))), int(round_half_away(np.float64(w / 2)))
    coords = np.argwhere(gt)
    cy, cx = round_half_away(coords.mean(axis=0))
    return int(cy) + 1, int(cx) + 1


def _ssim(pred: np.ndarray, gt: np.ndarray) -> float:
    n = pred.size
    if n == 0:
        return 0.0
    x, y = float(pred.mean()), float(gt.mean())
    denom = max(n - 1, 1)
    sigma_x = float(np.sum((pred - x) ** 2)) / denom
    sigma_y = float(np.sum((gt - y) ** 2)) / denom
    sigma_xy = float(np.sum((pred - x) * (gt - y))) / denom
    alpha = 4.0 * x * y * sigma_xy
    beta = (x * x + y * y) * (sigma_x + sigma_y)
    if alpha != 0:
        return alpha / (beta + _EPS)
    if beta == 0:
        return 1.0
    return 0.0


def _s_region(pred: np.ndarray, gt: np.ndarray) -> float:
    h, w = gt.shape
    area = h * w
    y, x = _centroid(gt)
    gt_f = gt.astype(np.float64)
    score = 0.0
    for rows, cols in ((slice(0, y), slice(0, x)), (slice(0, y), slice(x, w)),
                       (slice(y, h), slice(0, x)), (slice(y, h), slice(x, w))):
        block_pred, block_gt = pred[rows, cols], gt_f[rows, cols]
        score += block_pred.size / area * _ssim(block_pred, block_gt)
    return score


def _s_object_term(values: np.ndarray) -> float:
    x = float(values.mean())
    sigma = float(values.std(ddof=1)) if values.size >= 2 else 0.0
    return 2.0 * x / (x * x + 1.0 + sigma + _EPS)


def _s_object(pred: np.ndarray, gt: np.ndarray) -> float:
    u = float(gt.mean())
    fg = (pred * gt)[gt]
    bg = ((1.0 - pred) * ~gt)[~gt]
    return u * _s_object_term(fg) + (1.0 - u) * _s_object_term(bg)


def s_measure(pred, gt, alpha: float = S_ALPHA) -> float:
    """
    结构相似度 S = α·S_object + (1-α)·S_region
    真值全零时取 1-mean(pred)，全一时取 mean(pred)
    """
    pred, gt = _prepare(pred, gt)
    y = float(gt.mean())
    if y == 0:
        return 1.0 - float(pred.mean())
    if y == 1:
        return float(pred.mean())
    score = alpha * _s_object(pred, gt) + (1.0 - alpha) * _s_region(pred, gt)
    return max(0.0, score)


def _enhanced_alignment(binary: np.ndarray, gt: np.ndarray) -> float:
    if not gt.any():
        return float(np.mean(1.0 - binary))
    if gt.all():
        return float(np.mean(binary))
    dp = binary - binary.mean()
    dg = gt - gt.mean()
    align = 2.0 * dp * dg / (dp * dp + dg * dg + _EPS)
    return float(np.mean((align + 1.0) ** 2 / 4.0))


def e_curve(pred, gt) -> np.ndarray:
    """256 个阈值下的增强对齐得分"""
    pred, gt = _prepare(pred, gt)
    g = gt.astype(np.float64)
    return np.array([_enhanced_alignment((pred >= t).astype(np.float64), g) for t in _THRESHOLDS])


def e_measure(pred, gt, mode: str = THRESHOLD_SWEEP) -> float:
    """
    E-measure

    Args:
        pred: [H,W] 预测
        gt: [H,W] 真值
        mode: sweep 取阈值均值，adaptive 取自适应阈值

    Returns:
        float: 得分
    """
    if mode == THRESHOLD_SWEEP:
        return float(e_curve(pred, gt).mean())
    if mode == THRESHOLD_ADAPTIVE:
        p, g = _prepare(pred, gt)
        return _enhanced_alignment((p >= adaptive_threshold(p)).astype(np.float64), g.astype(np.float64))
    raise ConfigError(f"Unknown threshold mode: {mode}")


def compute_metrics(pred, gt, mode: str = THRESHOLD_SWEEP) -> Dict[str, float]:
    """单个样本的六项指标"""
    if mode not in THRESHOLD_MODES:
        raise ConfigError(f"Unknown threshold mode: {mode}")
    f_avg, f_max = f_measures(pred, gt, mode)
    return {
        "f_avg": f_avg,
        "f_max": f_max,
        "f_w": weighted_f(pred, gt),
        "mae": mae(pred, gt),
        "e_m": e_measure(pred, gt, mode),
        "s_m": s_measure(pred, gt),
    }


@dataclass
class MetricsReport:
    """数据集级指标：六项均值 + 逐样本明细"""

    f_avg: float = 0.0
    f_max: float = 0.0
    f_w: float = 0.0
    mae: float = 0.0
    e_m: float = 0.0
    s_m: float = 0.0
    threshold_mode: str = THRESHOLD_SWEEP
    rows: List[Dict] = field(default_factory=list)

    def scores(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in METRIC_FIELDS}

    def to_dict(self) -> dict:
        return {**self.scores(), "threshold_mode": self.threshold_mode, "samples": self.rows}

    def table(self) -> str:
        header = "  ".join(f"{name:>8}" for name in METRIC_FIELDS)
        values = "  ".join(f"{getattr(self, name):8.4f}" for name in METRIC_FIELDS)
        return f"{header}\n{values}"


class MetricSuite:
    """逐样本累积指标，按加入顺序归约"""

    def __init__(self, threshold_mode: str = THRESHOLD_SWEEP):
        if threshold_mode not in THRESHOLD_MODES:
            raise ConfigError(f"Unknown threshold mode: {threshold_mode}")
        self.threshold_mode = threshold_mode
        self.rows: List[Dict] = []

    def step(self, pred, gt, sample_id: str = ""):
        row = {"id": sample_id}
        row.update(compute_metrics(pred, gt, self.threshold_mode))
        self.rows.append(row)

    def add_row(self, row: Dict):
        self.rows.append(row)

    def get_results(self) -> MetricsReport:
        if not self.rows:
            raise DatasetError("No samples were evaluated")
        means = {name: float(np.mean([row[name] for row in self.rows])) for name in METRIC_FIELDS}
        return MetricsReport(threshold_mode=self.threshold_mode, rows=list(self.rows), **means)


def evaluate(model, samples: Sequence, threads: int = 1,
             threshold_mode: str = THRESHOLD_SWEEP) -> MetricsReport:
    """
    在数据集上评估模型（不做掩码）

    Args:
        model: 带 predict(rgb, thermal) 方法的模型
        samples: RgbtSample 序列
        threads: 并行线程数
        threshold_mode: 阈值模式

    Returns:
        MetricsReport: 评估报告
    """
    suite = MetricSuite(threshold_mode)
    if not samples:
        raise DatasetError("Evaluation set is empty")

    def score(sample) -> Dict:
        pred = model.predict(sample.rgb, sample.thermal)
        row = {"id": sample.id}
        row.update(compute_metrics(pred, sample.gt, threshold_mode))
        return row

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(score, samples))
    else:
        rows = [score(sample) for sample in samples]
    for row in rows:
        suite.add_row(row)
    report = suite.get_results()
    logger.info(f"Evaluated {len(rows)} samples: MAE={report.mae:.4f} F_max={report.f_max:.4f} "
                f"S_m={report.s_m:.4f}")
    return report
