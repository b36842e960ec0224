"""
混合训练损失：软 IoU 损失 + Dice 损失
"""
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from autograd import Tensor, add, as_tensor, div, mul, sub, tensor_sum
from constants import LOSS_SMOOTH
from errors import DimensionError

logger = logging.getLogger(__name__)


@dataclass
class LossReport:
    """损失分量；objective 为可反向传播的标量张量"""

    iou_loss: float
    dice_loss: float
    total: float
    objective: Tensor

    def to_dict(self) -> dict:
        return {"iou_loss": self.iou_loss, "dice_loss": self.dice_loss, "total": self.total}


def _check(pred: Tensor, gt) -> Tensor:
    gt = as_tensor(np.asarray(gt.data if isinstance(gt, Tensor) else gt, dtype=pred.data.dtype))
    if pred.shape != gt.shape:
        raise DimensionError(f"Prediction {pred.shape} and ground truth {gt.shape} differ in shape")
    return gt


def iou_loss(pred: Tensor, gt, smooth: float = LOSS_SMOOTH) -> Tensor:
    """
    软 IoU 损失 1 - (Σpg + ε) / (Σp + Σg - Σpg + ε)

    Args:
        pred: [H,W] 预测，取值 [0,1]
        gt: [H,W] 二值真值
        smooth: 平滑项 ε

    Returns:
        Tensor: 标量损失
    """
    pred = as_tensor(pred)
    gt = _check(pred, gt)
    inter = tensor_sum(mul(pred, gt))
    union = sub(add(tensor_sum(pred), tensor_sum(gt)), inter)
    return sub(1.0, div(add(inter, smooth), add(union, smooth)))


def dice_loss(pred: Tensor, gt, smooth: float = LOSS_SMOOTH) -> Tensor:
    """Dice 损失 1 - (2Σpg + ε) / (Σp + Σg + ε)"""
    pred = as_tensor(pred)
    gt = _check(pred, gt)
    inter = tensor_sum(mul(pred, gt))
    denom = add(add(tensor_sum(pred), tensor_sum(gt)), smooth)
    return sub(1.0, div(add(mul(inter, 2.0), smooth), denom))


def total_loss(pred: Tensor, gt, smooth: float = LOSS_SMOOTH) -> LossReport:
    """
    混合损失 L = L_IoU + L_Dice

    Args:
        pred: [H,W] 预测
        gt: [H,W] 真值
        smooth: 平滑项

    Returns:
        LossReport: 各分量与总损失
    """
    iou = iou_loss(pred, gt, smooth)
    dice = dice_loss(pred, gt, smooth)
    objective = add(iou, dice)
    iou_value, dice_value = iou.item(), dice.item()
    return LossReport(iou_value, dice_value, objective.item(), objective)


def batch_loss(reports: Sequence[LossReport]) -> LossReport:
    """批次内逐样本损失取平均"""
    if not reports:
        raise DimensionError("Cannot average an empty batch of losses")
    n = len(reports)
    objective = reports[0].objective
    for report in reports[1:]:
        objective = add(objective, report.objective)
    objective = mul(objective, 1.0 / n)
    iou = float(np.mean([r.iou_loss for r in reports]))
    dice = float(np.mean([r.dice_loss for r in reports]))
    return LossReport(iou, dice, iou + dice, objective)
