"""
训练流程
AdamW + 梯度裁剪 + 互斥掩码训练、逐 epoch 评估、最佳 MAE 检查点与消融实验
"""
import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from autograd import backward, zero_grads
from checkpoint import save_checkpoint
from constants import (
    CLIP_MODES, CLIP_NORM, METRIC_FIELDS, SCHEDULE_CONSTANT, SCHEDULES, THRESHOLD_MODES,
    SPLIT_TEST, THRESHOLD_SWEEP, VARIANT_BASE, VARIANT_KAN_ONLY, VARIANT_LABELS, VARIANTS, variant_flags,
)
from data import RgbtSample, augment_sample
from errors import ConfigError, ContractError, DatasetError, NumericalAbort
from losses import LossReport, batch_loss, total_loss
from masking import MaskConfig
from metrics import MetricsReport, evaluate
from model import ModelConfig, SaliencyModel, partition_parameters
from optim import AdamW, scheduled_lr
from utils import derive_rng, ensure_parent_dir

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    """训练配置（桌面规模默认值）"""

    lr: float = 1e-4
    batch_size: int = 4
    weight_decay: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip: float = 0.5
    clip_mode: str = CLIP_NORM
    schedule: str = SCHEDULE_CONSTANT
    max_epochs: int = 30
    seed: int = 0
    flip: bool = True
    rotate: bool = True
    crop: bool = True
    threads: int = 1
    threshold_mode: str = THRESHOLD_SWEEP
    mask: MaskConfig = field(default_factory=MaskConfig)

    def validate(self):
        if not self.lr > 0:
            raise ConfigError(f"train.lr must be > 0, got {self.lr}")
        if not self.grad_clip > 0:
            raise ConfigError(f"train.grad_clip must be > 0, got {self.grad_clip}")
        if self.batch_size < 1:
            raise ConfigError(f"train.batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ConfigError(f"train.max_epochs must be >= 1, got {self.max_epochs}")
        if self.weight_decay < 0:
            raise ConfigError("train.weight_decay must be >= 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("train.beta1 and train.beta2 must lie in [0, 1)")
        if self.clip_mode not in CLIP_MODES:
            raise ConfigError(f"train.clip_mode must be one of {CLIP_MODES}")
        if self.schedule not in SCHEDULES:
            raise ConfigError(f"train.schedule must be one of {SCHEDULES}")
        if self.threshold_mode not in THRESHOLD_MODES:
            raise ConfigError(f"train.threshold_mode must be one of {THRESHOLD_MODES}")
        if self.threads < 1:
            raise ConfigError("train.threads must be >= 1")
        self.mask.validate()

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainState:
    """训练状态：步数、优化器矩缓冲、最佳指标快照"""

    optimizer: AdamW
    step: int = 0
    epoch: int = 0
    total_steps: int = 0
    best_mae: float = math.inf
    best_epoch: int = -1

    @classmethod
    def create(cls, model: SaliencyModel, cfg: TrainConfig, total_steps: int = 0) -> "TrainState":
        _, tunable = partition_parameters(model)
        optimizer = AdamW(tunable, lr=cfg.lr, betas=(cfg.beta1, cfg.beta2), eps=cfg.eps,
                          weight_decay=cfg.weight_decay, grad_clip=cfg.grad_clip, clip_mode=cfg.clip_mode)
        return cls(optimizer=optimizer, total_steps=total_steps)


@dataclass
class FitResult:
    log_rows: List[Dict]
    best_checkpoint: Optional[str]
    final_report: MetricsReport


def train_step(model: SaliencyModel, batch: Sequence[RgbtSample], state: TrainState, cfg: TrainConfig,
               epoch: Optional[int] = None) -> Tuple[LossReport, Dict[str, float]]:
    """
    单步训练：逐样本采样掩码并前向 → 批平均混合损失 → 反向 → 裁剪 → AdamW（仅可调参数）→ 清梯度

    Args:
        model: 模型
        batch: 样本批
        state: 训练状态（原地更新）
        cfg: 训练配置
        epoch: 掩码随机流使用的 epoch（默认 state.epoch）

    Returns:
        tuple: (批平均损失, 优化器统计)
    """
    if not batch:
        raise DatasetError("train_step received an empty batch")
    epoch = state.epoch if epoch is None else epoch
    params = [p for _, p in state.optimizer.params]
    zero_grads(params)
    reports = []
    for sample in batch:
        mask_rng = derive_rng(cfg.seed, "mask", sample.id, epoch)
        pred = model.forward(sample.rgb, sample.thermal, train_mode=cfg.mask.enabled,
                             mask_cfg=cfg.mask, mask_rng=mask_rng)
        reports.append(total_loss(pred, sample.gt))
    loss = batch_loss(reports)
    if not np.isfinite(loss.total):
        ids = [s.id for s in batch]
        logger.error(f"Non-finite loss at step {state.step}: iou={loss.iou_loss} dice={loss.dice_loss}")
        raise NumericalAbort(f"Loss became non-finite at step {state.step}", ids)

    backward(loss.objective)
    lr = scheduled_lr(cfg.lr, state.step, state.total_steps, cfg.schedule)
    stats = state.optimizer.step(lr)
    zero_grads(params)
    state.step += 1
    return loss, stats


def _assemble(samples: Sequence[RgbtSample], cfg: TrainConfig, epoch: int, pool) -> List[RgbtSample]:
    """逐样本增强；随机性只由 (seed, 样本 ID, epoch) 决定"""
    def prepare(sample: RgbtSample) -> RgbtSample:
        if not (cfg.flip or cfg.rotate or cfg.crop):
            return sample
        rng = derive_rng(cfg.seed, "augment", sample.id, epoch)
        return augment_sample(sample, rng, cfg.flip, cfg.rotate, cfg.crop)

    if pool is not None:
        return list(pool.map(prepare, samples))
    return [prepare(s) for s in samples]


def _check_partition(model: SaliencyModel, state: TrainState, frozen_snapshot: Dict[str, np.ndarray]):
    frozen, tunable = partition_parameters(model)
    if set(state.optimizer.state_names()) != {name for name, _ in tunable}:
        raise ContractError("Optimizer state does not match the tunable partition")
    for name, param in frozen:
        if not np.array_equal(param.data, frozen_snapshot[name]):
            raise ContractError(f"Frozen parameter {name} was modified")


def _write_row(handle, row: Dict):
    if handle is not None:
        handle.write(json.dumps(row) + "\n")
        handle.flush()


def fit(model: SaliencyModel, train_samples: Sequence[RgbtSample], eval_samples: Sequence[RgbtSample],
        cfg: TrainConfig, out_dir: Optional[str] = None, eval_split: str = SPLIT_TEST) -> FitResult:
    """
    完整训练循环

    每个 epoch：按 (seed, epoch) 打乱 → 组批（可多线程增强）→ train_step →
    关闭掩码评估 → 按 MAE 保存最佳检查点 → 校验参数分组

    Args:
        model: 模型
        train_samples: 训练集
        eval_samples: 评估集（不能为空；用训练集评估须显式传入并设 eval_split）
        cfg: 训练配置
        out_dir: 输出目录（train_log.jsonl、best.ckpt），None 表示不落盘
        eval_split: 评估集来源，写入评估日志行与最佳检查点

    Returns:
        FitResult: 日志行、最佳检查点路径、最后一次评估报告
    """
    cfg.validate()
    if not train_samples:
        raise DatasetError("Training set is empty")
    eval_samples = list(eval_samples)
    if not eval_samples:
        raise DatasetError("Evaluation set is empty; pass the training set explicitly with eval_split='train'")
    if eval_split != SPLIT_TEST:
        logger.warning(f"Model selection uses the {eval_split} split, best.ckpt is not a held-out choice")
    n = len(train_samples)
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    state = TrainState.create(model, cfg, total_steps=steps_per_epoch * cfg.max_epochs)
    frozen_snapshot = {name: p.data.copy() for name, p in partition_parameters(model)[0]}

    log_handle = None
    best_path = None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        log_path = os.path.join(out_dir, "train_log.jsonl")
        ensure_parent_dir(log_path)
        log_handle = open(log_path, "w", encoding="utf-8", newline="\n")
    rows: List[Dict] = []
    start = time.perf_counter()
    report = None
    pool = ThreadPoolExecutor(max_workers=cfg.threads) if cfg.threads > 1 else None
    logger.info(f"Training {n} samples for {cfg.max_epochs} epochs ({steps_per_epoch} steps/epoch)")
    try:
        for epoch in range(cfg.max_epochs):
            state.epoch = epoch
            order = derive_rng(cfg.seed, "shuffle", epoch).permutation(n)
            epoch_losses = []
            for b in range(steps_per_epoch):
                chosen = [train_samples[i] for i in order[b * cfg.batch_size:(b + 1) * cfg.batch_size]]
                batch = _assemble(chosen, cfg, epoch, pool)
                loss, stats = train_step(model, batch, state, cfg, epoch)
                epoch_losses.append(loss.total)
                row = {"kind": "step", "epoch": epoch, "step": state.step, "iou_loss": loss.iou_loss,
                       "dice_loss": loss.dice_loss, "total": loss.total, "grad_norm": stats["grad_norm"],
                       "lr": stats["lr"], "wall_time": round(time.perf_counter() - start, 3)}
                rows.append(row)
                _write_row(log_handle, row)
                logger.debug(f"epoch {epoch} step {state.step}: loss={loss.total:.5f}")

            report = evaluate(model, eval_samples, cfg.threads, cfg.threshold_mode)
            row = {"kind": "eval", "epoch": epoch, "step": state.step, "split": eval_split,
                   "train_loss": float(np.mean(epoch_losses))}
            row.update(report.scores())
            row["wall_time"] = round(time.perf_counter() - start, 3)
            rows.append(row)
            _write_row(log_handle, row)
            logger.info(f"Epoch {epoch}: train_loss={row['train_loss']:.4f} eval MAE={report.mae:.4f} "
                        f"F_max={report.f_max:.4f}")

            if report.mae < state.best_mae:
                state.best_mae, state.best_epoch = report.mae, epoch
                if out_dir:
                    best_path = os.path.join(out_dir, "best.ckpt")
                    save_checkpoint(model, best_path,
                                    extra={"epoch": epoch, "mae": report.mae, "split": eval_split})
            _check_partition(model, state, frozen_snapshot)
    finally:
        if pool is not None:
            pool.shutdown()
        if log_handle is not None:
            log_handle.close()
    logger.info(f"Training finished: best MAE {state.best_mae:.4f} at epoch {state.best_epoch}")
    return FitResult(rows, best_path, report)


def variant_configs(variant: str, model_cfg: ModelConfig, train_cfg: TrainConfig,
                    seed: Optional[int] = None) -> Tuple[ModelConfig, TrainConfig]:
    """
    消融变体对应的配置：移除适配器即切断热红外路径，掩码按变体开关

    Args:
        variant: base / mask-only / kan-only / full
        model_cfg: 基础模型配置
        train_cfg: 基础训练配置
        seed: 覆盖模型与训练种子

    Returns:
        tuple: (ModelConfig, TrainConfig)
    """
    if variant not in VARIANTS:
        raise ConfigError(f"Unknown variant '{variant}', expected one of {list(VARIANTS)}")
    use_mask, use_adapters = variant_flags(variant)
    seed = train_cfg.seed if seed is None else seed
    model_cfg = replace(model_cfg, use_adapters=use_adapters, seed=seed)
    train_cfg = replace(train_cfg, seed=seed, mask=replace(train_cfg.mask, enabled=use_mask))
    return model_cfg, train_cfg


@dataclass
class AblationReport:
    """消融结果：每 (场景, 变体, 种子) 一行六项测试指标"""

    rows: List[Dict] = field(default_factory=list)

    def medians(self, regime: str, variant: str) -> Dict[str, float]:
        picked = [r for r in self.rows if r["regime"] == regime and r["variant"] == variant]
        return {name: float(np.median([r[name] for r in picked])) for name in METRIC_FIELDS}

    def regimes(self) -> List[str]:
        return list(dict.fromkeys(r["regime"] for r in self.rows))

    def variants(self) -> List[str]:
        return list(dict.fromkeys(r["variant"] for r in self.rows))

    def wins(self, regime: str, better: str = VARIANT_KAN_ONLY, worse: str = VARIANT_BASE) -> int:
        """better 在多少个种子上 MAE 严格低于 worse"""
        by_seed = {}
        for r in self.rows:
            if r["regime"] == regime and r["variant"] in (better, worse):
                by_seed.setdefault(r["seed"], {})[r["variant"]] = r["mae"]
        return sum(1 for v in by_seed.values() if better in v and worse in v and v[better] < v[worse])

    def to_dict(self) -> dict:
        summary = {regime: {variant: self.medians(regime, variant) for variant in self.variants()}
                   for regime in self.regimes()}
        return {"rows": self.rows, "median": summary}

    def table(self) -> str:
        lines = []
        for regime in self.regimes():
            lines.append(f"[{regime}]")
            lines.append(f"{'variant':<16}" + "".join(f"{name:>9}" for name in METRIC_FIELDS))
            for variant in self.variants():
                med = self.medians(regime, variant)
                lines.append(f"{VARIANT_LABELS[variant]:<16}" + "".join(f"{med[name]:9.4f}" for name in METRIC_FIELDS))
        return "\n".join(lines)


def ablation_suite(datasets: Dict[str, Tuple[Sequence[RgbtSample], Sequence[RgbtSample]]],
                   model_cfg: ModelConfig, train_cfg: TrainConfig, seeds: Sequence[int] = (0,),
                   variants: Sequence[str] = tuple(VARIANTS), out_dir: Optional[str] = None) -> AblationReport:
    """
    训练四个消融变体并在测试集上评估

    Args:
        datasets: 场景名 -> (训练集, 测试集)
        model_cfg: 模型配置
        train_cfg: 训练配置
        seeds: 种子列表（各变体共享）
        variants: 变体列表
        out_dir: 每次运行的输出根目录

    Returns:
        AblationReport: 消融报告
    """
    report = AblationReport()
    for regime, (train_set, test_set) in datasets.items():
        for seed in seeds:
            for variant in variants:
                m_cfg, t_cfg = variant_configs(variant, model_cfg, train_cfg, seed)
                model = SaliencyModel(m_cfg)
                run_dir = os.path.join(out_dir, regime, variant, f"seed{seed}") if out_dir else None
                fit(model, train_set, test_set, t_cfg, run_dir)
                metrics = evaluate(model, test_set, t_cfg.threads, t_cfg.threshold_mode)
                _, tunable = partition_parameters(model)
                row = {"regime": regime, "variant": variant, "seed": seed,
                       "adapter_params": sum(p.size for name, p in tunable if name.startswith("adapter"))}
                row.update(metrics.scores())
                report.rows.append(row)
                logger.info(f"Ablation {regime}/{variant}/seed{seed}: MAE={metrics.mae:.4f}")
    return report
