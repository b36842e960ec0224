"""
KAN-SAM 桌面规模实验程序主入口
子命令：gen-data / train / ablation / eval / predict / gradcheck / count-params / mask-preview
"""
import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from typing import Dict, List, Optional

import numpy as np

from autograd import set_debug
from checkpoint import load_checkpoint, read_checkpoint_extra, save_checkpoint
from config import CliConfig, EnvSettings, apply_overrides, load_config, load_env, parse_override
from constants import (
    ADAPTER_KAN, ADAPTER_MLP, EXIT_IO, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, GRADCHECK_SCALES,
    MASK_MODES, MASK_RGB, MASK_THERMAL, REGIMES, SPLIT_TEST, SPLIT_TRAIN, THRESHOLD_MODES, VARIANT_FULL, VARIANTS,
)
from data import (
    Manifest, area_summary, load_samples, make_benchmark, read_manifest, regime_scene,
)
from errors import (
    ConfigError, ContractError, DatasetError, DimensionError, FormatError, NumericalAbort,
)
from gradcheck import run_gradcheck
from kan import (
    break_even_threshold, kan_adapter_flops, kan_adapter_param_count, mlp_adapter_flops,
    mlp_adapter_param_count,
)
from masking import preview_image, sample_mask
from metrics import evaluate
from model import SaliencyModel, partition_parameters
from netpbm import read_image, to_float, write_image
from training import ablation_suite, fit, variant_configs
from utils import canonical_json, ensure_parent_dir, resolve_threads

logger = logging.getLogger(__name__)

ALL_REGIMES = "all"


def setup_logging(log_level: str, log_dir: Optional[str]):
    """
    配置日志系统；控制台输出走 stderr，stdout 留给机器可读结果

    Args:
        log_level: 日志级别
        log_dir: 日志目录（None 表示不写文件）
    """
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_dir:
        os.makedirs(log_dir, exist_ok=True)
        handlers.append(logging.FileHandler(os.path.join(log_dir, "kan_sam.log")))
    logging.basicConfig(
        level=getattr(logging, log_level.upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )


def _config_help(text: str, key: Optional[str]) -> str:
    return f"{text} (config: {key})" if key else f"{text} (no config key)"


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", default=None,
                        help="YAML config file, default $KAN_SAM_CONFIG or config/kan_sam.yaml (no config key)")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help=_config_help("override any config value", "section.key"))


def _add_threads(parser: argparse.ArgumentParser):
    parser.add_argument("--threads", type=int, default=None,
                        help=_config_help("worker threads, env KAN_SAM_THREADS", "train.threads"))


def build_parser() -> argparse.ArgumentParser:
    """构建命令行解析器"""
    parser = argparse.ArgumentParser(
        prog="kan-sam",
        description="Desk-scale RGB-T salient object detection with KAN adapters on a frozen encoder. "
                    "Exit codes: 0 ok, 2 usage/config error, 3 numerical abort, 4 I/O error.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic RGB-T benchmark")
    _add_common(p)
    p.add_argument("--out", required=True, help=_config_help("output directory", None))
    p.add_argument("--regime", choices=list(REGIMES) + [ALL_REGIMES], default=ALL_REGIMES,
                   help=_config_help("scene regime, 'all' writes one sub-directory per regime", None))
    p.add_argument("--n-train", type=int, default=16, help=_config_help("training samples", None))
    p.add_argument("--n-test", type=int, default=8, help=_config_help("test samples", None))
    p.add_argument("--seed", type=int, default=None, help=_config_help("scene seed", "scene.seed"))
    _add_threads(p)
    p.set_defaults(handler=cmd_gen_data)

    p = sub.add_parser("train", help="train one ablation variant")
    _add_common(p)
    p.add_argument("--data", required=True,
                   help=_config_help("regime directory holding train.tsv (and test.tsv)", None))
    p.add_argument("--out", required=True, help=_config_help("run directory", None))
    p.add_argument("--variant", choices=list(VARIANTS), default=VARIANT_FULL,
                   help=_config_help("ablation variant", "model.use_adapters / mask.enabled"))
    p.add_argument("--seed", type=int, default=None, help=_config_help("training and model seed", "train.seed"))
    p.add_argument("--epochs", type=int, default=None, help=_config_help("epochs", "train.max_epochs"))
    p.add_argument("--lr", type=float, default=None, help=_config_help("learning rate", "train.lr"))
    p.add_argument("--batch-size", type=int, default=None, help=_config_help("batch size", "train.batch_size"))
    _add_threads(p)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("ablation", help="train every variant over several seeds and compare")
    _add_common(p)
    p.add_argument("--data-root", required=True,
                   help=_config_help("benchmark root with one directory per regime", None))
    p.add_argument("--regime", choices=list(REGIMES) + [ALL_REGIMES], default=ALL_REGIMES,
                   help=_config_help("regime to run", None))
    p.add_argument("--seeds", default="0,1,2,3,4", help=_config_help("comma separated seeds", None))
    p.add_argument("--variants", default=",".join(VARIANTS), help=_config_help("comma separated variants", None))
    p.add_argument("--epochs", type=int, default=None, help=_config_help("epochs", "train.max_epochs"))
    p.add_argument("--out", required=True, help=_config_help("output directory", None))
    _add_threads(p)
    p.set_defaults(handler=cmd_ablation)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a manifest")
    _add_common(p)
    p.add_argument("--checkpoint", required=True, help=_config_help("checkpoint file", None))
    p.add_argument("--data", required=True, help=_config_help("manifest file (.tsv)", None))
    p.add_argument("--split", choices=[SPLIT_TRAIN, SPLIT_TEST], default=None,
                   help=_config_help("only rows of this split", None))
    p.add_argument("--threshold-mode", choices=list(THRESHOLD_MODES), default=None,
                   help=_config_help("F_avg / E_m thresholds", "train.threshold_mode"))
    p.add_argument("--out", default=None, help=_config_help("also write the JSON report here", None))
    _add_threads(p)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("predict", help="write the saliency map of one RGB-T pair as PGM")
    _add_common(p)
    p.add_argument("--checkpoint", required=True, help=_config_help("checkpoint file", None))
    p.add_argument("--rgb", required=True, help=_config_help("RGB image (PPM)", None))
    p.add_argument("--thermal", required=True, help=_config_help("thermal image (PGM)", None))
    p.add_argument("--out", required=True, help=_config_help("output PGM", None))
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    _add_common(p)
    p.add_argument("--scale", choices=list(GRADCHECK_SCALES), default="primitive",
                   help=_config_help("check primitives, layers or the whole model", None))
    p.add_argument("--seed", type=int, default=0, help=_config_help("probe seed", None))
    p.add_argument("--tolerance", type=float, default=None,
                   help=_config_help("override the scale's relative-error tolerance", None))
    p.set_defaults(handler=cmd_gradcheck)

    p = sub.add_parser("count-params", help="parameter partition and KAN vs MLP adapter comparison")
    _add_common(p)
    p.set_defaults(handler=cmd_count_params)

    p = sub.add_parser("mask-preview", help="write a three-colour preview of one mask pattern")
    _add_common(p)
    p.add_argument("--seed", type=int, default=0, help=_config_help("mask seed", None))
    p.add_argument("--size", type=int, default=64, help=_config_help("image side", None))
    p.add_argument("--p-mask", type=float, default=None, help=_config_help("masking probability", "mask.p_mask"))
    p.add_argument("--mode", choices=list(MASK_MODES), default=None, help=_config_help("mask mode", "mask.mode"))
    p.add_argument("--out", required=True, help=_config_help("output PPM", None))
    p.set_defaults(handler=cmd_mask_preview)
    return parser


def resolve_config(args: argparse.Namespace, flag_overrides: Dict[str, object]) -> CliConfig:
    """
    合并配置：文件 → --set → 子命令参数，然后统一校验

    Args:
        args: 命令行参数
        flag_overrides: 子命令参数对应的 "section.key" -> 值

    Returns:
        CliConfig: 校验后的配置
    """
    cfg = load_config(args.config)
    generic = {}
    for text in args.overrides:
        generic.update(parse_override(text))
    cfg = apply_overrides(cfg, generic)
    cfg = apply_overrides(cfg, flag_overrides)
    cfg.validate()
    return cfg


def _threads(args: argparse.Namespace, cfg: CliConfig) -> int:
    if getattr(args, "threads", None) is not None:
        return resolve_threads(args.threads)
    if os.getenv("KAN_SAM_THREADS"):
        return resolve_threads(None)
    return max(1, cfg.train.threads)


def _emit(report: dict):
    """机器可读结果写 stdout"""
    sys.stdout.write(json.dumps(report, indent=2) + "\n")
    sys.stdout.flush()


def _write_json(path: str, payload: dict):
    ensure_parent_dir(path)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(canonical_json(payload) + "\n")


def _check_image_size(model: SaliencyModel, image_size: int, source: str):
    if model.config.input_size != image_size:
        raise ConfigError(f"Model input_size {model.config.input_size} does not match "
                          f"{source} image size {image_size}")


# 由变体与种子决定，不属于模型结构
_VARIANT_MODEL_FIELDS = ("seed", "use_adapters")


def _model_config_given(args: argparse.Namespace) -> bool:
    return args.config is not None or any(text.strip().startswith("model.") for text in args.overrides)


def _check_model_config(model: SaliencyModel, cfg: CliConfig, args: argparse.Namespace):
    """
    显式给出配置（--config 或 --set model.*）时，逐字段核对检查点中的模型结构

    Raises:
        ConfigError: 任一结构字段不一致
    """
    if not _model_config_given(args):
        return
    stored = model.config.to_dict()
    expected = cfg.model.to_dict()
    diffs = [f"{key}: checkpoint {stored[key]!r} != config {expected[key]!r}"
             for key in expected if key not in _VARIANT_MODEL_FIELDS and stored.get(key) != expected[key]]
    if diffs:
        raise ConfigError(f"Checkpoint {args.checkpoint} does not match the model config: {'; '.join(diffs)}")


def _load_split(data_dir: str, split: str, threads: int, required: bool = True):
    path = os.path.join(data_dir, f"{split}.tsv")
    if not os.path.exists(path):
        if required:
            raise FileNotFoundError(f"Manifest not found: {path}")
        return None, []
    manifest = read_manifest(path)
    return manifest, load_samples(manifest, split, threads)


def cmd_gen_data(args: argparse.Namespace) -> int:
    """生成合成基准并打印摘要"""
    cfg = resolve_config(args, {"scene.seed": args.seed, "train.threads": args.threads})
    threads = _threads(args, cfg)
    regimes = REGIMES if args.regime == ALL_REGIMES else (args.regime,)
    scenes = {regime: regime_scene(regime, cfg.scene) for regime in regimes}
    written = make_benchmark(scenes, args.n_train, args.n_test, cfg.scene.seed, args.out, threads)

    summary = {}
    for regime, manifests in written.items():
        summary[regime] = {}
        for split, path in manifests.items():
            manifest = read_manifest(path)
            samples = load_samples(manifest, split, threads) if manifest.rows else []
            summary[regime][split] = {"manifest": path, "gt_area": area_summary(samples)}
    _emit({"out": args.out, "seed": cfg.scene.seed, "regimes": summary})
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    """训练一个变体，写出检查点、日志与最终评估"""
    cfg = resolve_config(args, {
        "train.seed": args.seed, "train.max_epochs": args.epochs, "train.lr": args.lr,
        "train.batch_size": args.batch_size, "train.threads": args.threads,
    })
    threads = _threads(args, cfg)
    train_cfg = replace(cfg.train, threads=threads)
    manifest, train_set = _load_split(args.data, SPLIT_TRAIN, threads)
    _, test_set = _load_split(args.data, SPLIT_TEST, threads, required=False)
    if manifest.scene.image_size != cfg.model.input_size:
        raise ConfigError(f"model.input_size {cfg.model.input_size} does not match dataset image size "
                          f"{manifest.scene.image_size}")

    model_cfg, train_cfg = variant_configs(args.variant, cfg.model, train_cfg)
    model = SaliencyModel(model_cfg)
    logger.info(f"Training variant {args.variant} (seed {train_cfg.seed}) on {len(train_set)} samples")
    if test_set:
        result = fit(model, train_set, test_set, train_cfg, args.out)
    else:
        result = fit(model, train_set, train_set, train_cfg, args.out, eval_split=SPLIT_TRAIN)

    checkpoint_path = os.path.join(args.out, "model.ckpt")
    save_checkpoint(model, checkpoint_path, extra={"variant": args.variant, "seed": train_cfg.seed,
                                                   "epochs": train_cfg.max_epochs})
    eval_set = test_set or train_set
    report = evaluate(model, eval_set, threads, train_cfg.threshold_mode)
    payload = {"variant": args.variant, "seed": train_cfg.seed,
               "split": SPLIT_TEST if test_set else SPLIT_TRAIN,
               "best_checkpoint": result.best_checkpoint, "checkpoint": checkpoint_path,
               "report": report.to_dict()}
    _write_json(os.path.join(args.out, "eval.json"), payload)
    sys.stderr.write(report.table() + "\n")
    summary = {k: v for k, v in payload.items() if k != "report"}
    summary["metrics"] = report.scores()
    _emit(summary)
    return EXIT_OK


def cmd_ablation(args: argparse.Namespace) -> int:
    """消融实验：各场景 × 变体 × 种子"""
    cfg = resolve_config(args, {"train.max_epochs": args.epochs, "train.threads": args.threads})
    threads = _threads(args, cfg)
    try:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"--seeds must be a comma separated list of integers, got {args.seeds!r}")
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    unknown = [v for v in variants if v not in VARIANTS]
    if unknown or not seeds or not variants:
        raise ConfigError(f"Bad --variants/--seeds: unknown variants {unknown}, seeds {seeds}")

    regimes = REGIMES if args.regime == ALL_REGIMES else (args.regime,)
    datasets = {}
    for regime in regimes:
        data_dir = os.path.join(args.data_root, regime)
        if args.regime == ALL_REGIMES and not os.path.isdir(data_dir):
            logger.warning(f"Regime directory missing, skipped: {data_dir}")
            continue
        manifest, train_set = _load_split(data_dir, SPLIT_TRAIN, threads)
        _, test_set = _load_split(data_dir, SPLIT_TEST, threads)
        if manifest.scene.image_size != cfg.model.input_size:
            raise ConfigError(f"model.input_size {cfg.model.input_size} does not match {regime} "
                              f"image size {manifest.scene.image_size}")
        datasets[regime] = (train_set, test_set)
    if not datasets:
        raise DatasetError(f"No regime data under {args.data_root}")

    report = ablation_suite(datasets, cfg.model, replace(cfg.train, threads=threads), seeds, variants, args.out)
    payload = report.to_dict()
    payload["kan_only_beats_base"] = {regime: report.wins(regime) for regime in report.regimes()}
    _write_json(os.path.join(args.out, "ablation.json"), payload)
    sys.stderr.write(report.table() + "\n")
    _emit({"median": payload["median"], "kan_only_beats_base": payload["kan_only_beats_base"],
           "seeds": seeds})
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    """评估检查点：JSON 写 stdout，表格写 stderr"""
    cfg = resolve_config(args, {"train.threshold_mode": args.threshold_mode, "train.threads": args.threads})
    threads = _threads(args, cfg)
    model = load_checkpoint(args.checkpoint)
    _check_model_config(model, cfg, args)
    manifest: Manifest = read_manifest(args.data)
    _check_image_size(model, manifest.scene.image_size, args.data)
    samples = load_samples(manifest, args.split, threads)
    report = evaluate(model, samples, threads, cfg.train.threshold_mode)
    payload = {"checkpoint": args.checkpoint, "manifest": args.data, "split": args.split,
               "checkpoint_extra": read_checkpoint_extra(args.checkpoint), "report": report.to_dict()}
    if args.out:
        _write_json(args.out, payload)
    sys.stderr.write(report.table() + "\n")
    _emit(payload)
    return EXIT_OK


def cmd_predict(args: argparse.Namespace) -> int:
    """单对图像推理，输出 P5 PGM"""
    cfg = resolve_config(args, {})
    model = load_checkpoint(args.checkpoint)
    _check_model_config(model, cfg, args)
    rgb = to_float(read_image(args.rgb))
    thermal = to_float(read_image(args.thermal))
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise DimensionError(f"{args.rgb} is not a colour image")
    if thermal.ndim == 3:
        thermal = thermal[:, :, :1]
    else:
        thermal = thermal[:, :, None]
    if rgb.shape[:2] != thermal.shape[:2]:
        raise DimensionError(f"RGB {rgb.shape[:2]} and thermal {thermal.shape[:2]} sizes differ")
    if rgb.shape[0] != rgb.shape[1]:
        raise DimensionError(f"Input must be square, got {rgb.shape[:2]}")
    _check_image_size(model, rgb.shape[0], args.rgb)
    saliency = model.predict(rgb, thermal)
    write_image(args.out, saliency)
    logger.info(f"Saliency map written: {args.out}")
    _emit({"out": args.out, "mean": float(np.mean(saliency))})
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace) -> int:
    """梯度校验；超过容差返回数值错误码"""
    resolve_config(args, {})
    result = run_gradcheck(args.scale, args.seed)
    tolerance = args.tolerance if args.tolerance is not None else result["tolerance"]
    for name, err in result["errors"].items():
        flag = "ok" if err < tolerance else "FAIL"
        sys.stderr.write(f"{name:<48}{err:12.3e}  {flag}\n")
    passed = result["worst"] < tolerance
    _emit({"scale": args.scale, "tolerance": tolerance, "worst": result["worst"], "passed": passed,
           "errors": result["errors"]})
    if not passed:
        logger.error(f"gradcheck {args.scale}: worst error {result['worst']:.3e} above tolerance {tolerance:.1e}")
        return EXIT_NUMERICAL
    return EXIT_OK


def count_params_report(cfg: CliConfig) -> dict:
    """
    参数量报告：整模型分组、逐适配器参数量、KAN 与 MLP 适配器对比

    Args:
        cfg: 配置

    Returns:
        dict: 报告
    """
    model_cfg = cfg.model
    model = SaliencyModel(replace(model_cfg, use_adapters=True))
    frozen, tunable = partition_parameters(model)
    frozen_count = sum(p.size for _, p in frozen)
    tunable_count = sum(p.size for _, p in tunable)

    thermal_channels = model_cfg.stage_channels[0]
    adapters = []
    kan_total = mlp_total = kan_flops = mlp_flops = 0
    for i, c in enumerate(model_cfg.stage_channels):
        kan_count = kan_adapter_param_count(c, thermal_channels, model_cfg.adapter_reduction,
                                            model_cfg.spline_intervals, model_cfg.spline_degree)
        mlp_count = mlp_adapter_param_count(c, thermal_channels, model_cfg.adapter_reduction,
                                            model_cfg.mlp_hidden_ratio)
        k_flops = kan_adapter_flops(c, model_cfg.adapter_reduction, model_cfg.spline_intervals,
                                    model_cfg.spline_degree)
        m_flops = mlp_adapter_flops(c, model_cfg.adapter_reduction, model_cfg.mlp_hidden_ratio)
        threshold = break_even_threshold(c, model_cfg.adapter_reduction, model_cfg.mlp_hidden_ratio)
        adapters.append({
            "stage": i, "channels": c, "built": model.adapters[i].num_parameters(),
            ADAPTER_KAN: kan_count, ADAPTER_MLP: mlp_count,
            "kan_flops_per_pixel": k_flops, "mlp_flops_per_pixel": m_flops,
            "break_even": threshold,
            "kan_smaller": model_cfg.spline_intervals + model_cfg.spline_degree + 2 < threshold,
        })
        kan_total += kan_count
        mlp_total += mlp_count
        kan_flops += k_flops
        mlp_flops += m_flops
    return {
        "adapter_kind": model_cfg.adapter_kind,
        "total": frozen_count + tunable_count,
        "frozen": frozen_count,
        "tunable": tunable_count,
        "adapters": adapters,
        "kan_adapters": kan_total,
        "mlp_adapters": mlp_total,
        "kan_to_mlp_ratio": kan_total / mlp_total if mlp_total else 0.0,
        "kan_flops_per_pixel": kan_flops,
        "mlp_flops_per_pixel": mlp_flops,
    }


def _count_params_table(report: dict) -> str:
    lines = [
        f"{'partition':<12}{'params':>12}",
        f"{'frozen':<12}{report['frozen']:>12}",
        f"{'tunable':<12}{report['tunable']:>12}",
        f"{'total':<12}{report['total']:>12}",
        "",
        f"{'stage':<7}{'C':>6}{'built':>10}{'KAN':>10}{'MLP':>10}{'break-even':>12}{'KAN flops':>11}{'MLP flops':>11}",
    ]
    for a in report["adapters"]:
        lines.append(f"{a['stage']:<7}{a['channels']:>6}{a['built']:>10}{a[ADAPTER_KAN]:>10}{a[ADAPTER_MLP]:>10}"
                     f"{a['break_even']:>12.2f}{a['kan_flops_per_pixel']:>11}{a['mlp_flops_per_pixel']:>11}")
    lines.append(f"KAN adapters {report['kan_adapters']} vs MLP adapters {report['mlp_adapters']} "
                 f"(ratio {report['kan_to_mlp_ratio']:.3f})")
    lines.append("Note: absolute parameter counts of the full-scale SAM2 model are out of scope here; "
                 "adapter hyperparameters at that scale are unpublished, so only the methodology is reproduced.")
    return "\n".join(lines)


def cmd_count_params(args: argparse.Namespace) -> int:
    cfg = resolve_config(args, {})
    report = count_params_report(cfg)
    sys.stderr.write(_count_params_table(report) + "\n")
    _emit(report)
    return EXIT_OK


def cmd_mask_preview(args: argparse.Namespace) -> int:
    """写出掩码三色预览图 (PPM)"""
    cfg = resolve_config(args, {"mask.p_mask": args.p_mask, "mask.mode": args.mode})
    if args.size < 1:
        raise ConfigError(f"--size must be positive, got {args.size}")
    pattern = sample_mask(args.size, args.size, cfg.mask, args.seed)
    write_image(args.out, preview_image(pattern))
    _emit({"out": args.out, "masked_fraction": pattern.masked_fraction(),
           "rgb_fraction": pattern.fraction(MASK_RGB), "thermal_fraction": pattern.fraction(MASK_THERMAL)})
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """
    命令行入口

    Args:
        argv: 参数列表（None 表示 sys.argv）

    Returns:
        int: 退出码
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK

    try:
        env: EnvSettings = load_env()
    except ConfigError as e:
        sys.stderr.write(f"Configuration error: {e}\n")
        return EXIT_USAGE
    setup_logging(env.log_level, env.log_dir)
    set_debug(env.debug)

    try:
        return args.handler(args)
    except (ConfigError, DimensionError, ContractError) as e:
        logger.error(f"{args.command}: {e}")
        return EXIT_USAGE
    except NumericalAbort as e:
        logger.error(f"{args.command}: numerical abort: {e}")
        return EXIT_NUMERICAL
    except (FormatError, DatasetError, OSError) as e:
        logger.error(f"{args.command}: I/O error: {e}", exc_info=True)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
