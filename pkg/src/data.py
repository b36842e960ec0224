"""
合成 RGB-热红外显著性数据集
场景生成、样本读写、清单文件与几何数据增强
"""
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from constants import (
    MANIFEST_COLUMNS, MANIFEST_MAGIC, MANIFEST_VERSION, REGIME_RGB_EASY,
    REGIME_THERMAL_INFORMATIVE, REGIMES, SHAPE_ELLIPSE, SHAPE_RECTANGLE, SHAPES, SPLIT_TEST,
    SPLIT_TRAIN,
)
from errors import ConfigError, DatasetError, FormatError
from netpbm import read_image, to_float, write_image
from utils import canonical_json, derive_rng, ensure_parent_dir

logger = logging.getLogger(__name__)

MAX_REJECTIONS = 200


@dataclass
class SceneConfig:
    """场景生成配置"""

    image_size: int = 64
    min_objects: int = 1
    max_objects: int = 3
    shapes: List[str] = field(default_factory=lambda: list(SHAPES))
    object_scale: List[float] = field(default_factory=lambda: [0.12, 0.3])
    rgb_contrast: float = 0.8
    thermal_contrast: float = 0.8
    clutter_contrast: float = 0.3
    noise_sigma: float = 0.02
    illumination_gradient: bool = True
    min_area: float = 0.02
    max_area: float = 0.40
    seed: int = 0

    def validate(self):
        if self.image_size < 8:
            raise ConfigError(f"scene.image_size must be >= 8, got {self.image_size}")
        if not 1 <= self.min_objects <= self.max_objects:
            raise ConfigError(f"scene object count range [{self.min_objects}, {self.max_objects}] is invalid")
        if not self.shapes or any(s not in SHAPES for s in self.shapes):
            raise ConfigError(f"scene.shapes must be a non-empty subset of {SHAPES}, got {self.shapes}")
        lo, hi = self.object_scale
        if not 0 < lo <= hi:
            raise ConfigError(f"scene.object_scale must satisfy 0 < lo <= hi, got {self.object_scale}")
        if hi > 0.5:
            raise ConfigError(f"scene.object_scale {hi} makes the object larger than the image")
        for name in ("rgb_contrast", "thermal_contrast", "clutter_contrast", "noise_sigma"):
            if getattr(self, name) < 0:
                raise ConfigError(f"scene.{name} must be >= 0")
        if not 0 < self.min_area < self.max_area <= 1:
            raise ConfigError(f"scene area bounds must satisfy 0 < min < max <= 1, "
                              f"got [{self.min_area}, {self.max_area}]")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RgbtSample:
    """对齐的 RGB / 热红外 / 真值三元组，数值均为 float64"""

    id: str
    rgb: np.ndarray      # [H,W,3] in [0,1]
    thermal: np.ndarray  # [H,W,1] in [0,1]
    gt: np.ndarray       # [H,W] in {0,1}

    def __post_init__(self):
        h, w = self.gt.shape
        if self.rgb.shape != (h, w, 3) or self.thermal.shape != (h, w, 1):
            raise DatasetError(
                f"Misaligned sample arrays rgb={self.rgb.shape} thermal={self.thermal.shape} gt={self.gt.shape}",
                self.id)


@dataclass
class ManifestRow:
    id: str
    split: str
    rgb: str
    thermal: str
    gt: str


@dataclass
class Manifest:
    """清单：场景配置 + 样本行，路径相对于清单所在目录"""

    scene: SceneConfig
    rows: List[ManifestRow]
    root: str = "."

    def ids(self) -> List[str]:
        return [row.id for row in self.rows]


def regime_scene(regime: str, base: Optional[SceneConfig] = None) -> SceneConfig:
    """
    标准场景：rgb-easy 两个模态对比度都高，thermal-informative 只有热红外对比度高

    Args:
        regime: 场景名
        base: 其余字段取自该配置

    Returns:
        SceneConfig: 场景配置
    """
    base = base or SceneConfig()
    if regime == REGIME_RGB_EASY:
        return replace(base, rgb_contrast=0.8, thermal_contrast=0.8)
    if regime == REGIME_THERMAL_INFORMATIVE:
        return replace(base, rgb_contrast=0.05, thermal_contrast=0.8)
    raise ConfigError(f"Unknown regime '{regime}', expected one of {REGIMES}")


def rasterize(shape: str, size: int, cy: float, cx: float, ry: float, rx: float, angle: float) -> np.ndarray:
    """
    在像素中心采样形状，返回 bool 掩码

    Args:
        shape: ellipse / rectangle / triangle
        size: 图像边长
        cy, cx: 中心
        ry, rx: 半轴长
        angle: 旋转角（弧度）

    Returns:
        np.ndarray: [size,size] bool
    """
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) + 0.5
    dy, dx = yy - cy, xx - cx
    cos, sin = np.cos(angle), np.sin(angle)
    u = (dx * cos + dy * sin) / rx
    v = (-dx * sin + dy * cos) / ry
    if shape == SHAPE_ELLIPSE:
        return u * u + v * v <= 1.0
    if shape == SHAPE_RECTANGLE:
        return (np.abs(u) <= 1.0) & (np.abs(v) <= 1.0)
    # 内接于椭圆的三角形
    corners = [(np.cos(a), np.sin(a)) for a in (-np.pi / 2, np.pi / 6, 5 * np.pi / 6)]
    inside = np.ones((size, size), dtype=bool)
    for i in range(3):
        (x0, y0), (x1, y1) = corners[i], corners[(i + 1) % 3]
        inside &= (x1 - x0) * (v - y0) - (y1 - y0) * (u - x0) >= 0
    return inside


def _draw_shape(rng: np.random.Generator, cfg: SceneConfig, scale: Sequence[float]):
    s = cfg.image_size
    shape = cfg.shapes[int(rng.integers(len(cfg.shapes)))]
    ry, rx = rng.uniform(scale[0], scale[1], size=2) * s
    cy = rng.uniform(ry, s - ry)
    cx = rng.uniform(rx, s - rx)
    angle = rng.uniform(0.0, np.pi)
    return rasterize(shape, s, cy, cx, ry, rx, angle)


def generate_sample(cfg: SceneConfig, index: int, sample_id: Optional[str] = None) -> RgbtSample:
    """
    生成一个样本，完全由 (cfg.seed, index) 决定

    Args:
        cfg: 场景配置
        index: 样本序号
        sample_id: 样本 ID，默认 "sample-<index>"

    Returns:
        RgbtSample: 样本
    """
    cfg.validate()
    rng = derive_rng(cfg.seed, "scene", index)
    s = cfg.image_size
    sample_id = sample_id or f"sample-{index:05d}"

    rgb = np.broadcast_to(rng.uniform(0.3, 0.7, size=3), (s, s, 3)).copy()
    if cfg.illumination_gradient:
        theta = rng.uniform(0.0, 2.0 * np.pi)
        yy, xx = np.mgrid[0:s, 0:s] / float(s - 1)
        ramp = 0.2 * ((xx - 0.5) * np.cos(theta) + (yy - 0.5) * np.sin(theta))
        rgb += ramp[:, :, None]
    thermal_bg = rng.uniform(0.15, 0.35)
    thermal = np.full((s, s, 1), thermal_bg)

    n_clutter = int(rng.integers(cfg.min_objects, cfg.max_objects + 1)) - 1
    clutter_scale = [cfg.object_scale[0] * 0.5, cfg.object_scale[1] * 0.6]
    for _ in range(n_clutter):
        mask = _draw_shape(rng, cfg, clutter_scale)
        offset = cfg.clutter_contrast * rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 1.0, size=3) * 0.5
        rgb[mask] += offset

    gt = None
    for attempt in range(MAX_REJECTIONS):
        mask = _draw_shape(rng, cfg, cfg.object_scale)
        area = float(mask.mean())
        if cfg.min_area <= area <= cfg.max_area:
            gt = mask
            break
        logger.debug(f"Rejected object with area {area:.3f} for {sample_id} (attempt {attempt})")
    if gt is None:
        raise ConfigError(f"Could not place an object with area in [{cfg.min_area}, {cfg.max_area}] "
                          f"after {MAX_REJECTIONS} attempts; adjust scene.object_scale")

    rgb_offset = cfg.rgb_contrast * rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 1.0, size=3) * 0.5
    rgb[gt] += rgb_offset
    thermal[gt] += cfg.thermal_contrast * 0.5

    rgb = np.clip(rgb + rng.normal(0.0, cfg.noise_sigma, size=rgb.shape), 0.0, 1.0)
    thermal = np.clip(thermal + rng.normal(0.0, cfg.noise_sigma, size=thermal.shape), 0.0, 1.0)
    return RgbtSample(sample_id, rgb, thermal, gt.astype(np.float64))


def sample_paths(sample_id: str) -> Dict[str, str]:
    return {
        "rgb": os.path.join("rgb", f"{sample_id}.ppm"),
        "thermal": os.path.join("thermal", f"{sample_id}.pgm"),
        "gt": os.path.join("gt", f"{sample_id}.pgm"),
    }


def write_sample(sample: RgbtSample, root: str) -> Dict[str, str]:
    """
    写入样本图像（rgb: P6，thermal/gt: P5，gt 取值 {0,255}）

    Returns:
        dict: 相对 root 的文件路径
    """
    paths = sample_paths(sample.id)
    write_image(os.path.join(root, paths["rgb"]), sample.rgb)
    write_image(os.path.join(root, paths["thermal"]), sample.thermal)
    write_image(os.path.join(root, paths["gt"]), (sample.gt > 0.5).astype(np.uint8) * 255)
    return paths


def read_sample(root: str, row: ManifestRow, image_size: Optional[int] = None) -> RgbtSample:
    """
    按清单行读取样本

    Args:
        root: 清单所在目录
        row: 清单行
        image_size: 期望边长（来自清单中的场景配置）

    Returns:
        RgbtSample: 样本
    """
    arrays = {}
    for key in ("rgb", "thermal", "gt"):
        path = os.path.join(root, getattr(row, key))
        if not os.path.exists(path):
            raise DatasetError(f"Missing {key} file {path}", row.id)
        try:
            arrays[key] = read_image(path)
        except FormatError as e:
            raise DatasetError(str(e), row.id)
    rgb, thermal, gt = arrays["rgb"], arrays["thermal"], arrays["gt"]
    if rgb.ndim != 3 or thermal.ndim != 2 or gt.ndim != 2:
        raise DatasetError("Unexpected image kinds (rgb must be P6, thermal and gt P5)", row.id)
    if image_size is not None and (rgb.shape[:2] != (image_size, image_size)
                                   or thermal.shape != (image_size, image_size)
                                   or gt.shape != (image_size, image_size)):
        raise DatasetError(f"Image dimensions disagree with manifest image_size {image_size}", row.id)
    return RgbtSample(row.id, to_float(rgb), to_float(thermal)[:, :, None], (gt > 127).astype(np.float64))


def write_manifest(path: str, scene: SceneConfig, rows: Sequence[ManifestRow]):
    """写入 TSV 清单"""
    ensure_parent_dir(path)
    lines = [f"{MANIFEST_MAGIC}\t{MANIFEST_VERSION}", f"#scene\t{canonical_json(scene.to_dict())}",
             "\t".join(MANIFEST_COLUMNS)]
    for row in rows:
        lines.append("\t".join(getattr(row, col) for col in MANIFEST_COLUMNS))
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")
    logger.info(f"Manifest written: {path} ({len(rows)} rows)")


def read_manifest(path: str) -> Manifest:
    """读取 TSV 清单"""
    if not os.path.exists(path):
        raise FileNotFoundError(f"Manifest not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if len(lines) < 3:
        raise FormatError(f"{path}: manifest header incomplete")
    magic = lines[0].split("\t")
    if magic[0] != MANIFEST_MAGIC or len(magic) != 2:
        raise FormatError(f"{path}: not a manifest file")
    if magic[1] != str(MANIFEST_VERSION):
        raise FormatError(f"{path}: manifest version {magic[1]} unsupported (expected {MANIFEST_VERSION})")
    tag, _, scene_json = lines[1].partition("\t")
    if tag != "#scene":
        raise FormatError(f"{path}: missing #scene line")
    try:
        scene = SceneConfig(**json.loads(scene_json))
    except (json.JSONDecodeError, TypeError) as e:
        raise FormatError(f"{path}: invalid scene record: {e}")
    if lines[2].split("\t") != MANIFEST_COLUMNS:
        raise FormatError(f"{path}: unexpected column header {lines[2]!r}")
    rows = []
    for lineno, line in enumerate(lines[3:], start=4):
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != len(MANIFEST_COLUMNS):
            raise FormatError(f"{path}:{lineno}: expected {len(MANIFEST_COLUMNS)} fields, got {len(fields)}")
        rows.append(ManifestRow(*fields))
    return Manifest(scene, rows, os.path.dirname(os.path.abspath(path)))


def load_samples(manifest: Manifest, split: Optional[str] = None, threads: int = 1) -> List[RgbtSample]:
    """
    读取清单中的样本（保持清单顺序）

    Args:
        manifest: 清单
        split: 只读取该划分
        threads: 并行线程数

    Returns:
        list: RgbtSample 列表
    """
    rows = [row for row in manifest.rows if split is None or row.split == split]
    if not rows:
        raise DatasetError(f"Manifest has no rows for split {split or 'any'}")

    def load(row: ManifestRow) -> RgbtSample:
        return read_sample(manifest.root, row, manifest.scene.image_size)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(load, rows))
    return [load(row) for row in rows]


def write_split(scene: SceneConfig, out_dir: str, n_train: int, n_test: int,
                threads: int = 1) -> Dict[str, str]:
    """
    生成一个场景的训练/测试划分；训练序号 [0, n_train)，测试序号 [n_train, n_train+n_test)

    Args:
        scene: 场景配置
        out_dir: 输出目录
        n_train: 训练样本数
        n_test: 测试样本数
        threads: 并行线程数

    Returns:
        dict: 划分名 -> 清单路径
    """
    scene.validate()
    if n_train < 1 or n_test < 0:
        raise ConfigError(f"Need n_train >= 1 and n_test >= 0, got {n_train}/{n_test}")
    jobs = [(SPLIT_TRAIN, i) for i in range(n_train)] + [(SPLIT_TEST, n_train + i) for i in range(n_test)]

    def build(job) -> ManifestRow:
        split, index = job
        sample = generate_sample(scene, index, f"{split}-{index:05d}")
        paths = write_sample(sample, out_dir)
        return ManifestRow(sample.id, split, paths["rgb"], paths["thermal"], paths["gt"])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(build, jobs))
    else:
        rows = [build(job) for job in jobs]

    manifests = {}
    for split in (SPLIT_TRAIN, SPLIT_TEST):
        path = os.path.join(out_dir, f"{split}.tsv")
        write_manifest(path, scene, [row for row in rows if row.split == split])
        manifests[split] = path
    return manifests


def make_benchmark(scenes: Dict[str, SceneConfig], n_train: int, n_test: int, seed: int,
                   out_root: str, threads: int = 1) -> Dict[str, Dict[str, str]]:
    """
    生成多场景基准，每个场景一个子目录

    Args:
        scenes: 场景名 -> 配置（默认两个标准场景）
        n_train: 训练样本数
        n_test: 测试样本数
        seed: 覆盖场景种子
        out_root: 输出根目录
        threads: 并行线程数

    Returns:
        dict: 场景名 -> {划分名: 清单路径}
    """
    if not scenes:
        scenes = {regime: regime_scene(regime) for regime in REGIMES}
    result = {}
    for regime, scene in scenes.items():
        result[regime] = write_split(replace(scene, seed=seed), os.path.join(out_root, regime),
                                     n_train, n_test, threads)
        logger.info(f"Benchmark regime {regime}: {n_train} train / {n_test} test samples")
    return result


def area_summary(samples: Sequence[RgbtSample]) -> Dict[str, float]:
    """真值面积占比统计"""
    areas = [float(np.mean(s.gt)) for s in samples]
    if not areas:
        return {"count": 0, "min": 0.0, "mean": 0.0, "max": 0.0}
    return {"count": len(areas), "min": min(areas), "mean": float(np.mean(areas)), "max": max(areas)}


def _nearest_crop_resize(image: np.ndarray, top: int, left: int, crop: int, size: int) -> np.ndarray:
    src = top + (np.arange(size) * crop) // size
    src_x = left + (np.arange(size) * crop) // size
    return image[src][:, src_x]


def augment_sample(sample: RgbtSample, rng: np.random.Generator, flip: bool = True, rotate: bool = True,
                   crop: bool = True, crop_range: Sequence[float] = (0.8, 1.0)) -> RgbtSample:
    """
    几何增强：水平翻转 (p=0.5)、90° 倍数旋转、随机裁剪后最近邻缩放回原尺寸
    三幅图像使用同一变换，gt 保持二值

    Args:
        sample: 样本
        rng: 随机源
        flip: 启用翻转
        rotate: 启用旋转
        crop: 启用裁剪
        crop_range: 裁剪边长比例范围

    Returns:
        RgbtSample: 新样本
    """
    images = [sample.rgb, sample.thermal, sample.gt]
    do_flip = rng.random() < 0.5
    turns = int(rng.integers(4))
    scale = rng.uniform(crop_range[0], crop_range[1])
    offset = rng.random(2)
    if flip and do_flip:
        images = [img[:, ::-1] for img in images]
    if rotate and turns:
        images = [np.rot90(img, turns, axes=(0, 1)) for img in images]
    if crop:
        size = images[2].shape[0]
        side = max(1, int(np.floor(scale * size)))
        top, left = (offset * (size - side + 1)).astype(int)
        images = [_nearest_crop_resize(img, top, left, side, size) for img in images]
    rgb, thermal, gt = (np.ascontiguousarray(img) for img in images)
    return RgbtSample(sample.id, rgb, thermal, gt)
