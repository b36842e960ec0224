"""
配置加载
YAML 配置文件（model / train / mask / scene 四节）+ .env 环境变量 + 命令行覆盖
"""
import logging
import os
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, Iterable, Optional

import yaml
from dotenv import load_dotenv

from data import SceneConfig
from errors import ConfigError
from masking import MaskConfig
from model import ModelConfig
from training import TrainConfig

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = "config/kan_sam.yaml"

SECTIONS = {
    "model": ModelConfig,
    "train": TrainConfig,
    "mask": MaskConfig,
    "scene": SceneConfig,
}

# train.mask 由独立的 mask 节提供
_EXCLUDED = {("train", "mask")}


@dataclass
class EnvSettings:
    """环境变量（.env）设置"""

    log_level: str = "INFO"
    log_dir: str = "logs"
    threads: Optional[int] = None
    config_path: str = DEFAULT_CONFIG_PATH
    debug: bool = False


@dataclass
class CliConfig:
    """合并后的完整配置"""

    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    mask: MaskConfig = field(default_factory=MaskConfig)
    scene: SceneConfig = field(default_factory=SceneConfig)

    def __post_init__(self):
        self.train = replace(self.train, mask=self.mask)

    def validate(self):
        """校验各模块的不变量"""
        self.model.validate()
        self.train.validate()
        self.mask.validate()
        self.scene.validate()

    def to_dict(self) -> dict:
        train = asdict(self.train)
        train.pop("mask")
        return {"model": asdict(self.model), "train": train, "mask": asdict(self.mask),
                "scene": asdict(self.scene)}


def section_keys(section: str) -> Iterable[str]:
    return [f.name for f in fields(SECTIONS[section]) if (section, f.name) not in _EXCLUDED]


def _coerce(section: str, key: str, value: Any, default: Any) -> Any:
    where = f"{section}.{key}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer, got {value!r}")
        return value
    if isinstance(default, float):
        # YAML 1.1 把 1e-4 读成字符串
        if isinstance(value, str):
            try:
                return float(value)
            except ValueError:
                raise ConfigError(f"{where} must be a number, got {value!r}")
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{where} must be a list, got {value!r}")
        if default:
            return [_coerce(section, f"{key}[{i}]", item, default[0]) for i, item in enumerate(value)]
        return list(value)
    return value


def _update_section(section: str, current, values: Dict[str, Any]):
    if not isinstance(values, dict):
        raise ConfigError(f"Config section '{section}' must be a mapping")
    allowed = set(section_keys(section))
    unknown = sorted(set(values) - allowed)
    if unknown:
        raise ConfigError(f"Unknown config keys in '{section}': {', '.join(unknown)}")
    changes = {key: _coerce(section, key, value, getattr(current, key)) for key, value in values.items()}
    return replace(current, **changes)


def build_config(raw: Optional[Dict[str, Any]]) -> CliConfig:
    """
    由解析后的 YAML 字典构建配置，拒绝未知节与未知键

    Args:
        raw: YAML 内容

    Returns:
        CliConfig: 配置（尚未校验）
    """
    cfg = CliConfig()
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigError("Config file must contain a mapping at top level")
    unknown = sorted(set(raw) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"Unknown config sections: {', '.join(unknown)}")
    parts = {name: getattr(cfg, name) for name in SECTIONS}
    for name, values in raw.items():
        parts[name] = _update_section(name, parts[name], values or {})
    return CliConfig(**parts)


def load_config(path: Optional[str] = None) -> CliConfig:
    """
    读取配置文件；未指定路径时使用 KAN_SAM_CONFIG，文件不存在则使用默认值

    Args:
        path: 配置文件路径

    Returns:
        CliConfig: 配置（尚未校验）
    """
    explicit = path is not None
    path = path or os.getenv("KAN_SAM_CONFIG", DEFAULT_CONFIG_PATH)
    if not os.path.exists(path):
        if explicit:
            raise FileNotFoundError(f"Config file not found: {path}")
        logger.info(f"No config file at {path}, using built-in defaults")
        return CliConfig()
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError(f"Cannot parse config file {path}: {e}")
    logger.info(f"Loaded config from {path}")
    return build_config(raw)


def parse_override(text: str) -> Dict[str, Any]:
    """解析 section.key=value，value 按 YAML 标量解析"""
    key, sep, value = text.partition("=")
    if not sep or "." not in key:
        raise ConfigError(f"Override must look like section.key=value, got {text!r}")
    try:
        parsed = yaml.safe_load(value)
    except yaml.YAMLError as e:
        raise ConfigError(f"Cannot parse override value {value!r}: {e}")
    return {key.strip(): parsed}


def apply_overrides(cfg: CliConfig, overrides: Dict[str, Any]) -> CliConfig:
    """
    应用 "section.key" -> 值 形式的覆盖项（值为 None 的项跳过）

    Args:
        cfg: 原配置
        overrides: 覆盖项

    Returns:
        CliConfig: 新配置
    """
    grouped: Dict[str, Dict[str, Any]] = {}
    for dotted, value in overrides.items():
        if value is None:
            continue
        section, _, key = dotted.partition(".")
        if section not in SECTIONS:
            raise ConfigError(f"Unknown config section in override: {dotted}")
        grouped.setdefault(section, {})[key] = value
    parts = {name: getattr(cfg, name) for name in SECTIONS}
    for section, values in grouped.items():
        parts[section] = _update_section(section, parts[section], values)
        if values:
            logger.debug(f"Overrides applied to {section}: {values}")
    return CliConfig(**parts)


def load_env(env_file: str = ".env") -> EnvSettings:
    """
    加载 .env 并读取环境变量

    Args:
        env_file: .env 文件路径

    Returns:
        EnvSettings: 环境设置
    """
    if os.path.exists(env_file):
        load_dotenv(env_file)
    threads = os.getenv("KAN_SAM_THREADS")
    try:
        threads_value = int(threads) if threads else None
    except ValueError:
        raise ConfigError(f"KAN_SAM_THREADS must be an integer, got {threads!r}")
    return EnvSettings(
        log_level=os.getenv("LOG_LEVEL", "INFO"),
        log_dir=os.getenv("LOG_DIR", "logs"),
        threads=threads_value,
        config_path=os.getenv("KAN_SAM_CONFIG", DEFAULT_CONFIG_PATH),
        debug=os.getenv("KAN_SAM_DEBUG", "0").lower() in ("1", "true", "yes"),
    )
