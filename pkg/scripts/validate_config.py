#!/usr/bin/env python3
"""
配置验证脚本
验证 .env 和 kan_sam.yaml 配置是否正确
"""
import os
import sys
from pathlib import Path

project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root / 'src'))

from config import DEFAULT_CONFIG_PATH, load_config, load_env, section_keys  # noqa: E402
from errors import ConfigError  # noqa: E402


def validate_env():
    """验证环境变量配置"""
    print("检查环境变量配置...")
    try:
        env = load_env()
    except ConfigError as e:
        print(f"  ✗ {e}")
        return False

    print(f"  ✓ LOG_LEVEL: {env.log_level}")
    print(f"  ✓ LOG_DIR: {env.log_dir}")
    print(f"  ✓ KAN_SAM_CONFIG: {env.config_path}")
    threads = env.threads if env.threads is not None else 1
    if threads < 1:
        print(f"  ✗ KAN_SAM_THREADS: {threads} (必须 >= 1)")
        return False
    print(f"  ✓ KAN_SAM_THREADS: {threads}" + ("" if threads == 1 else " (多线程时日志不保证逐字节一致)"))
    print(f"  ✓ KAN_SAM_DEBUG: {env.debug}")
    print("✅ 环境变量配置正确\n")
    return True


def validate_config_file():
    """验证 YAML 配置文件"""
    print("检查配置文件...")

    config_path = os.getenv('KAN_SAM_CONFIG', DEFAULT_CONFIG_PATH)
    if not os.path.exists(config_path):
        print(f"  ✗ 配置文件不存在: {config_path}")
        return False
    print(f"  ✓ 配置文件存在: {config_path}")

    try:
        cfg = load_config(config_path)
        cfg.validate()
    except ConfigError as e:
        print(f"  ✗ 配置无效: {e}")
        return False

    for section, values in cfg.to_dict().items():
        print(f"\n  [{section}] {len(list(section_keys(section)))} 项")
        for key, value in values.items():
            print(f"    ✓ {key}: {value}")

    if cfg.model.input_size != cfg.scene.image_size:
        print(f"\n  ✗ model.input_size ({cfg.model.input_size}) 与 scene.image_size "
              f"({cfg.scene.image_size}) 不一致")
        return False

    print("\n✅ 配置文件正确\n")
    return True


def main():
    """主函数"""
    print("=" * 60)
    print("KAN-SAM - 配置验证")
    print("=" * 60)
    print()

    env_file = '.env'
    if os.path.exists(env_file):
        print(f"已加载环境变量文件: {env_file}\n")
    else:
        print(f"⚠ 环境变量文件不存在: {env_file}")
        print("提示: 复制 .env.example 为 .env 并修改配置\n")

    results = [
        validate_env(),
        validate_config_file(),
    ]

    print("=" * 60)
    if all(results):
        print("✅ 所有配置验证通过!")
        print("可以生成数据: scripts/generate_benchmark.sh")
        return 0
    else:
        print("❌ 配置验证失败，请检查上述错误")
        return 1


if __name__ == '__main__':
    sys.exit(main())
