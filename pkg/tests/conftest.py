"""共享测试夹具"""
import logging

import numpy as np
import pytest

from autograd import precision, set_debug
from data import SceneConfig
from masking import MaskConfig
from model import ModelConfig
from training import TrainConfig


@pytest.fixture(autouse=True)
def float64():
    """每个测试都在 64 位精度下运行，结束后恢复"""
    with precision(64):
        yield
    set_debug(False)


@pytest.fixture(autouse=True)
def isolated_env(monkeypatch, tmp_path):
    """避免读取开发者本地的 .env 与配置文件，日志写到临时目录"""
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("LOG_DIR", str(tmp_path / "logs"))
    monkeypatch.setenv("LOG_LEVEL", "WARNING")
    for name in ("KAN_SAM_CONFIG", "KAN_SAM_THREADS", "KAN_SAM_DEBUG"):
        monkeypatch.delenv(name, raising=False)
    yield
    root = logging.getLogger()
    for handler in list(root.handlers):
        if isinstance(handler, logging.FileHandler):
            root.removeHandler(handler)
            handler.close()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_model_config():
    """16x16 输入、patch 4 的小模型"""
    return ModelConfig(input_size=16, patch_size=4, stage_channels=[8, 16, 32], blocks_per_stage=1,
                       fpn_dim=16, adapter_reduction=4, precision=64, seed=0)


@pytest.fixture
def tiny_scene():
    return SceneConfig(image_size=16, object_scale=[0.2, 0.35], min_area=0.05, max_area=0.5, seed=3)


@pytest.fixture
def tiny_train_config():
    return TrainConfig(lr=1e-3, batch_size=2, max_epochs=1, flip=False, rotate=False, crop=False,
                       mask=MaskConfig())
