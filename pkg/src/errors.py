"""
异常定义
库代码只抛出这里的异常，由命令行入口统一映射为退出码
"""
from typing import Iterable, Optional


class KanSamError(Exception):
    """所有项目异常的基类"""


class DimensionError(KanSamError):
    """张量形状或通道数不匹配"""


class ContractError(KanSamError):
    """调用方违反接口约定（例如对非标量调用 backward）"""


class ConfigError(KanSamError):
    """配置值非法、未知配置键或退化的样条网格"""


class FormatError(KanSamError):
    """检查点、PPM/PGM 或清单文件内容损坏"""


class DatasetError(KanSamError):
    """数据集问题：文件缺失、清单为空等"""

    def __init__(self, message: str, sample_id: Optional[str] = None):
        """
        Args:
            message: 错误描述
            sample_id: 出问题的样本 ID（若已知）
        """
        if sample_id is not None:
            message = f"{message} (sample id: {sample_id})"
        super().__init__(message)
        self.sample_id = sample_id


class NumericalAbort(KanSamError):
    """损失或前向结果出现 NaN/Inf，训练中止"""

    def __init__(self, message: str, batch_ids: Iterable[str] = ()):
        """
        Args:
            message: 错误描述
            batch_ids: 出问题的批次样本 ID
        """
        self.batch_ids = list(batch_ids)
        if self.batch_ids:
            message = f"{message} (batch: {', '.join(self.batch_ids)})"
        super().__init__(message)
