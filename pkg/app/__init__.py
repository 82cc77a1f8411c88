"""
横截缺陷实验室 - 核心应用包
~~~~~~~~~~~~~~~~~~~~~~~~~

本包提供横截性机制的数值实现，包括：
- 表达式映射与二阶前向自动微分
- 横截缺陷、奇点层与多点横截性检查
- 盒计数维数估计与阈值计算
- 强凸多目标问题的 Pareto 单纯性检查
- 命令行场景执行与报告输出
"""

__version__ = "0.1.0"
__author__ = "Fred Yuan"
__email__ = "cjcj188@gmail.com"

from .utils import TaskQueueManager, ReportWriterFactory, IReportWriter

__all__ = [
    'TaskQueueManager',
    'ReportWriterFactory',
    'IReportWriter',
]
