"""
工具模块包
~~~~~~~~~

日志、确定性工作线程池与报告输出。问题加载（problem_loader）依赖引擎，需单独导入。
"""

from .logger import get_engine_logger
from .task_manager import TaskQueueManager, get_task_manager, substream
from .report_writer import IReportWriter, ReportWriterFactory

__all__ = [
    'get_engine_logger',
    'TaskQueueManager',
    'get_task_manager',
    'substream',
    'IReportWriter',
    'ReportWriterFactory',
]
