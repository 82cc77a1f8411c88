"""
测试公共夹具
~~~~~~~~~~~

在导入 app 之前关闭日志输出，避免测试在仓库下生成日志文件。
"""

import os
import tempfile

os.environ.setdefault("LOG_TYPE", "none")
os.environ.setdefault("LOG_DIR", tempfile.mkdtemp(prefix="translab-logs-"))

import pytest

from app.engine.registry import get_entry
from app.utils.task_manager import TaskQueueManager


@pytest.fixture
def serial_manager():
    """单线程任务管理器"""
    return TaskQueueManager(1)


@pytest.fixture
def parallel_manager():
    """多线程任务管理器"""
    return TaskQueueManager(4)


@pytest.fixture
def ex22():
    """F(x,a)=(0, a1²−a2²)，Z = {(0,0)}"""
    return get_entry("ex-2-2").family()


@pytest.fixture
def ex23():
    """F(x,a)=(x+a1, x+a2)，Z = {0}"""
    return get_entry("ex-2-3").family()
