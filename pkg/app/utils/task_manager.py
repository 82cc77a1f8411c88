"""
任务管理器模块
~~~~~~~~~~~~~

提供确定性的工作线程池：批量任务按下标分发，每个下标拥有独立的随机子流，
结果按下标顺序收集，因此相同种子在任意工作线程数下得到相同结果。
"""

import os
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Dict, Optional, Sequence, TypeVar

import numpy as np

from .logger import get_engine_logger

logger = get_engine_logger("task_manager")

T = TypeVar("T")
R = TypeVar("R")


def substream(seed: int, index: int) -> np.random.Generator:
    """
    第 index 个任务的随机数生成器

    子流只由 (seed, index) 决定，与执行它的线程无关。
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


class Task:
    """任务类"""

    def __init__(self, index: int, label: str):
        """
        初始化任务

        Args:
            index: 任务在批次中的下标
            label: 批次名称
        """
        self.index = index
        self.label = label
        self.status = "pending"
        self.result: Any = None
        self.error: Optional[str] = None

    def update_status(self, status: str, result: Optional[Any] = None, error: Optional[str] = None):
        self.status = status
        self.result = result
        self.error = error


class TaskQueueManager:
    """确定性批任务管理器"""

    def __init__(self, max_workers: Optional[int] = None):
        """
        初始化任务管理器

        Args:
            max_workers: 最大工作线程数，缺省读取 ENGINE_WORKERS（默认 2）
        """
        self.max_workers = max_workers or int(os.getenv("ENGINE_WORKERS", "2"))
        if self.max_workers < 1:
            raise ValueError("工作线程数必须为正")
        self._lock = threading.Lock()
        self._stats = {"batches": 0, "completed": 0, "failed": 0}

        logger.debug_info("任务管理器初始化完成", extra_fields={"max_workers": self.max_workers})

    def map(self, fn: Callable[[int, T], R], items: Sequence[T], label: str = "batch") -> list[R]:
        """
        对 items 逐个执行 fn(index, item)，按下标顺序返回结果

        任一任务失败时记录日志并重新抛出第一个（按下标）异常。
        """
        tasks = [Task(i, label) for i in range(len(items))]

        def run(task: Task) -> None:
            task.update_status("processing")
            try:
                task.update_status("completed", result=fn(task.index, items[task.index]))
            except Exception as e:
                task.update_status("failed", error=str(e))
                task.result = e

        if self.max_workers == 1 or len(tasks) <= 1:
            for task in tasks:
                run(task)
        else:
            with ThreadPoolExecutor(max_workers=self.max_workers, thread_name_prefix=label) as pool:
                list(pool.map(run, tasks))

        failed = [t for t in tasks if t.status == "failed"]
        with self._lock:
            self._stats["batches"] += 1
            self._stats["completed"] += len(tasks) - len(failed)
            self._stats["failed"] += len(failed)
        logger.debug_info("批任务处理完成", extra_fields={
            "label": label, "tasks": len(tasks), "failed": len(failed), "workers": self.max_workers
        })
        if failed:
            first = failed[0]
            logger.service_error(f"任务 {label}[{first.index}] 处理失败", extra_fields={"error": first.error},
                                 exc_info=first.result)
            raise first.result
        return [t.result for t in tasks]

    def map_seeded(self, fn: Callable[[np.random.Generator, int], R], count: int, seed: int,
                   label: str = "batch") -> list[R]:
        """执行 count 个随机任务，第 i 个任务使用 substream(seed, i)"""
        return self.map(lambda i, _: fn(substream(seed, i), i), range(count), label)

    def get_queue_stats(self) -> Dict[str, Any]:
        """
        获取统计信息

        Returns:
            批次数、完成与失败的任务数、工作线程数
        """
        with self._lock:
            return {**self._stats, "max_workers": self.max_workers}


_default_manager: Optional[TaskQueueManager] = None


def get_task_manager(max_workers: Optional[int] = None) -> TaskQueueManager:
    """获取任务管理器；指定 max_workers 时返回新实例，否则返回进程内共享实例"""
    global _default_manager
    if max_workers is not None:
        return TaskQueueManager(max_workers)
    if _default_manager is None:
        _default_manager = TaskQueueManager()
    return _default_manager
