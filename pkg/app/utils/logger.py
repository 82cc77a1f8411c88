"""
日志系统模块
~~~~~~~~~~~

为各计算组件提供日志记录器，服务日志（输入、判定结果、最终错误）与调试日志
（求解器内部、批次进度、线程池统计）自动分离。

报告文件中不写时间戳和进程号，这些只出现在日志行里。
"""

import logging
import logging.handlers
import os
import sys
import threading
from abc import ABC, abstractmethod
from typing import Any, Dict, Optional

from loguru import logger as loguru_logger


# --- 日志接口定义 ---
class ILogger(ABC):
    """日志记录器接口，定义了所有日志实现必须遵守的方法。"""

    @abstractmethod
    def service_info(self, message: str, extra_fields: Optional[Dict[str, Any]] = None) -> None:
        pass

    @abstractmethod
    def service_warning(self, message: str, extra_fields: Optional[Dict[str, Any]] = None) -> None:
        pass

    @abstractmethod
    def service_error(self, message: str, extra_fields: Optional[Dict[str, Any]] = None,
                      exc_info: Optional[Exception] = None) -> None:
        pass

    @abstractmethod
    def service_critical(self, message: str, extra_fields: Optional[Dict[str, Any]] = None,
                         exc_info: Optional[Exception] = None) -> None:
        pass

    @abstractmethod
    def debug_debug(self, message: str, extra_fields: Optional[Dict[str, Any]] = None) -> None:
        pass

    @abstractmethod
    def debug_info(self, message: str, extra_fields: Optional[Dict[str, Any]] = None) -> None:
        pass

    @abstractmethod
    def debug_warning(self, message: str, extra_fields: Optional[Dict[str, Any]] = None) -> None:
        pass

    @abstractmethod
    def debug_error(self, message: str, extra_fields: Optional[Dict[str, Any]] = None,
                    exc_info: Optional[Exception] = None) -> None:
        pass


# --- 空日志实现 ---
class NullLogger(ILogger):
    """不执行任何操作的日志记录器，测试中通过 LOG_TYPE=none 使用。"""
    def service_info(self, message, extra_fields=None) -> None: pass
    def service_warning(self, message, extra_fields=None) -> None: pass
    def service_error(self, message, extra_fields=None, exc_info=None) -> None: pass
    def service_critical(self, message, extra_fields=None, exc_info=None) -> None: pass
    def debug_debug(self, message, extra_fields=None) -> None: pass
    def debug_info(self, message, extra_fields=None) -> None: pass
    def debug_warning(self, message, extra_fields=None) -> None: pass
    def debug_error(self, message, extra_fields=None, exc_info=None) -> None: pass


_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - PID:%(process)d - %(message)s'


def _format_extra(record: logging.LogRecord) -> str:
    extra = getattr(record, "extra_fields", None)
    if not extra:
        return ""
    return " | " + " ".join(f"{k}={v}" for k, v in extra.items())


class BaseLogHandler(ABC):
    @abstractmethod
    def handle(self, record: logging.LogRecord) -> None:
        pass


class ConsoleHandler(BaseLogHandler):
    """控制台输出写到 stderr，stdout 留给报告路径等命令输出"""

    def __init__(self, level: int = logging.WARNING):
        self.level = level
        self.formatter = logging.Formatter(_FORMAT)

    def handle(self, record: logging.LogRecord) -> None:
        if record.levelno >= self.level:
            print(self.formatter.format(record) + _format_extra(record), file=sys.stderr)


class FileHandler(BaseLogHandler):
    def __init__(self, filename: str, level: int = logging.DEBUG, max_bytes: int = 10 * 1024 * 1024,
                 backup_count: int = 5):
        self.filename = filename
        self.level = level
        os.makedirs(os.path.dirname(filename) or ".", exist_ok=True)
        self.handler = logging.handlers.RotatingFileHandler(
            filename, maxBytes=max_bytes, backupCount=backup_count, encoding="utf-8", delay=True
        )
        self.handler.setLevel(level)
        self.handler.setFormatter(logging.Formatter(_FORMAT))

    def handle(self, record: logging.LogRecord) -> None:
        if record.levelno >= self.level:
            if hasattr(record, "extra_fields"):
                record.msg = f"{record.msg}{_format_extra(record)}"
            self.handler.emit(record)


# --- Loguru 实现 ---
_loguru_lock = threading.Lock()
_loguru_components: set[str] = set()
_loguru_console_added = False


class LoguruLogger(ILogger):
    """
    loguru 后端。控制台 sink 全局只添加一次，每个组件各自添加
    service/debug 两个按 extra 过滤的文件 sink。
    """

    def __init__(self, component: str):
        global _loguru_console_added
        self.component = component
        self.log_dir = os.getenv('LOG_DIR', 'logs')
        log_format = ("<green>{time:YYYY-MM-DD HH:mm:ss.SSS}</green> | <level>{level: <8}</level> | "
                      "<cyan>{extra[component]}</cyan> | <magenta>PID:{process}</magenta> - <level>{message}</level>")

        with _loguru_lock:
            if not _loguru_console_added:
                loguru_logger.remove()
                loguru_logger.add(sys.stderr, level=os.getenv('CONSOLE_LOG_LEVEL', 'WARNING').upper(),
                                  format=log_format, filter=lambda record: "component" in record["extra"])
                _loguru_console_added = True
            if component in _loguru_components:
                return
            os.makedirs(self.log_dir, exist_ok=True)
            for log_type, suffix in (("service", ""), ("debug", "_debug")):
                loguru_logger.add(
                    os.path.join(self.log_dir, f"{component}{suffix}.log"),
                    filter=lambda record, t=log_type: (record["extra"].get("log_type") == t
                                                       and record["extra"].get("component") == component),
                    level=os.getenv('FILE_LOG_LEVEL', 'DEBUG').upper(),
                    format=log_format, rotation="10 MB", retention="5 days", enqueue=True,
                )
            _loguru_components.add(component)

    def _log(self, log_type: str, level: str, message: str, extra_fields: Optional[Dict[str, Any]] = None,
             exc_info: Optional[Exception] = None):
        extra = {"component": self.component, "log_type": log_type}
        if extra_fields:
            extra.update(extra_fields)
        bound = loguru_logger.bind(**extra)
        if exc_info:
            bound.opt(exception=exc_info).log(level, message)
        else:
            bound.log(level, message)

    def service_info(self, message, extra_fields=None) -> None: self._log("service", "INFO", message, extra_fields)
    def service_warning(self, message, extra_fields=None) -> None: self._log("service", "WARNING", message, extra_fields)
    def service_error(self, message, extra_fields=None, exc_info=None) -> None: self._log("service", "ERROR", message, extra_fields, exc_info)
    def service_critical(self, message, extra_fields=None, exc_info=None) -> None: self._log("service", "CRITICAL", message, extra_fields, exc_info)
    def debug_debug(self, message, extra_fields=None) -> None: self._log("debug", "DEBUG", message, extra_fields)
    def debug_info(self, message, extra_fields=None) -> None: self._log("debug", "INFO", message, extra_fields)
    def debug_warning(self, message, extra_fields=None) -> None: self._log("debug", "WARNING", message, extra_fields)
    def debug_error(self, message, extra_fields=None, exc_info=None) -> None: self._log("debug", "ERROR", message, extra_fields, exc_info)


class _SimpleLogger:
    def __init__(self, name: str, level: int, handlers: list[BaseLogHandler]):
        self.name = name
        self.level = level
        self.handlers = handlers

    def _log(self, level: int, message: str, extra_fields: Optional[Dict[str, Any]] = None,
             exc_info: Optional[Exception] = None) -> None:
        if level < self.level:
            return
        record = logging.LogRecord(
            name=self.name, level=level, pathname='', lineno=0, msg=message, args=(),
            exc_info=(type(exc_info), exc_info, exc_info.__traceback__) if exc_info else None
        )
        if extra_fields:
            record.extra_fields = extra_fields
        for handler in self.handlers:
            try:
                handler.handle(record)
            except Exception as e:
                print(f"Log handler error: {str(e)}", file=sys.stderr)
                print(f"Original message: {message}", file=sys.stderr)


# --- 内置Logging模块实现 ---
class BuiltinLogger(ILogger):
    """使用Python内置logging模块的日志记录器。"""

    def __init__(self, component: str, level: Optional[int] = None):
        self.component = component
        self.level = level or self._get_default_level()
        self.service_logger = self._create_logger('service')
        self.debug_logger = self._create_logger('debug', debug=True)

    def _get_default_level(self) -> int:
        level_str = os.getenv('LOG_LEVEL', 'INFO')
        return getattr(logging, level_str.upper(), logging.INFO)

    def _get_logs_dir(self) -> str:
        return os.getenv('LOG_DIR', 'logs')

    def _create_logger(self, prefix: str, debug: bool = False) -> _SimpleLogger:
        log_file = os.path.join(self._get_logs_dir(), f"{self.component}{'_debug' if debug else ''}.log")
        level = logging.DEBUG if debug else self.level

        console_level = getattr(logging, os.getenv('CONSOLE_LOG_LEVEL', 'WARNING').upper(), logging.WARNING)
        file_level = getattr(logging, os.getenv('FILE_LOG_LEVEL', 'DEBUG').upper(), logging.DEBUG)
        max_bytes = int(os.getenv('LOG_MAX_BYTES', 10485760))
        backup_count = int(os.getenv('LOG_BACKUP_COUNT', 5))

        handlers: list[BaseLogHandler] = [
            ConsoleHandler(level=console_level),
            FileHandler(log_file, level=file_level, max_bytes=max_bytes, backup_count=backup_count),
        ]
        return _SimpleLogger(f"{prefix}.{self.component}", level, handlers)

    def log_service(self, level: int, message: str, extra_fields=None, exc_info=None) -> None:
        self.service_logger._log(level, message, extra_fields, exc_info)

    def log_debug(self, level: int, message: str, extra_fields=None, exc_info=None) -> None:
        self.debug_logger._log(level, message, extra_fields, exc_info)

    def service_info(self, message, extra_fields=None) -> None: self.log_service(logging.INFO, message, extra_fields)
    def service_warning(self, message, extra_fields=None) -> None: self.log_service(logging.WARNING, message, extra_fields)
    def service_error(self, message, extra_fields=None, exc_info=None) -> None: self.log_service(logging.ERROR, message, extra_fields, exc_info)
    def service_critical(self, message, extra_fields=None, exc_info=None) -> None: self.log_service(logging.CRITICAL, message, extra_fields, exc_info)
    def debug_debug(self, message, extra_fields=None) -> None: self.log_debug(logging.DEBUG, message, extra_fields)
    def debug_info(self, message, extra_fields=None) -> None: self.log_debug(logging.INFO, message, extra_fields)
    def debug_warning(self, message, extra_fields=None) -> None: self.log_debug(logging.WARNING, message, extra_fields)
    def debug_error(self, message, extra_fields=None, exc_info=None) -> None: self.log_debug(logging.ERROR, message, extra_fields, exc_info)


# --- 日志记录器工厂和缓存 ---
_logger_cache: Dict[str, ILogger] = {}


def get_engine_logger(component: str) -> ILogger:
    """
    获取计算组件专用的日志记录器实例。

    根据环境变量 `LOG_TYPE`（logging / loguru / none）创建并按组件名缓存。
    由于引擎模块在导入时获取记录器，测试需在导入前设置 LOG_TYPE。

    Args:
        component: 组件名称，如 "transversality"、"pareto"

    Returns:
        一个遵循 `ILogger` 接口的日志记录器实例。
    """
    if component in _logger_cache:
        return _logger_cache[component]

    log_type = os.getenv('LOG_TYPE', 'logging').lower()

    logger: ILogger
    if log_type == 'none':
        logger = NullLogger()
    elif log_type == 'loguru':
        logger = LoguruLogger(component)
    elif log_type == 'logging':
        logger = BuiltinLogger(component)
    else:
        print(f"Warning: Unknown LOG_TYPE '{log_type}'. Falling back to 'logging'.", file=sys.stderr)
        logger = BuiltinLogger(component)

    _logger_cache[component] = logger
    return logger


def reset_logger_cache() -> None:
    """清空记录器缓存（切换 LOG_TYPE 后重新创建时使用）"""
    _logger_cache.clear()
