"""
异常定义模块
~~~~~~~~~~~

引擎内所有可预期的错误都继承自 LabError，命令行入口据此区分运行错误与判定结果。
"""

from typing import Any, Optional


class LabError(Exception):
    """实验室引擎错误基类"""

    def __init__(self, message: str, context: Optional[dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.context = context or {}


class ExprSyntaxError(LabError):
    """表达式语法错误，position 为出错位置（从0开始的字符偏移）"""

    def __init__(self, message: str, position: int, source: str = ""):
        super().__init__(f"{message} (位置 {position})", {"position": position, "source": source})
        self.position = position
        self.source = source


class UnknownIdentifierError(LabError):
    """表达式中出现未知标识符"""


class ArityError(LabError):
    """变量个数或向量长度与映射的元数不一致"""


class EvaluationError(LabError):
    """求值时遇到奇异点：除零、非正数取对数、负数开方等"""


class NonFiniteMatrixError(LabError):
    """矩阵包含 NaN 或 Inf"""


class PivotBlockError(LabError):
    """找不到所需大小的可逆主元块"""


class InvalidSubmanifoldError(LabError):
    """子流形描述无效：定义映射在零点处不是淹没，或余维数为0"""


class PreconditionError(LabError):
    """操作的前置条件不满足"""


class InvalidRegimeError(LabError):
    """阈值查询的参数不在定理适用范围内"""


class NonConvergenceError(LabError):
    """迭代求解器在预算内未收敛"""


class NotInjectiveError(PreconditionError):
    """映射在给定区域上不是单射（找到了二重点）"""


class ConfigError(LabError):
    """场景配置错误"""


class ReportWriteError(LabError):
    """报告写入失败"""
