"""
模型模块包
~~~~~~~~~

场景配置、结果报告以及共享的字段校验模型（pydantic v2）。
"""

from .reports import SCHEMA_VERSION, ScenarioReport
from .scenario import STOCHASTIC_COMMANDS, InlineProblem, ScenarioConfig, ThresholdQuery
from .validators import Box, ScaleSpec, SearchSpec, TolPolicy

__all__ = [
    'SCHEMA_VERSION',
    'ScenarioReport',
    'STOCHASTIC_COMMANDS',
    'InlineProblem',
    'ScenarioConfig',
    'ThresholdQuery',
    'Box',
    'ScaleSpec',
    'SearchSpec',
    'TolPolicy',
]
