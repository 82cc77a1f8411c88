"""
问题加载模块
~~~~~~~~~~~

把场景配置中的问题（注册表名称或内联定义）解析成注册表条目，并套用配置中的覆盖项。
"""

from dataclasses import replace
from typing import Optional, Union

import numpy as np

from ..engine.errors import ConfigError
from ..engine.registry import ProblemRegistryEntry, get_entry
from ..models.scenario import InlineProblem, ScenarioConfig
from ..models.validators import Box
from .logger import get_engine_logger

logger = get_engine_logger("problem_loader")


class ProblemResolver:
    """问题解析器"""

    @staticmethod
    def _from_inline(problem: InlineProblem) -> ProblemRegistryEntry:
        points = None if problem.points is None else np.asarray(problem.points, dtype=float)
        return ProblemRegistryEntry(
            name="inline", kind=problem.kind, description="内联问题", anchor="",
            source=problem.source, arity_x=problem.arity_x, arity_a=problem.arity_a,
            z_source=problem.z_source, z_membership_tol=problem.z_membership_tol,
            x_box=problem.x_box or Box.cube(problem.arity_x),
            a_box=problem.a_box or (Box.cube(problem.arity_a) if problem.arity_a else None),
            cloud=None if points is None else (lambda: points),
        )

    def resolve(self, config: ScenarioConfig) -> Optional[ProblemRegistryEntry]:
        """
        解析场景配置中的问题

        Raises:
            ConfigError: 未知的注册表名称
        """
        problem: Union[str, InlineProblem, None] = config.problem
        if problem is None:
            return None
        try:
            entry = get_entry(problem) if isinstance(problem, str) else self._from_inline(problem)
        except ConfigError as e:
            logger.service_error(f"问题解析失败: {e}", extra_fields=e.context)
            raise

        overrides = {}
        if config.x_box is not None:
            overrides["x_box"] = config.x_box
        if config.a_box is not None:
            overrides["a_box"] = config.a_box
        if config.membership_tol is not None:
            overrides["z_membership_tol"] = config.membership_tol
        if config.r is not None:
            overrides["r"] = config.r
        if overrides:
            entry = replace(entry, **overrides)
        logger.debug_info("问题已解析", extra_fields={"name": entry.name, "kind": entry.kind,
                                                       "overrides": sorted(overrides)})
        return entry
