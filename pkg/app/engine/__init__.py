"""
数值引擎
~~~~~~~

横截缺陷、奇点层、多点横截性、维数估计与 Pareto 单纯性的数值实现。
"""

from .errors import LabError
from .expr import ExprMap, Wrt, parse
from .linalg import DEFAULT_POLICY, SEARCH_POLICY, rank_decide
from .pareto import MultiObjective
from .registry import REGISTRY, ProblemRegistryEntry, get_entry, list_entries
from .transversality import FamilyProblem, LevelSetSubmanifold

__all__ = [
    'LabError',
    'ExprMap',
    'Wrt',
    'parse',
    'DEFAULT_POLICY',
    'SEARCH_POLICY',
    'rank_decide',
    'MultiObjective',
    'REGISTRY',
    'ProblemRegistryEntry',
    'get_entry',
    'list_entries',
    'FamilyProblem',
    'LevelSetSubmanifold',
]
