"""
数值线性代数
~~~~~~~~~~~

基于奇异值的容差秩判定、Jacobian 余秩，以及余秩 ≥ k 矩阵集的 Schur 补局部坐标。
"""

import os
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from ..models.reports import RankDecision
from ..models.validators import TolPolicy
from .errors import NonFiniteMatrixError, PivotBlockError
from .expr import ExprMap, Wrt

DEFAULT_TAU = float(os.getenv("LAB_RANK_TOL", "1e-8"))
DEFAULT_POLICY = TolPolicy.relative(DEFAULT_TAU)
# 搜索类引擎使用带尺度下限的策略，见证点附近一致很小的 Jacobian 不会被误判为满秩
SEARCH_POLICY = TolPolicy.scaled(DEFAULT_TAU, 1.0)


def _as_matrix(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim < 2:
        M = M.reshape(1, -1) if M.ndim == 1 else M.reshape(1, 1)
    if not np.all(np.isfinite(M)):
        raise NonFiniteMatrixError("矩阵包含非有限元素", {"shape": list(M.shape)})
    return M


def singular_values(M: np.ndarray) -> np.ndarray:
    if M.size == 0:
        return np.zeros(0)
    return np.linalg.svd(M, compute_uv=False)


def rank_decide(M, policy: Optional[TolPolicy] = None) -> RankDecision:
    """
    容差秩判定

    Args:
        M: 有限实矩阵
        policy: 容差策略，缺省为 relative(1e-8)

    Returns:
        RankDecision，rank 为严格大于 tolerance_used 的奇异值个数
    """
    policy = policy or DEFAULT_POLICY
    M = _as_matrix(M)
    rows, cols = M.shape
    s = singular_values(M)
    sigma_max = s[0] if s.size else 0.0
    tol = float(policy.tolerance(sigma_max, rows, cols))
    rank = int(np.count_nonzero(s > tol))
    return RankDecision(rank=rank, corank=min(rows, cols) - rank,
                        singular_values=[float(v) for v in s], tolerance_used=tol)


def batch_rank(stack: np.ndarray, policy: Optional[TolPolicy] = None) -> tuple[np.ndarray, np.ndarray]:
    """对形状 (N, rows, cols) 的矩阵栈逐个判定秩，返回 (ranks, singular_values)"""
    policy = policy or DEFAULT_POLICY
    stack = np.asarray(stack, dtype=float)
    if not np.all(np.isfinite(stack)):
        raise NonFiniteMatrixError("矩阵栈包含非有限元素", {"shape": list(stack.shape)})
    rows, cols = stack.shape[-2:]
    if min(rows, cols) == 0:
        return np.zeros(stack.shape[:-2], dtype=int), np.zeros(stack.shape[:-2] + (0,))
    s = np.linalg.svd(stack, compute_uv=False)
    tol = policy.tolerance(s[..., 0], rows, cols)
    return np.count_nonzero(s > tol[..., None], axis=-1), s


def corank_of_jacobian(f: ExprMap, x, a=None, policy: Optional[TolPolicy] = None) -> int:
    """corank Jf(x) = min(n, ℓ) − rank Jf(x)"""
    return rank_decide(f.jacobian(x, a, Wrt.X), policy).corank


@dataclass(frozen=True)
class PivotBlock:
    """Schur 补使用的可逆主元块（行、列下标）"""
    rows: tuple[int, ...]
    cols: tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.rows)


def select_pivots(M, k: int, policy: Optional[TolPolicy] = None) -> PivotBlock:
    """
    用列主元 QR 贪心选取 (v−k)×(v−k) 可逆块

    Raises:
        PivotBlockError: 所选块在容差意义下奇异（M 的秩小于 v−k）
    """
    M = _as_matrix(M)
    rows, cols = M.shape
    v = min(rows, cols)
    if not 1 <= k <= v:
        raise PivotBlockError(f"余秩 k={k} 超出范围 [1, {v}]")
    r = v - k
    if r == 0:
        return PivotBlock((), ())
    _, col_perm = scipy.linalg.qr(M, mode="r", pivoting=True)
    chosen_cols = np.sort(col_perm[:r])
    _, row_perm = scipy.linalg.qr(M[:, chosen_cols].T, mode="r", pivoting=True)
    chosen_rows = np.sort(row_perm[:r])
    block = M[np.ix_(chosen_rows, chosen_cols)]
    s_block = singular_values(block)
    s_all = singular_values(M)
    tol = float((policy or DEFAULT_POLICY).tolerance(s_all[0], rows, cols))
    if s_block[-1] <= tol:
        raise PivotBlockError(f"找不到 {r}×{r} 可逆主元块", {"sigma_min": float(s_block[-1]), "tol": tol})
    return PivotBlock(tuple(int(i) for i in chosen_rows), tuple(int(j) for j in chosen_cols))


def schur_stratum_chart(M, k: int, pivots: Optional[PivotBlock] = None,
                        policy: Optional[TolPolicy] = None) -> np.ndarray:
    """
    余秩 ≥ k 集合的局部方程 (D − C·A⁻¹·B)ᵀ

    M 为 ℓ×n 矩阵，A 是 (v−k)×(v−k) 主元块。结果形状为 (n−v+k)×(ℓ−v+k)，
    共 (n−v+k)(ℓ−v+k) 个分量，全部为零当且仅当 M 在主元块附近的余秩 ≥ k。
    pivots 固定时该映射对 M 光滑，可用于对 x 求差分。
    """
    M = _as_matrix(M)
    if pivots is None:
        pivots = select_pivots(M, k, policy)
    rows, cols = M.shape
    if pivots.size == 0:
        return M.T.copy()
    other_rows = [i for i in range(rows) if i not in pivots.rows]
    other_cols = [j for j in range(cols) if j not in pivots.cols]
    A = M[np.ix_(pivots.rows, pivots.cols)]
    B = M[np.ix_(pivots.rows, other_cols)]
    C = M[np.ix_(other_rows, pivots.cols)]
    D = M[np.ix_(other_rows, other_cols)]
    return (D - C @ scipy.linalg.solve(A, B)).T
