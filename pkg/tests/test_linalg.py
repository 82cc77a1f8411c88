"""
数值线性代数测试
~~~~~~~~~~~~~~~
"""

import numpy as np
import pytest

from app.engine.errors import NonFiniteMatrixError, PivotBlockError
from app.engine.expr import ExprMap, parse
from app.engine.linalg import (
    batch_rank, corank_of_jacobian, rank_decide, schur_stratum_chart, select_pivots,
)
from app.models.validators import TolPolicy
from app.utils.task_manager import substream


def test_rank_examples():
    """零矩阵、原点处梯度为零的映射、相对容差下的小奇异值"""
    print("=== 测试秩判定 ===")
    decision = rank_decide(np.zeros((3, 3)))
    assert (decision.rank, decision.corank) == (0, 3)

    f = parse("[x1^2 + x2^2, x1^2 + x2^2]", 2)
    decision = rank_decide(f.jacobian([0.0, 0.0]))
    assert (decision.rank, decision.corank) == (0, 2)

    decision = rank_decide(np.diag([1.0, 1e-14]), TolPolicy.relative(1e-10))
    assert (decision.rank, decision.corank) == (1, 1)
    assert decision.singular_values == pytest.approx([1.0, 1e-14], rel=1e-6)


def test_rank_policies():
    """绝对容差与带下限的缩放容差"""
    tiny = np.diag([1e-9, 1e-9])
    assert rank_decide(tiny, TolPolicy.relative(1e-8)).rank == 2
    assert rank_decide(tiny, TolPolicy.absolute(1e-6)).rank == 0
    assert rank_decide(tiny, TolPolicy.scaled(1e-8, 1.0)).rank == 0


def test_rank_plus_corank():
    """rank + corank = min(rows, cols)"""
    rng = substream(3, 0)
    for rows, cols in [(1, 4), (3, 2), (5, 5), (2, 7)]:
        M = rng.normal(size=(rows, cols))
        decision = rank_decide(M)
        assert decision.rank + decision.corank == min(rows, cols)
        assert decision.rank == min(rows, cols)


def planted(rng, rows, cols, rank, smallest=1e-3):
    """奇异值取 logspace(0, log10(smallest)) 的秩 rank 矩阵"""
    U, _ = np.linalg.qr(rng.normal(size=(rows, rows)))
    V, _ = np.linalg.qr(rng.normal(size=(cols, cols)))
    sigma = np.zeros((rows, cols))
    sigma[np.arange(rank), np.arange(rank)] = np.logspace(0.0, np.log10(smallest), rank)
    return U @ sigma @ V.T


def test_planted_rank_is_recovered():
    """构造的秩在相对与缩放两种策略下都被恢复，整体缩放不改变相对策略的结果"""
    rng = substream(6, 0)
    for rows, cols in [(3, 3), (5, 4), (2, 6), (6, 6)]:
        for rank in range(min(rows, cols) + 1):
            M = planted(rng, rows, cols, rank)
            assert rank_decide(M).rank == rank
            assert rank_decide(M, TolPolicy.scaled(1e-8, 1.0)).rank == rank
            for c in (1e-9, 1e6):
                assert rank_decide(c * M).rank == rank


def test_rank_invariant_under_rotations():
    """左右乘正交阵不改变秩"""
    print("\n=== 测试秩的旋转不变性 ===")
    rng = substream(7, 0)
    for rows, cols, rank in [(4, 4, 2), (5, 3, 1), (3, 6, 3), (4, 4, 0)]:
        M = planted(rng, rows, cols, rank)
        base = rank_decide(M).rank
        for _ in range(20):
            Q1, _ = np.linalg.qr(rng.normal(size=(rows, rows)))
            Q2, _ = np.linalg.qr(rng.normal(size=(cols, cols)))
            assert rank_decide(Q1 @ M @ Q2).rank == base == rank


def test_non_finite_matrix():
    with pytest.raises(NonFiniteMatrixError):
        rank_decide(np.array([[1.0, np.nan]]))
    with pytest.raises(NonFiniteMatrixError):
        batch_rank(np.array([[[np.inf]]]))


def test_batch_rank_matches_single():
    """批量秩判定与逐个判定一致"""
    rng = substream(4, 0)
    stack = rng.normal(size=(10, 3, 2))
    stack[3, :, 1] = stack[3, :, 0]
    stack[7] = 0.0
    ranks, s = batch_rank(stack)
    assert s.shape == (10, 2)
    assert ranks.tolist() == [rank_decide(M).rank for M in stack]
    assert ranks[3] == 1 and ranks[7] == 0


def test_corank_of_jacobian():
    """浸入、Whitney 标准形原点、(x²,x²,x²) 原点"""
    print("\n=== 测试 Jacobian 余秩 ===")
    inclusion = ExprMap.linear(np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]))
    assert corank_of_jacobian(inclusion, [0.3, -0.2]) == 0
    assert corank_of_jacobian(parse("[x1^2, x1*x2, x2]", 2), [0.0, 0.0]) == 1
    assert corank_of_jacobian(parse("[x1^2, x1^2, x1^2]", 1), [0.0]) == 1
    assert corank_of_jacobian(parse("[x1^2, x1^2, x1^2]", 1), [0.5]) == 0


def test_schur_chart_two_by_two():
    """((1,0),(0,s)) 在 k=1 时的 Schur 补是 (s)"""
    print("\n=== 测试 Schur 补局部坐标 ===")
    for s in [0.5, 1e-3, 0.0]:
        chart = schur_stratum_chart(np.array([[1.0, 0.0], [0.0, s]]), 1)
        np.testing.assert_allclose(chart, [[s]])


def test_schur_chart_identity_and_equal_columns():
    """单位阵不在 S¹ 中；两列相同的 3×2 矩阵的 1×2 坐标为零"""
    chart = schur_stratum_chart(np.eye(3), 1)
    assert chart.shape == (1, 1)
    assert abs(chart[0, 0]) == pytest.approx(1.0)

    M = np.array([[1.0, 1.0], [2.0, 2.0], [-1.0, -1.0]])
    chart = schur_stratum_chart(M, 1)
    assert chart.shape == (1, 2)
    np.testing.assert_allclose(chart, np.zeros((1, 2)), atol=1e-12)


def test_schur_chart_full_corank():
    """k = v 时主元块为空，坐标就是整个矩阵的转置"""
    M = np.array([[0.1, 0.2], [0.3, 0.4]])
    assert select_pivots(M, 2).size == 0
    np.testing.assert_array_equal(schur_stratum_chart(M, 2), M.T)


def test_schur_chart_fixed_pivots_is_smooth():
    """固定主元后坐标随矩阵连续变化"""
    M = np.array([[2.0, 1.0], [1.0, 3.0]])
    pivots = select_pivots(M, 1)
    base = schur_stratum_chart(M, 1, pivots)
    moved = schur_stratum_chart(M + 1e-6, 1, pivots)
    assert np.max(np.abs(moved - base)) < 1e-5


def test_schur_chart_vanishes_at_planted_corank():
    """余秩恰为 k 的矩阵坐标为零，形状为 (n−v+k)×(ℓ−v+k)；一般矩阵坐标非零"""
    rng = substream(8, 0)
    for ell, n in [(3, 3), (4, 2), (2, 5), (5, 5)]:
        v = min(ell, n)
        for k in range(1, v + 1):
            M = planted(rng, ell, n, v - k)
            chart = schur_stratum_chart(M, k)
            assert chart.shape == (n - v + k, ell - v + k)
            np.testing.assert_allclose(chart, 0.0, atol=1e-10)
            generic = schur_stratum_chart(M + 1e-2 * rng.normal(size=(ell, n)), k)
            assert np.max(np.abs(generic)) > 1e-6


def test_select_pivots_errors():
    """k 越界或主元块奇异"""
    with pytest.raises(PivotBlockError):
        select_pivots(np.eye(2), 0)
    with pytest.raises(PivotBlockError):
        select_pivots(np.eye(2), 3)
    with pytest.raises(PivotBlockError):
        select_pivots(np.zeros((2, 2)), 1)
