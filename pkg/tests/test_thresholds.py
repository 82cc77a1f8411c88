"""
阈值计算器测试
~~~~~~~~~~~~~

所有结果都是精确有理数，按定理分支逐一核对。
"""

from fractions import Fraction

import pytest
from pydantic import ValidationError

from app.engine.errors import InvalidRegimeError
from app.engine.strata import stratum_codim
from app.engine.multipoint import diagonal_codim
from app.engine.thresholds import genericity_threshold
from app.models.scenario import ThresholdQuery


def bound(**kwargs):
    return genericity_threshold(ThresholdQuery(**kwargs))


def test_morse_threshold():
    """Morse 函数：s ≥ m−1+1/(r−1)"""
    print("=== 测试 Morse 阈值 ===")
    result = bound(kind="morse", m=1, r=2)
    assert result.value == Fraction(1) and not result.strict
    assert result.text == "s ≥ 1"

    result = bound(kind="morse", m=1, r=3)
    assert result.value == Fraction(1, 2)

    result = bound(kind="morse", m=3, r=None)
    assert result.value == Fraction(2) and result.strict

    with pytest.raises(InvalidRegimeError):
        bound(kind="morse", m=1, r=1)


def test_jet_threshold():
    """dim X − codim S^k = 0 时 jet 阈值为 mℓ"""
    print("\n=== 测试 jet 阈值 ===")
    result = bound(kind="jet", m=1, ell=1, n=1, k=1, r=2)
    assert result.value == Fraction(1) and not result.strict

    result = bound(kind="jet", m=3, ell=1, n=1, k=1, r=2)
    assert result.value == Fraction(3)

    # n = ℓ = m = 2：dim X − codim S¹ = 1，界为 mℓ − 1 + 2/(r−1)
    result = bound(kind="jet", m=2, ell=2, n=2, k=1, r=3)
    assert result.value == Fraction(4)

    # 余维数超过 n 的层走负分支
    result = bound(kind="jet", m=2, ell=2, n=2, k=2, r=2)
    assert result.value == Fraction(2) and result.strict

    with pytest.raises(InvalidRegimeError):
        bound(kind="jet", m=1, ell=1, n=1, k=1, r=1)


def test_pareto_threshold():
    """s > mℓ − (m − 2ℓ + 4)"""
    print("\n=== 测试 Pareto 阈值 ===")
    result = bound(kind="pareto", m=2, ell=2)
    assert result.value == Fraction(2) and result.strict
    assert result.text == "s > 2"
    assert bound(kind="pareto", m=4, ell=2).value == Fraction(4)

    with pytest.raises(InvalidRegimeError):
        bound(kind="pareto", m=1, ell=2)


def test_main_theorem_branches():
    """主定理三种分支"""
    print("\n=== 测试主定理阈值 ===")
    result = bound(kind="main2", dim_a=2, delta_star=-1)
    assert result.value == Fraction(1) and result.strict

    result = bound(kind="main1", dim_a=2, delta_star=5, r=None)
    assert result.value == Fraction(1) and result.strict

    result = bound(kind="main1", dim_a=2, delta_star=1, r=4)
    assert result.value == Fraction(3, 2) and not result.strict
    assert not result.trivial

    result = bound(kind="main1", dim_a=2, delta_star=3, r=1)
    assert result.value == Fraction(5)
    assert result.trivial

    result = bound(kind="main1", dim_a=1, delta_star=-2, r=3)
    assert result.value == Fraction(0) and not result.strict

    with pytest.raises(InvalidRegimeError):
        bound(kind="main2", dim_a=2, delta_star=0)


def test_derived_thresholds():
    """Whitney 伞、浸入、单射与嵌入"""
    assert bound(kind="whitney", m=1, n=2).value == Fraction(2)
    assert bound(kind="immersion", m=1, ell=3, n=1, r=2).value == Fraction(1)
    injective = bound(kind="injective", m=2, ell=3, n=1)
    assert injective.value == Fraction(5) and injective.strict
    assert bound(kind="embedding", m=2, ell=3, n=1).value == injective.value

    with pytest.raises(InvalidRegimeError):
        bound(kind="immersion", m=1, ell=1, n=1, r=2)
    with pytest.raises(InvalidRegimeError):
        bound(kind="injective", m=1, ell=2, n=1)
    with pytest.raises(InvalidRegimeError):
        bound(kind="injective_immersion", m=1, ell=3, n=1, r=1)


def test_multipoint_and_normal_crossings():
    """多点横截与正规交叉"""
    # n·d − ℓ(d−1) = 2 − 3 < 0
    result = bound(kind="multipoint", m=1, ell=3, n=1, d=2, r=2)
    assert result.value == Fraction(2) and result.strict

    result = bound(kind="normal_crossings", m=2, ell=2, n=1, d_f=2, r=2)
    assert result.value == Fraction(3) + Fraction(1, 2)
    assert bound(kind="normal_crossings", m=2, ell=2, n=1, d_f=2).value == Fraction(3)
    with pytest.raises(InvalidRegimeError):
        bound(kind="normal_crossings", m=1, ell=2, n=1, d_f=3, r=2)


def test_corank_threshold():
    """满足 codim S^k0 ≤ n 的最大余秩 k0"""
    result = bound(kind="corank", m=2, ell=3, n=2, r=2)
    assert result.branch == "corank:k0=1"
    assert result.value == Fraction(6 + 2 - stratum_codim(2, 3, 2))
    assert result.strict


def test_codimension_bookkeeping():
    """S^k 与 Δ_d 的余维数"""
    assert stratum_codim(5, 1, 1) == 5
    for n in (2, 3, 4):
        for k in (1, 2):
            assert stratum_codim(n, 2 * n - 1, k) == k * (n - 1 + k)
    assert stratum_codim(2, 3, 1) == 2
    assert diagonal_codim(3, 2) == 3
    assert diagonal_codim(2, 4) == 6


def test_query_validation():
    """缺少必需字段的查询在模型层被拒绝"""
    with pytest.raises(ValidationError):
        ThresholdQuery(kind="pareto", m=2)
    with pytest.raises(ValidationError):
        ThresholdQuery(kind="morse", m=1, r=0)


@pytest.mark.parametrize("query", [
    dict(kind="main1", dim_a=3, delta_star=0),
    dict(kind="main1", dim_a=3, delta_star=4),
    dict(kind="morse", m=3),
    dict(kind="jet", m=2, ell=2, n=2, k=1),
    dict(kind="jet", m=2, ell=2, n=2, k=2),
    dict(kind="multipoint", m=2, ell=2, n=1, d=2),
    dict(kind="normal_crossings", m=2, ell=2, n=2, d_f=2),
    dict(kind="immersion", m=1, ell=4, n=2),
    dict(kind="whitney", m=2, n=2),
])
def test_threshold_monotone_in_r(query):
    """光滑阶 r 越高阈值越低，C^∞ 的阈值不超过任何有限 r"""
    values = [bound(r=r, **query).value for r in range(2, 13)]
    assert all(later <= earlier for earlier, later in zip(values, values[1:]))
    assert bound(r=None, **query).value <= values[-1]
