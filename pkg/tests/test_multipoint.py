"""
多点横截性测试
~~~~~~~~~~~~~
"""

import numpy as np
import pytest

from app.engine.errors import InvalidRegimeError, NotInjectiveError, PreconditionError
from app.engine.expr import ExprMap, parse
from app.engine.multipoint import (
    DiagonalSpec, MultiPointTuple, StackedMap, diagonal_defect, double_point_search, estimate_df,
    injectivity_check, multipoint_eval, normal_crossings_check,
)
from app.engine.registry import get_entry
from app.models.validators import Box
from app.utils.task_manager import TaskQueueManager, substream


def pair(*points, separation=1e-6):
    return MultiPointTuple(np.asarray(points, dtype=float).reshape(len(points), -1), separation)


def test_multipoint_eval():
    print("=== 测试多点求值 ===")
    np.testing.assert_array_equal(multipoint_eval(ExprMap.identity(1), pair(0.0, 1.0)), [0.0, 1.0])
    np.testing.assert_array_equal(multipoint_eval(parse("x1^2", 1), pair(-1.0, 1.0)), [1.0, 1.0])
    values = multipoint_eval(parse("3", 1), pair(0.0, 0.5, 0.9))
    assert np.all(values == 3.0)


def test_tuple_preconditions():
    with pytest.raises(PreconditionError):
        pair(0.0, 1e-9, separation=1e-6)
    with pytest.raises(PreconditionError):
        MultiPointTuple(np.array([[0.0]]), 1e-6)


def test_stacked_jacobian_is_block_diagonal():
    f = parse("[x1^2, x1*x2]", 2)
    J = StackedMap(f, 2).jacobian([1.0, 2.0, -1.0, 0.5])
    np.testing.assert_array_equal(J[:2, :2], f.jacobian([1.0, 2.0]))
    np.testing.assert_array_equal(J[2:, 2:], f.jacobian([-1.0, 0.5]))
    np.testing.assert_array_equal(J[:2, 2:], np.zeros((2, 2)))


def test_diagonal_spec():
    spec = DiagonalSpec(ell=2, d=3)
    assert spec.codim == 4
    h = spec.defining_map()
    np.testing.assert_array_equal(h.eval([1.0, 2.0, 1.0, 2.0, 1.0, 2.0]), np.zeros(4))
    with pytest.raises(InvalidRegimeError):
        DiagonalSpec(ell=2, d=1).codim


def test_diagonal_defect_examples():
    """x² 的二重点横截，常值映射与 (x², x²) 不横截"""
    print("\n=== 测试对角线缺陷 ===")
    assert diagonal_defect(parse("x1^2", 1), pair(-1.0, 1.0)) == 0
    assert diagonal_defect(parse("1", 1), pair(0.0, 1.0)) == 1
    assert diagonal_defect(parse("[x1^2, x1^2]", 1), pair(-1.0, 1.0)) == 1
    assert diagonal_defect(parse("x1", 1), pair(0.0, 1.0)) == 0


def test_double_point_search():
    """x² 在 [−1,1] 上的二重点是 (−t, t)"""
    print("\n=== 测试二重点搜索 ===")
    witnesses = double_point_search(parse("x1^2", 1), Box.cube(1), 32, 0, manager=TaskQueueManager(2))
    assert witnesses
    for w in witnesses:
        (q1,), (q2,) = w.points
        assert q1 == pytest.approx(-q2, abs=1e-7)
        assert w.image_gap <= 1e-9


def test_injectivity_check():
    manager = TaskQueueManager(2)
    report = injectivity_check(get_entry("parabola").mapping(), Box.cube(1), 64, 0, manager=manager)
    assert report.verdict == "INJECTIVE" and report.double_points == []

    entry = get_entry("nodal-cubic")
    report = injectivity_check(entry.mapping(), entry.x_box, 64, 0, manager=manager)
    assert report.verdict == "NOT_INJECTIVE"
    assert any(np.allclose(w.points, [[-1.0], [1.0]], atol=1e-7) for w in report.double_points)

    linear = ExprMap.linear(np.array([[1.0], [2.0]]))
    assert injectivity_check(linear, Box.cube(1), 32, 0, manager=manager).verdict == "INJECTIVE"

    entry = get_entry("immersion-sigma-b")
    report = injectivity_check(entry.mapping(), entry.x_box, 64, 0, [0.1, 0.5, -0.3], manager)
    assert report.verdict == "INJECTIVE"


def test_injectivity_is_deterministic_across_workers():
    entry = get_entry("nodal-cubic")
    serial = injectivity_check(entry.mapping(), entry.x_box, 24, 7, manager=TaskQueueManager(1))
    parallel = injectivity_check(entry.mapping(), entry.x_box, 24, 7, manager=TaskQueueManager(8))
    assert serial == parallel


def test_double_point_search_finds_planted_pair():
    """(x²−c², x(x²−c²)) 平移 s 后唯一的二重点是 (s−c, s+c)"""
    rng = substream(19, 0)
    manager = TaskQueueManager(2)
    for _ in range(5):
        c = rng.uniform(0.2, 0.9)
        s = rng.uniform(-0.5, 0.5)
        base = parse(f"[x1^2 - {c * c!r}, x1*(x1^2 - {c * c!r})]", 1).compose_affine(np.array([[1.0]]),
                                                                                  np.array([-s]))
        witnesses = double_point_search(base, Box.cube(1, -2.0, 2.0), 64, 0, manager=manager)
        assert any(np.allclose(sorted(np.ravel(w.points)), [s - c, s + c], atol=1e-6) for w in witnesses)


def test_normal_crossings():
    """x² 只有横截二重点；结点三次曲线在结点处横截；(x², x²) 的二重点不横截"""
    print("\n=== 测试正规交叉 ===")
    manager = TaskQueueManager(2)
    report = normal_crossings_check(parse("x1^2", 1), Box.cube(1), 3, 32, 0, manager=manager)
    assert report.verdict == "NORMAL_CROSSINGS"
    assert [level.d for level in report.levels] == [2, 3]
    assert report.levels[0].tuples and not report.levels[1].tuples

    report = normal_crossings_check(get_entry("parabola").mapping(), Box.cube(1), 3, 16, 0, manager=manager)
    assert report.verdict == "NORMAL_CROSSINGS"
    assert all(not level.tuples for level in report.levels)

    entry = get_entry("nodal-cubic")
    report = normal_crossings_check(entry.mapping(), entry.x_box, 2, 64, 0, manager=manager)
    assert report.verdict == "NORMAL_CROSSINGS"
    assert all(w.defect == 0 for w in report.levels[0].tuples)

    report = normal_crossings_check(parse("[x1^2, x1^2]", 1), Box.cube(1), 2, 32, 0, manager=manager)
    assert report.verdict == "NOT_NORMAL_CROSSINGS"

    with pytest.raises(InvalidRegimeError):
        normal_crossings_check(parse("x1^2", 1), Box.cube(1), 1, 8, 0)
    with pytest.raises(InvalidRegimeError):
        normal_crossings_check(parse("x1^2", 1), Box.cube(1), 4, 8, 0)


@pytest.mark.parametrize("name,expected", [("circle-r3", 3), ("twisted-cubic", 4), ("line-r2", 2)])
def test_estimate_df(name, expected):
    """圆周 d_f = 3，扭三次曲线 d_f = m+1 = 4，直线 d_f = 2"""
    entry = get_entry(name)
    estimate = estimate_df(entry.mapping(), entry.x_box, 2000, 0, manager=TaskQueueManager(2))
    assert estimate.d_hat == expected
    assert estimate.tested[-1] == expected + 1
    assert estimate.violating_tuple is not None


@pytest.mark.slow
def test_estimate_df_acceptance_budget():
    for name, expected in [("circle-r3", 3), ("twisted-cubic", 4)]:
        entry = get_entry(name)
        assert estimate_df(entry.mapping(), entry.x_box, 10000, 1, manager=TaskQueueManager(4)).d_hat == expected


def test_estimate_df_requires_injective_map():
    with pytest.raises(NotInjectiveError):
        estimate_df(parse("x1^2", 1), Box.cube(1), 100, 0, manager=TaskQueueManager(1))
