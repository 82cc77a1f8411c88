"""
横截缺陷引擎测试
~~~~~~~~~~~~~~~

两个参数族回归样例：F(x,a) = (0, a1²−a2²) 与 F(x,a) = (x+a1, x+a2)。
"""

import time

import numpy as np
import pytest

from app.engine.errors import ArityError, InvalidSubmanifoldError
from app.engine.expr import ExprMap, Wrt, parse
from app.engine.registry import get_entry
from app.engine.transversality import (
    FamilyProblem, LevelSetSubmanifold, classify_family_batch, classify_family_point, defect_at,
    defect_family_sup, delta_star, find_nontransverse_witness, project_to_sigma, sample_sigma,
)
from app.models.reports import Classification
from app.models.validators import Box
from app.utils.task_manager import TaskQueueManager, substream


def test_defect_at_examples():
    """截面缺陷：退化族截面、恒等映射、对角线"""
    print("=== 测试单点缺陷 ===")
    P = get_entry("ex-2-2").family()
    assert defect_at(P.F, P.Z, [0.4], [1.0, 1.0], Wrt.X) == 2
    assert defect_at(P.F, P.Z, [0.4], [1.0, 0.0], Wrt.X) == 0

    identity = ExprMap.identity(3)
    assert defect_at(identity, LevelSetSubmanifold.point(np.zeros(3)), np.zeros(3)) == 0

    diagonal = LevelSetSubmanifold.from_source("[x2 - x1]", 2)
    f = parse("[x1, x1]", 1)
    for x in (-1.0, 0.0, 2.5):
        assert defect_at(f, diagonal, [x]) == 1
    # dh·df = −1 − 1，穿过对角线
    assert defect_at(parse("[x1, -x1]", 1), diagonal, [0.0]) == 0


def test_defect_is_scale_invariant():
    """f 乘以常数 c 不改变 δ，c 很小时映射仍是浸没"""
    assert defect_at(parse("1e-10 * x1", 1), LevelSetSubmanifold.point([0.0]), [0.0]) == 0
    origin = LevelSetSubmanifold.point([0.0, 0.0])
    for c in ("1e-12", "1e-6", "1", "1e6"):
        assert defect_at(parse(f"[{c} * x1, {c} * x2]", 2), origin, [0.0, 0.0]) == 0
        assert defect_at(parse(f"[{c} * x1, {c} * x1]", 1), origin, [0.0]) == 1

    P = FamilyProblem(parse("[1e-9 * (x1 + a1)]", 1, 1), LevelSetSubmanifold.point([0.0]), Box.cube(1), Box.cube(1))
    report = classify_family_point(P, [0.0], [0.0])
    assert (report.delta_section, report.delta_family) == (0, 0)
    assert report.classification == Classification.TRANSVERSE
    _, _, labels = classify_family_batch(P, [[0.5]], [[-0.5]])
    assert labels[0] == Classification.TRANSVERSE.value
    assert defect_family_sup(P).sup == 0


def test_classify_examples(ex22):
    """原点处在 W 中，a=(1,1) 在 W̃ 中，a=(1,0) 不在 Z 上"""
    print("\n=== 测试 W / W̃ 分类 ===")
    report = classify_family_point(ex22, [0.0], [0.0, 0.0])
    assert (report.delta_section, report.delta_family) == (2, 2)
    assert report.classification == Classification.IN_W

    report = classify_family_point(ex22, [0.3], [1.0, 1.0])
    assert (report.delta_section, report.delta_family) == (2, 1)
    assert report.classification == Classification.IN_W_TILDE

    report = classify_family_point(ex22, [0.3], [1.0, 0.0])
    assert report.delta_section == 0
    assert report.classification == Classification.NOT_ON_Z
    assert report.residual == pytest.approx(1.0)


def test_case_table_on_grid(ex22):
    """201×201 参数网格上的分类与解析表格逐点一致"""
    print("\n=== 测试 201×201 网格分类 ===")
    axis = np.linspace(-1.0, 1.0, 201)
    A = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 2)
    X = np.zeros((len(A), 1))
    ds, df, labels = classify_family_batch(ex22, X, A)

    on_sigma = np.isclose(np.abs(A[:, 0]), np.abs(A[:, 1]), rtol=0, atol=1e-12)
    origin = np.all(np.abs(A) < 1e-12, axis=1)
    expected = np.where(origin, 2, np.where(on_sigma, 1, 0))
    assert np.array_equal(df, expected)
    assert np.array_equal(ds, np.where(on_sigma, 2, 0))
    assert set(np.flatnonzero(labels == Classification.IN_W.value)) == set(np.flatnonzero(origin))
    assert np.all(labels[on_sigma & ~origin] == Classification.IN_W_TILDE.value)
    assert np.all(labels[~on_sigma] == Classification.NOT_ON_Z.value)


def test_section_defect_dominates_family_defect(ex22, ex23):
    """1000 个族上的点满足 δ(F_a,x,Z) ≥ δ(F,(x,a),Z)"""
    rng = substream(11, 0)
    t = rng.uniform(-1, 1, 500)
    sign = rng.choice([-1.0, 1.0], 500)
    A22 = np.stack([t, sign * t], axis=1)
    ds, df, _ = classify_family_batch(ex22, rng.uniform(-1, 1, (500, 1)), A22)
    assert np.all(ds >= df)
    assert np.all(ds == 2)

    A23 = np.stack([t, t], axis=1)
    ds, df, labels = classify_family_batch(ex23, -t.reshape(-1, 1), A23)
    assert np.all(ds >= df)
    assert np.all(ds == 1) and np.all(df == 0)
    assert np.all(labels == Classification.IN_W_TILDE.value)


def test_bad_set_is_union_of_projections(ex22):
    """a ∈ Σ 当且仅当存在 x 使 (x,a) ∈ W ∪ W̃"""
    X = np.linspace(-1, 1, 9).reshape(-1, 1)
    for a, in_sigma in [((0.5, -0.5), True), ((0.0, 0.0), True), ((0.5, 0.2), False)]:
        _, _, labels = classify_family_batch(ex22, X, np.asarray(a))
        hit = np.isin(labels, [Classification.IN_W.value, Classification.IN_W_TILDE.value])
        assert bool(np.any(hit)) == in_sigma


def test_delta_star_examples(ex22, ex23):
    """δ* = n − c + δ(F,Z)"""
    print("\n=== 测试 δ* ===")
    assert delta_star(ex22, 2) == 1
    assert delta_star(ex23, 0) == -1
    assert delta_star(get_entry("ex-2-3-l3").family(), 0) == -2
    assert delta_star(get_entry("ex-2-4-negative").family(), 0) == -2


def test_defect_family_sup(ex22, ex23):
    """δ(F,Z) 的采样下界"""
    print("\n=== 测试 δ(F,Z) ===")
    report = defect_family_sup(ex22)
    assert report.sup == 2 and report.intersection_found
    assert report.argmax_a == [0.0, 0.0]
    assert report.delta_star == 1
    assert ex22.p + report.delta_star >= 0

    report = defect_family_sup(ex23)
    assert report.sup == 0 and report.intersection_found
    assert report.delta_star == -1
    assert ex23.p + report.delta_star >= 0

    assert defect_family_sup(get_entry("transverse-scalar").family()).sup == 0


def test_defect_family_sup_without_intersection():
    """F(U) ∩ Z 为空时 δ(F,Z) = 0，并且处处 NOT_ON_Z"""
    P = get_entry("ex-2-4-negative").family()
    report = defect_family_sup(P, budget=32, seed=1)
    assert report.sup == 0 and not report.intersection_found
    assert report.argmax_x is None
    assert report.delta_star == -2
    report = classify_family_point(P, [0.2], [0.5])
    assert report.classification == Classification.NOT_ON_Z


def test_find_witness(ex22, ex23):
    """对角线上的参数有见证 x = −t，对角线外没有"""
    print("\n=== 测试见证搜索 ===")
    for t in (-0.7, 0.3, 0.0):
        x = find_nontransverse_witness(ex23, [t, t])
        assert x is not None
        assert x[0] == pytest.approx(-t, abs=1e-8)
    assert find_nontransverse_witness(ex23, [0.0, 0.5]) is None

    x = find_nontransverse_witness(ex22, [1.0, 1.0])
    assert x is not None and ex22.x_box.contains(x)


def test_project_to_sigma(ex23):
    """从对角线外出发投影到 a1 = a2"""
    result = project_to_sigma(ex23, [0.1], [0.2, 0.4])
    assert result is not None
    x, a = result
    assert abs(a[0] - a[1]) < 1e-8
    assert x[0] == pytest.approx(-a[0], abs=1e-8)


def test_sample_sigma_lies_on_diagonal(ex23):
    """Σ 采样点都落在 a1 = a2 附近"""
    print("\n=== 测试 Σ 采样 ===")
    sample = sample_sigma(ex23, budget=200, seed=5, manager=TaskQueueManager(2))
    assert len(sample.points) > 0
    points = np.asarray(sample.points)
    assert np.all(np.abs(points[:, 0] - points[:, 1]) < 1e-3)
    assert np.all(ex23.a_box.contains(points, 1e-12))
    np.testing.assert_allclose(np.asarray(sample.witnesses)[:, 0], -points[:, 0], atol=1e-6)


def test_sample_sigma_pair_of_lines(ex22):
    sample = sample_sigma(ex22, budget=100, seed=2, manager=TaskQueueManager(2))
    points = np.asarray(sample.points)
    assert len(points) > 0
    assert np.all(np.abs(np.abs(points[:, 0]) - np.abs(points[:, 1])) < 1e-3)


def test_sample_sigma_transverse_family_is_empty():
    P = get_entry("transverse-scalar").family()
    sample = sample_sigma(P, budget=50, seed=0, manager=TaskQueueManager(1))
    assert sample.points == [] and sample.witnesses == []


def test_sample_sigma_is_deterministic_across_workers(ex23):
    """相同种子在 1 个与 8 个工作线程下结果相同"""
    serial = sample_sigma(ex23, budget=40, seed=9, manager=TaskQueueManager(1))
    parallel = sample_sigma(ex23, budget=40, seed=9, manager=TaskQueueManager(8))
    assert serial.model_dump() == parallel.model_dump()


@pytest.mark.slow
def test_sample_sigma_acceptance_budget(ex23):
    """10⁴ 个均匀参数样本在 30 秒内完成，所有点都落在对角线上"""
    start = time.perf_counter()
    sample = sample_sigma(ex23, budget=10000, seed=0, manager=TaskQueueManager(4))
    assert time.perf_counter() - start < 30.0
    points = np.asarray(sample.points)
    assert len(points) > 0
    assert np.all(np.abs(points[:, 0] - points[:, 1]) < 1e-3)


def test_invalid_submanifold():
    """h 在 Z 上不是浸没时报错"""
    F = parse("[x1 + a1]", 1, 1)
    Z = LevelSetSubmanifold.from_source("[x1^2]", 1)
    P = FamilyProblem(F, Z, Box.cube(1), Box.cube(1))
    with pytest.raises(InvalidSubmanifoldError):
        classify_family_point(P, [0.0], [0.0])
    with pytest.raises(InvalidSubmanifoldError):
        LevelSetSubmanifold.from_source("[x1, x1]", 1)


def test_family_arity_checks():
    F = parse("[x1 + a1, x1 + a2]", 1, 2)
    with pytest.raises(ArityError):
        FamilyProblem(F, LevelSetSubmanifold.point([0.0]), Box.cube(1), Box.cube(2))
    with pytest.raises(ArityError):
        FamilyProblem(F, LevelSetSubmanifold.point([0.0, 0.0]), Box.cube(1), Box.cube(1))
