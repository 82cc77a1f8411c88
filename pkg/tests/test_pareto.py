"""
Pareto 单纯性测试
~~~~~~~~~~~~~~~~

强凸多目标问题：标量化、Pareto 成员判定、权重单纯形图册、单纯性证据与线性扰动研究。
"""

from fractions import Fraction

import numpy as np
import pytest

from app.engine.errors import ArityError, NonConvergenceError, PreconditionError
from app.engine.expr import parse
from app.engine.pareto import (
    MultiObjective, WeightSimplexGrid, build_pareto_atlas, pareto_membership, perturb, perturbation_study,
    scalarize_min, simpliciality_check, strong_convexity_estimate,
)
from app.engine.registry import get_entry
from app.models.validators import Box
from app.utils.task_manager import TaskQueueManager, substream

DEGENERATE_PI = [0.4, -0.6, 0.4, -0.6]
SEPARATED_PI = [1.0, 0.0, 0.0, 1.0]


@pytest.fixture
def centroid():
    """f1 = ‖x−p‖²，f2 = ‖x−q‖²"""
    return get_entry("pareto-centroid").multiobjective()


def perturbed_bowl(a):
    return get_entry("pareto-9-1").multiobjective(a)


def test_strong_convexity_estimate():
    """x1²+x2² 的 α = 2；x⁴ 在 0 处退化；线性项不改变 α"""
    print("=== 测试强凸参数估计 ===")
    estimate = strong_convexity_estimate(perturbed_bowl(None))
    assert estimate.alpha_hat == pytest.approx(2.0, abs=1e-12)
    assert estimate.strongly_convex

    quartic = MultiObjective(parse("x1^4", 1), Box.cube(1))
    estimate = strong_convexity_estimate(quartic)
    assert estimate.alpha_hat == pytest.approx(0.0, abs=1e-12)
    assert not estimate.strongly_convex

    shifted = MultiObjective(parse("x1^2 + 3*x1 - 1", 1), Box.cube(1))
    assert strong_convexity_estimate(shifted).alpha_hat == pytest.approx(2.0, abs=1e-12)


def test_strong_convexity_invariant_under_linear_perturbation():
    """100 个随机线性扰动下 α 的估计逐位不变"""
    problem = get_entry("pareto-centroid").multiobjective()
    base = strong_convexity_estimate(problem, seed=3).alpha_hat
    rng = substream(8, 0)
    for _ in range(100):
        pi = rng.normal(size=(problem.ell, problem.m))
        assert strong_convexity_estimate(perturb(problem, pi), seed=3).alpha_hat == base


def test_multiobjective_validation():
    with pytest.raises(ArityError):
        MultiObjective(parse("x1 + a1", 1, 1), Box.cube(1))
    with pytest.raises(ArityError):
        MultiObjective(parse("x1^2", 1), Box.cube(2))


def test_scalarize_degenerate_bowl():
    """π1 = π2 = (a1,a2)·x 时任意权重的极小点都是 (−a1/2, −a2/2)"""
    print("\n=== 测试标量化 ===")
    problem = perturbed_bowl(DEGENERATE_PI)
    for w in ([1.0, 0.0], [0.3, 0.7], [0.5, 0.5]):
        np.testing.assert_allclose(scalarize_min(problem, w), [-0.2, 0.3], atol=1e-10)


def test_scalarize_weighted_centroid(centroid):
    """x*(w) = w1·p + w2·q，顶点权重给出单目标极小点"""
    p, q = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    for w1 in np.linspace(0, 1, 7):
        w = np.array([w1, 1.0 - w1])
        np.testing.assert_allclose(scalarize_min(centroid, w), w[0] * p + w[1] * q, atol=1e-10)
    np.testing.assert_allclose(scalarize_min(centroid, [1.0, 0.0]), p, atol=1e-10)


def test_scalarize_errors(centroid):
    with pytest.raises(ArityError):
        scalarize_min(centroid, [1.0])
    with pytest.raises(PreconditionError):
        scalarize_min(MultiObjective(parse("x1^4", 1), Box.cube(1)), [1.0])
    with pytest.raises(NonConvergenceError):
        scalarize_min(MultiObjective(parse("(x1 - 3)^2", 1), Box.cube(1)), [1.0])


def test_pareto_membership(centroid):
    """正权重极小点是 Pareto 点，构造出的被支配点不是"""
    print("\n=== 测试 Pareto 成员判定 ===")
    for w1 in (0.2, 0.5, 0.9):
        x = scalarize_min(centroid, [w1, 1.0 - w1])
        assert pareto_membership(centroid, x)
    assert not pareto_membership(centroid, [1.0, 1.0])
    assert not pareto_membership(centroid, [-0.5, -0.5])

    single = centroid.select([0])
    assert pareto_membership(single, [1.0, 0.0])
    assert not pareto_membership(single, [0.0, 0.0])


def test_weight_simplex_grid():
    """节点个数 C(k+ℓ−1, ℓ−1)，坐标和为 1"""
    grid = WeightSimplexGrid(2, 10)
    assert len(grid) == 11
    np.testing.assert_allclose(grid.nodes.sum(axis=1), 1.0)
    assert set(grid.faces()) == {(0,), (1,), (0, 1)}
    assert len(grid.faces()[(0, 1)]) == 9

    grid = WeightSimplexGrid(3, 2)
    assert len(grid) == 6
    assert len(grid.closed_face([0, 1])) == 3

    grid = WeightSimplexGrid(1, 5)
    np.testing.assert_array_equal(grid.nodes, [[1.0]])
    assert grid.supports == [(0,)]

    with pytest.raises(PreconditionError):
        WeightSimplexGrid(2, 0)


def test_atlas_on_segment(centroid):
    """k = 10 时 11 个节点均匀落在线段 [p, q] 上"""
    print("\n=== 测试 Pareto 图册 ===")
    atlas = build_pareto_atlas(centroid, 10, TaskQueueManager(2))
    assert len(atlas.nodes) == 11
    for node in atlas.nodes:
        w1, w2 = node.weights
        np.testing.assert_allclose(node.x_star, [w1, w2], atol=1e-10)


def _random_quadratics(rng, ell, m):
    """f_i(x) = (x−p_i)ᵀ S_i (x−p_i)，S_i 对称正定，p_i 在盒内"""
    centers = rng.uniform(-0.8, 0.8, size=(ell, m))
    components = []
    for p in centers:
        B = rng.normal(size=(m, m))
        S = B @ B.T + 0.5 * np.eye(m)
        terms = [f"{S[j, k]!r} * (x{j + 1} - ({p[j]!r})) * (x{k + 1} - ({p[k]!r}))"
                 for j in range(m) for k in range(m)]
        components.append(" + ".join(terms))
    return MultiObjective(parse("; ".join(components), m), Box.cube(m)), centers


def test_atlas_vertices_are_single_objective_minimizers():
    """顶点权重 e_i 处的 x*(w) 就是 f_i 的极小点 p_i"""
    rng = substream(23, 0)
    manager = TaskQueueManager(2)
    for _ in range(5):
        problem, centers = _random_quadratics(rng, 3, 2)
        atlas = build_pareto_atlas(problem, 4, manager)
        vertices = [node for node in atlas.nodes if len(node.support) == 1]
        assert sorted(node.support[0] for node in vertices) == [0, 1, 2]
        for node in vertices:
            np.testing.assert_allclose(node.x_star, centers[node.support[0]], atol=1e-8)


def test_atlas_single_objective():
    problem = get_entry("pareto-centroid").multiobjective().select([1])
    atlas = build_pareto_atlas(problem, 10, TaskQueueManager(1))
    assert len(atlas.nodes) == 1
    np.testing.assert_allclose(atlas.nodes[0].x_star, [0.0, 1.0], atol=1e-10)
    report = simpliciality_check(problem, atlas, manager=TaskQueueManager(1))
    assert report.verdict == "SIMPLICIAL_EVIDENCE"


def test_degenerate_bowl_fails_simpliciality():
    """π1 = π2：图册退化为单点，单射性失败"""
    print("\n=== 测试单纯性（退化扰动）===")
    problem = perturbed_bowl(DEGENERATE_PI)
    atlas = build_pareto_atlas(problem, 10, TaskQueueManager(2))
    for node in atlas.nodes:
        np.testing.assert_allclose(node.x_star, [-0.2, 0.3], atol=1e-8)
    report = simpliciality_check(problem, atlas, manager=TaskQueueManager(2))
    assert report.verdict == "FAILED"
    assert not report.injectivity["0,1"]
    assert any(w.kind == "injectivity" for w in report.witnesses)


def test_separated_bowl_is_simplicial():
    """π1 = (1,0)·x，π2 = (0,1)·x：每个节点处秩恰为 1"""
    print("\n=== 测试单纯性（分离扰动）===")
    problem = perturbed_bowl(SEPARATED_PI)
    atlas = build_pareto_atlas(problem, 10, TaskQueueManager(2))
    for node in atlas.nodes:
        np.testing.assert_allclose(node.x_star, [-node.weights[0] / 2, -node.weights[1] / 2], atol=1e-10)
    report = simpliciality_check(problem, atlas, manager=TaskQueueManager(2))
    assert report.ranks == [1] * len(atlas.nodes)
    assert report.rank_condition_ok
    assert report.verdict == "SIMPLICIAL_EVIDENCE"
    assert report.non_singleton_faces == []


@pytest.mark.slow
def test_bowl_at_full_resolution():
    """k = 50 的权重网格"""
    manager = TaskQueueManager(4)
    problem = perturbed_bowl(DEGENERATE_PI)
    report = simpliciality_check(problem, build_pareto_atlas(problem, 50, manager), manager=manager)
    assert report.verdict == "FAILED"
    problem = perturbed_bowl(SEPARATED_PI)
    report = simpliciality_check(problem, build_pareto_atlas(problem, 50, manager), manager=manager)
    assert report.verdict == "SIMPLICIAL_EVIDENCE"
    assert set(report.ranks) == {1}


def test_centroid_is_simplicial(centroid):
    atlas = build_pareto_atlas(centroid, 8, TaskQueueManager(2))
    assert simpliciality_check(centroid, atlas, manager=TaskQueueManager(2)).verdict == "SIMPLICIAL_EVIDENCE"


def test_perturbation_study():
    """随机扰动没有坏样本；定向 π1 = π2 复现失败；阈值 s > 2"""
    print("\n=== 测试扰动研究 ===")
    problem = perturbed_bowl(None)
    targeted = [[[0.4, -0.6], [0.4, -0.6]]]
    report = perturbation_study(problem, 1.0, trials=6, seed=0, budget=16, resolution=3,
                                targeted=targeted, manager=TaskQueueManager(2))
    assert report.bad_count == 0 and report.bad_fraction == 0.0
    assert report.threshold.value == Fraction(2) and report.threshold.strict
    assert report.dimension_estimate is None
    assert report.targeted[0].verdict == "FAILED"


@pytest.mark.slow
def test_perturbation_study_acceptance_budget():
    """1000 个随机扰动全部是好扰动，定向 π1 = π2 的图册塌缩到 (−0.2, 0.3)"""
    problem = perturbed_bowl(None)
    targeted = [[[0.4, -0.6], [0.4, -0.6]]]
    report = perturbation_study(problem, 1.0, trials=1000, seed=0, budget=8, resolution=2,
                                targeted=targeted, manager=TaskQueueManager(4))
    assert report.bad_count == 0
    assert report.targeted[0].verdict == "FAILED"
    atlas = build_pareto_atlas(perturb(problem, np.array(targeted[0])), 2, TaskQueueManager(1))
    for node in atlas.nodes:
        np.testing.assert_allclose(node.x_star, [-0.2, 0.3], atol=1e-8)


def test_perturbation_study_single_objective():
    """ℓ = 1 时坏集合为空"""
    problem = perturbed_bowl(None).select([0])
    report = perturbation_study(problem, 1.0, trials=20, seed=1, manager=TaskQueueManager(2))
    assert report.bad_count == 0
    assert report.threshold.value == Fraction(0)


def test_perturbation_study_is_deterministic_across_workers():
    problem = perturbed_bowl(None)
    kwargs = dict(perturbation_scale=0.5, trials=4, seed=11, budget=8, resolution=2)
    serial = perturbation_study(problem, manager=TaskQueueManager(1), **kwargs)
    parallel = perturbation_study(problem, manager=TaskQueueManager(8), **kwargs)
    assert serial == parallel
