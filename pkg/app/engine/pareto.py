"""
多目标 Pareto 问题
~~~~~~~~~~~~~~~~~

强凸多目标问题 f = (f_1,…,f_ℓ): R^m → R^ℓ 的加权和标量化图册 Φ、Pareto 成员判定、
基于 rank df = ℓ−1 的单纯性检查，以及线性扰动 f+π 的通有性研究。
"""

from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.spatial.distance import pdist, squareform

from ..models.reports import (AtlasNode, ConvexityEstimate, ParetoAtlas, PerturbationStudyReport,
                              SimplicialityReport, SimplicialityWitness, TargetedResult)
from ..models.scenario import ThresholdQuery
from ..models.validators import Box, TolPolicy
from ..utils.logger import get_engine_logger
from ..utils.task_manager import TaskQueueManager, get_task_manager, substream
from .dimension import MIN_POINTS, box_count
from .errors import ArityError, EvaluationError, NonConvergenceError, PreconditionError
from .expr import ExprMap, Wrt
from .linalg import SEARCH_POLICY, rank_decide
from .strata import corank_survey
from .thresholds import genericity_threshold

logger = get_engine_logger("pareto")

NEWTON_MAX_ITER = 200
NEWTON_GRAD_TOL = 1e-10
ARMIJO = 1e-4
DOMINANCE_GAIN = 1e-7
CONSTRAINT_SLACK = 1e-9
SEPARATION = 1e-8


@dataclass(frozen=True)
class MultiObjective:
    """
    多目标问题

    f 为 R^m → R^ℓ 的无参数映射（每个输出分量一个目标），box 为定义域盒，
    alpha_hat 为强凸参数估计（未估计时为 None）。
    """
    f: ExprMap
    box: Box
    alpha_hat: Optional[float] = None

    def __post_init__(self):
        if self.f.arity_a:
            raise ArityError("多目标问题不接受参数，请先绑定参数")
        if self.box.dim != self.f.arity_x:
            raise ArityError(f"定义域盒维数 {self.box.dim} 与 m={self.f.arity_x} 不一致")

    @property
    def ell(self) -> int:
        return self.f.out_dim

    @property
    def m(self) -> int:
        return self.f.arity_x

    def select(self, indices: Sequence[int]) -> "MultiObjective":
        """子问题 f_I"""
        return replace(self, f=self.f.select(list(indices)))


def perturb(problem: MultiObjective, pi) -> MultiObjective:
    """f+π，线性扰动不改变 Hessian，强凸参数原样保留"""
    return replace(problem, f=problem.f.plus_linear(np.asarray(pi, dtype=float)))


def strong_convexity_estimate(problem: MultiObjective, samples: int = 256, seed: int = 0) -> ConvexityEstimate:
    """
    强凸参数估计：样本点（每轴 5 点的网格加均匀随机点）上各分量 Hessian 最小特征值的最小值
    """
    box = problem.box
    X = np.vstack([box.grid(5), box.sample(substream(seed, 0), samples)])
    H = problem.f.hessians(X)
    alpha_hat = float(np.min(np.linalg.eigvalsh(H)))
    return ConvexityEstimate(alpha_hat=alpha_hat, strongly_convex=alpha_hat > 0, samples=len(X))


def _alpha(problem: MultiObjective) -> float:
    alpha = problem.alpha_hat
    if alpha is None:
        alpha = strong_convexity_estimate(problem).alpha_hat
    if alpha <= 0:
        raise PreconditionError("标量化要求强凸（alpha_hat > 0）", {"alpha_hat": alpha})
    return alpha


def scalarize_min(problem: MultiObjective, w, x0=None) -> np.ndarray:
    """
    求 Σ w_i f_i 的唯一极小点

    从盒中心（或 x0）出发做阻尼 Newton，Armijo 回溯因子 0.5，最多 200 次迭代，
    梯度范数 ≤ 1e-10 时收敛。

    Raises:
        PreconditionError: alpha_hat ≤ 0
        NonConvergenceError: 迭代预算用尽、线搜索失败或极小点落在盒外
    """
    _alpha(problem)
    w = np.asarray(w, dtype=float)
    if w.shape != (problem.ell,):
        raise ArityError(f"权重长度应为 {problem.ell}，实际形状为 {w.shape}")
    f = problem.f
    x = problem.box.center if x0 is None else np.asarray(x0, dtype=float).copy()

    def scalarized(point: np.ndarray) -> float:
        return float(w @ f.eval(point))

    for iteration in range(NEWTON_MAX_ITER + 1):
        values, J, H = f.jet(x, None, Wrt.X, second_order=True)
        g = w @ J
        g_norm = float(np.linalg.norm(g))
        if g_norm <= NEWTON_GRAD_TOL:
            break
        if iteration == NEWTON_MAX_ITER:
            raise NonConvergenceError("标量化 Newton 迭代未收敛",
                                      {"weights": w.tolist(), "gradient_norm": g_norm})
        step = np.linalg.solve(np.tensordot(w, H, axes=1), -g)
        phi, slope = float(w @ values), float(g @ step)
        t = 1.0
        for _ in range(60):
            trial = x + t * step
            if (scalarized(trial) <= phi + ARMIJO * t * slope
                    or np.linalg.norm(w @ f.jacobian(trial)) < g_norm):
                break
            t *= 0.5
        else:
            raise NonConvergenceError("标量化线搜索失败", {"weights": w.tolist(), "x": x.tolist()})
        x = trial
    if not problem.box.contains(x, 1e-12):
        raise NonConvergenceError("标量化极小点落在定义域盒外", {"weights": w.tolist(), "x": x.tolist()})
    return x


def pareto_membership(problem: MultiObjective, x, probe_budget: int = 16, seed: int = 0) -> bool:
    """
    数值 Pareto 成员判定（单侧）

    对每个目标 j，在 f_i(y) ≤ f_i(x)（i ≠ j）约束下从 x 出发局部下降 f_j，
    并附加随机探针；找到支配点即返回 False。
    """
    f, box = problem.f, problem.box
    x = np.asarray(x, dtype=float)
    fx = f.eval(x)
    bounds = list(zip(box.lo, box.hi))

    for j in range(problem.ell):
        others = [i for i in range(problem.ell) if i != j]
        constraints = [{
            "type": "ineq",
            "fun": lambda y, others=others: fx[others] - f.eval(y)[others],
            "jac": lambda y, others=others: -f.jacobian(y)[others],
        }] if others else []
        try:
            result = minimize(lambda y: f.eval(y)[j], x, jac=lambda y: f.jacobian(y)[j],
                              method="SLSQP", bounds=bounds, constraints=constraints,
                              options={"maxiter": 200, "ftol": 1e-14})
        except (EvaluationError, ValueError, np.linalg.LinAlgError):
            continue
        y = np.clip(result.x, box.lo, box.hi)
        fy = f.eval(y)
        violation = float(np.max(fy[others] - fx[others], initial=0.0))
        if fy[j] < fx[j] - DOMINANCE_GAIN and violation <= CONSTRAINT_SLACK:
            logger.debug_debug("找到支配点", extra_fields={"objective": j, "gain": float(fx[j] - fy[j])})
            return False

    if probe_budget > 0:
        rng = substream(seed, 0)
        radius = 1e-3 * box.diameter
        probes = np.vstack([
            box.sample(rng, probe_budget),
            np.clip(x + radius * rng.standard_normal((probe_budget, problem.m)), box.lo, box.hi),
        ])
        fp = f.eval(probes)
        dominated = np.all(fp <= fx, axis=1) & np.any(fp < fx - DOMINANCE_GAIN, axis=1)
        if np.any(dominated):
            return False
    return True


@dataclass
class WeightSimplexGrid:
    """Δ^{ℓ−1} 上坐标取 {0, 1/k, …, 1} 的全部节点及其支撑"""
    ell: int
    resolution: int
    nodes: np.ndarray = field(init=False)
    supports: list[tuple[int, ...]] = field(init=False)

    def __post_init__(self):
        if self.ell < 1 or self.resolution < 1:
            raise PreconditionError("ℓ 与分辨率 k 必须为正")
        k, ell = self.resolution, self.ell
        counts = []
        for bars in combinations(range(k + ell - 1), ell - 1):
            edges = (-1,) + bars + (k + ell - 1,)
            counts.append([edges[i + 1] - edges[i] - 1 for i in range(ell)])
        counts = np.array(counts, dtype=int)
        self.nodes = counts / k
        self.supports = [tuple(int(i) for i in np.flatnonzero(c)) for c in counts]

    def __len__(self) -> int:
        return len(self.nodes)

    def faces(self) -> dict[tuple[int, ...], list[int]]:
        """支撑恰为 I 的节点下标"""
        result: dict[tuple[int, ...], list[int]] = {}
        for index, support in enumerate(self.supports):
            result.setdefault(support, []).append(index)
        return result

    def closed_face(self, face: Sequence[int]) -> list[int]:
        """Δ_I 上的节点（支撑 ⊆ I）"""
        face = set(face)
        return [i for i, support in enumerate(self.supports) if set(support) <= face]


def _face_key(face: Sequence[int]) -> str:
    return ",".join(str(i) for i in face)


def build_pareto_atlas(problem: MultiObjective, resolution: int,
                       manager: Optional[TaskQueueManager] = None) -> ParetoAtlas:
    """
    在权重单纯形网格的每个节点上求标量化极小点 x*(w)

    Raises:
        NonConvergenceError: 某个节点求解失败，context 中带节点权重
    """
    _alpha(problem)
    grid = WeightSimplexGrid(problem.ell, resolution)
    manager = manager or get_task_manager()

    def solve(index: int, w: np.ndarray) -> AtlasNode:
        try:
            x_star = scalarize_min(problem, w)
        except NonConvergenceError as e:
            raise NonConvergenceError(f"图册节点 {index} 求解失败: {e.message}",
                                      {**e.context, "node": index}) from e
        return AtlasNode(weights=w.tolist(), support=list(grid.supports[index]),
                         x_star=x_star.tolist(), values=problem.f.eval(x_star).tolist())

    try:
        nodes = manager.map(solve, list(grid.nodes), label="pareto_atlas")
    except NonConvergenceError as e:
        logger.service_error(f"Pareto 图册构建失败: {e}", extra_fields=e.context, exc_info=e)
        raise
    logger.debug_info("Pareto 图册构建完成", extra_fields={"ell": problem.ell, "nodes": len(nodes)})
    return ParetoAtlas(ell=problem.ell, resolution=resolution, nodes=nodes)


def _first_collision(points: np.ndarray) -> Optional[tuple[int, int]]:
    if len(points) < 2:
        return None
    distances = squareform(pdist(points))
    np.fill_diagonal(distances, np.inf)
    i, j = np.unravel_index(np.argmin(distances), distances.shape)
    if distances[i, j] >= SEPARATION:
        return None
    return (int(min(i, j)), int(max(i, j)))


def simpliciality_check(problem: MultiObjective, atlas: ParetoAtlas, probe_budget: int = 8, seed: int = 0,
                        policy: Optional[TolPolicy] = None,
                        manager: Optional[TaskQueueManager] = None) -> SimplicialityReport:
    """
    单纯性证据检查

    (i) 各节点 rank Jf(x*) = ℓ−1（ℓ = 1 时为空条件）；
    (ii) 支撑为 I 的节点对子问题 f_I 是 Pareto 点；
    (iii) 每个闭面 Δ_I 上的节点映到两两分离的极小点，且目标值两两不同。
    """
    policy = policy or SEARCH_POLICY
    manager = manager or get_task_manager()
    f, ell = problem.f, problem.ell
    nodes = atlas.nodes
    X = np.array([node.x_star for node in nodes])
    values = np.array([node.values for node in nodes])
    witnesses: list[SimplicialityWitness] = []

    ranks = [rank_decide(J, policy).rank for J in f.jacobian(X)]
    rank_violations = [] if ell == 1 else [nodes[i].weights for i, r in enumerate(ranks) if r != ell - 1]
    for weights in rank_violations[:5]:
        witnesses.append(SimplicialityWitness(kind="rank", weights=[weights], detail=f"rank Jf ≠ {ell - 1}"))

    members = manager.map(
        lambda i, node: pareto_membership(problem.select(node.support), node.x_star, probe_budget, seed + i),
        nodes, label="face_consistency")
    face_consistency: dict[str, bool] = {}
    for node, ok in zip(nodes, members):
        key = _face_key(node.support)
        face_consistency[key] = face_consistency.get(key, True) and ok
        if not ok:
            witnesses.append(SimplicialityWitness(kind="face", weights=[node.weights],
                                                  detail=f"x* 不是子问题 f_{{{key}}} 的 Pareto 点"))

    injectivity: dict[str, bool] = {}
    faces = sorted({tuple(node.support) for node in nodes}, key=lambda face: (len(face), face))
    for face in faces:
        members_of_face = [i for i, node in enumerate(nodes) if set(node.support) <= set(face)]
        collisions = [("x*", _first_collision(X[members_of_face])),
                      ("f", _first_collision(values[members_of_face]))]
        injectivity[_face_key(face)] = all(pair is None for _, pair in collisions)
        for label, pair in collisions:
            if pair is not None:
                i, j = members_of_face[pair[0]], members_of_face[pair[1]]
                witnesses.append(SimplicialityWitness(
                    kind="injectivity", weights=[nodes[i].weights, nodes[j].weights],
                    detail=f"Δ_{{{_face_key(face)}}} 上两个节点的 {label} 重合"))
                break

    non_singleton = []
    for node in nodes:
        if len(node.support) == 1:
            H = f.select(node.support).hessians(np.asarray(node.x_star))[0]
            if rank_decide(H, policy).corank > 0:
                non_singleton.append(_face_key(node.support))

    failed = not all(face_consistency.values()) or not all(injectivity.values())
    if failed:
        verdict = "FAILED"
    elif rank_violations:
        verdict = "WEAKLY_SIMPLICIAL_EVIDENCE"
    else:
        verdict = "SIMPLICIAL_EVIDENCE"
    logger.debug_info("单纯性检查完成", extra_fields={
        "nodes": len(nodes), "rank_violations": len(rank_violations), "verdict": verdict
    })
    return SimplicialityReport(
        rank_condition_ok=not rank_violations, ranks=ranks, rank_violations=rank_violations,
        face_consistency=face_consistency, injectivity=injectivity, non_singleton_faces=non_singleton,
        verdict=verdict, witnesses=witnesses,
    )


def _assess(problem: MultiObjective, budget: int, resolution: int, seed: int) -> tuple[int, str]:
    """扰动后问题的 (最大余秩, 单纯性判定)，内部调用单线程执行"""
    inner = TaskQueueManager(1)
    max_corank = 0
    if problem.ell >= 2:
        max_corank = corank_survey(problem.f, problem.box, budget, seed, target_k=2, manager=inner).max_corank
    atlas = build_pareto_atlas(problem, resolution, inner)
    verdict = simpliciality_check(problem, atlas, seed=seed, manager=inner).verdict
    return max_corank, verdict


def perturbation_study(problem: MultiObjective, perturbation_scale: float, trials: int, seed: int,
                       budget: int = 64, resolution: int = 4, targeted: Sequence = (),
                       manager: Optional[TaskQueueManager] = None) -> PerturbationStudyReport:
    """
    线性扰动通有性研究

    在半径为 perturbation_scale 的矩阵球中均匀抽取 π。若 d(f+π) 在盒内某点余秩 ≥ 2，
    或粗分辨率的单纯性检查失败，则 π 记为坏扰动。ℓ = 1 时坏集合为空。

    Raises:
        InvalidRegimeError: 不满足 m ≥ ℓ 或 m − 2ℓ + 4 > 0
        PreconditionError: f 不是强凸的
    """
    threshold = genericity_threshold(ThresholdQuery(kind="pareto", m=problem.m, ell=problem.ell))
    alpha = _alpha(problem)
    problem = replace(problem, alpha_hat=alpha)
    ell, m = problem.ell, problem.m
    manager = manager or get_task_manager()

    def trial(rng: np.random.Generator, index: int) -> tuple[np.ndarray, bool]:
        direction = rng.standard_normal((ell, m))
        direction /= np.linalg.norm(direction)
        pi = direction * perturbation_scale * rng.random() ** (1.0 / (ell * m))
        if ell == 1:
            return pi, False
        max_corank, verdict = _assess(perturb(problem, pi), budget, resolution, seed + index)
        return pi, max_corank >= 2 or verdict == "FAILED"

    outcomes = manager.map_seeded(trial, trials, seed, label="perturbation_study")
    bad_samples = [pi.ravel().tolist() for pi, bad in outcomes if bad]
    estimate = box_count(np.array(bad_samples)) if len(bad_samples) >= MIN_POINTS else None

    results = []
    for pi in targeted:
        pi = np.asarray(pi, dtype=float)
        max_corank, verdict = _assess(perturb(problem, pi), budget, resolution, seed)
        results.append(TargetedResult(pi=pi.tolist(), max_corank=max_corank, verdict=verdict))

    logger.service_info("扰动研究完成", extra_fields={
        "trials": trials, "bad": len(bad_samples), "targeted": len(results)
    })
    return PerturbationStudyReport(
        trials=trials, bad_count=len(bad_samples), bad_fraction=len(bad_samples) / trials,
        bad_samples=bad_samples, dimension_estimate=estimate, threshold=threshold, targeted=results,
    )
