"""
多点横截性
~~~~~~~~~

d 重映射 f^{(d)}(q_1,…,q_d) = (f(q_1),…,f(q_d)) 与对角线 Δ_d ⊂ (R^ℓ)^d 的横截性：
单射性、正规交叉检查以及 d_f 的采样估计。
"""

from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Optional, Union

import numpy as np
from scipy.optimize import least_squares

from ..models.reports import CrossingLevel, DfEstimate, InjectivityReport, NormalCrossingsReport, TupleWitness
from ..models.validators import Box, TolPolicy
from ..utils.logger import get_engine_logger
from ..utils.task_manager import TaskQueueManager, get_task_manager, substream
from .errors import ArityError, EvaluationError, InvalidRegimeError, NotInjectiveError, PreconditionError
from .expr import ExprMap, Wrt
from .linalg import DEFAULT_POLICY, batch_rank
from .transversality import LevelSetSubmanifold, defect_at

logger = get_engine_logger("multipoint")

DEFAULT_GAP_TOL = 1e-9


def diagonal_codim(ell: int, d: int) -> int:
    """codim Δ_d = ℓ(d−1)"""
    if d < 2:
        raise InvalidRegimeError(f"多点个数 d={d} 必须 ≥ 2")
    return ell * (d - 1)


@dataclass(frozen=True)
class DiagonalSpec:
    """Δ_d 的定义映射 h(y_1,…,y_d) = (y_2−y_1, …, y_d−y_1)"""
    ell: int
    d: int

    @property
    def codim(self) -> int:
        return diagonal_codim(self.ell, self.d)

    def defining_map(self) -> ExprMap:
        ell, d = self.ell, self.d
        matrix = np.zeros((self.codim, ell * d))
        for i in range(1, d):
            rows = slice((i - 1) * ell, i * ell)
            matrix[rows, :ell] = -np.eye(ell)
            matrix[rows, i * ell:(i + 1) * ell] = np.eye(ell)
        return ExprMap.linear(matrix)

    def submanifold(self, membership_tol: float = DEFAULT_GAP_TOL) -> LevelSetSubmanifold:
        return LevelSetSubmanifold(self.defining_map(), membership_tol)


@dataclass(frozen=True)
class MultiPointTuple:
    """X^{(d)} 中的点：d 个两两距离不小于 min_separation 的点"""
    points: np.ndarray
    min_separation: float

    def __post_init__(self):
        points = np.atleast_2d(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "points", points)
        if len(points) < 2:
            raise PreconditionError("多点组至少需要两个点")
        if self.min_separation <= 0:
            raise PreconditionError("最小间隔必须为正")
        gap = _min_pairwise(points[None])[0]
        if gap < self.min_separation:
            raise PreconditionError(f"点组间隔 {gap:.3e} 小于下限 {self.min_separation:.3e}")

    @property
    def d(self) -> int:
        return len(self.points)

    @property
    def flat(self) -> np.ndarray:
        return self.points.ravel()


class StackedMap:
    """f^{(d)}，满足 DifferentiableMap 协议，x 为 d 个点按顺序拼接"""

    def __init__(self, f: ExprMap, d: int):
        self.f = f
        self.d = d
        self.arity_x = f.arity_x * d
        self.arity_a = f.arity_a

    @property
    def out_dim(self) -> int:
        return self.f.out_dim * self.d

    def _split(self, x) -> tuple[np.ndarray, tuple]:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.arity_x:
            raise ArityError(f"多点组长度应为 {self.arity_x}，实际形状为 {x.shape}")
        batch = x.shape[:-1]
        return x.reshape(-1, self.f.arity_x), batch

    def eval(self, x, a=None) -> np.ndarray:
        points, batch = self._split(x)
        return self.f.eval(points, a).reshape(batch + (self.out_dim,))

    def jacobian(self, x, a=None, wrt: Union[Wrt, str] = Wrt.X) -> np.ndarray:
        if Wrt(wrt) != Wrt.X:
            raise ArityError("多点映射只支持对 x 求导")
        points, batch = self._split(x)
        n, ell, d = self.f.arity_x, self.f.out_dim, self.d
        blocks = self.f.jacobian(points, a, Wrt.X).reshape((-1, d, ell, n))
        J = np.zeros((blocks.shape[0], d * ell, d * n))
        for i in range(d):
            J[:, i * ell:(i + 1) * ell, i * n:(i + 1) * n] = blocks[:, i]
        return J.reshape(batch + (d * ell, d * n))


def _min_pairwise(tuples: np.ndarray) -> np.ndarray:
    """形状 (N, d, n) 的点组中两两最小距离"""
    d = tuples.shape[1]
    gaps = [np.linalg.norm(tuples[:, i] - tuples[:, j], axis=-1) for i, j in combinations(range(d), 2)]
    return np.min(np.stack(gaps, axis=-1), axis=-1)


def multipoint_eval(f: ExprMap, q: MultiPointTuple, a=None) -> np.ndarray:
    return StackedMap(f, q.d).eval(q.flat, a)


def diagonal_defect(f: ExprMap, q: MultiPointTuple, a=None, membership_tol: float = DEFAULT_GAP_TOL,
                    policy: Optional[TolPolicy] = None) -> int:
    """f^{(d)} 在 q 处与 Δ_d 的横截缺陷；像不在对角线上时为 0"""
    Z = DiagonalSpec(f.out_dim, q.d).submanifold(membership_tol)
    return defect_at(StackedMap(f, q.d), Z, q.flat, a, Wrt.X, policy)


# --- 同像点组搜索 ---
def _image_gap(f: ExprMap, tuples: np.ndarray, a=None) -> np.ndarray:
    """max_i ‖f(q_i) − f(q_1)‖∞"""
    N, d, n = tuples.shape
    images = f.eval(tuples.reshape(-1, n), a).reshape(N, d, -1)
    return np.max(np.abs(images[:, 1:] - images[:, :1]), axis=(1, 2))


def _divided_residual(f: ExprMap, d: int, n: int, a):
    def residual(z: np.ndarray) -> np.ndarray:
        q = z.reshape(d, n)
        images = f.eval(q, a)
        scale = np.linalg.norm(q[1:] - q[:1], axis=-1)[:, None]
        return ((images[1:] - images[:1]) / np.maximum(scale, 1e-300)).ravel()
    return residual


def _search_tuples(f: ExprMap, box: Box, d: int, budget: int, seed: int, a, gap_tol: float,
                   separation: float, manager: TaskQueueManager, label: str) -> list[TupleWitness]:
    n = f.arity_x
    lo, hi = np.tile(box.lo, d), np.tile(box.hi, d)
    residual = _divided_residual(f, d, n, a)

    def one(rng: np.random.Generator, _: int) -> Optional[np.ndarray]:
        z0 = box.sample(rng, d).ravel()
        try:
            sol = least_squares(residual, z0, bounds=(lo, hi), method="trf",
                                xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=200)
        except (EvaluationError, ValueError, np.linalg.LinAlgError, FloatingPointError):
            return None
        return sol.x.reshape(d, n)

    found = [q for q in manager.map_seeded(one, budget, seed, label=label) if q is not None]
    witnesses: list[TupleWitness] = []
    seen: list[np.ndarray] = []
    for q in found:
        q = q[np.lexsort(q.T[::-1])]
        if _min_pairwise(q[None])[0] < separation:
            continue
        gap = float(_image_gap(f, q[None], a)[0])
        if gap > gap_tol:
            continue
        if any(np.max(np.abs(q - s)) < 1e-6 for s in seen):
            continue
        seen.append(q)
        witnesses.append(TupleWitness(points=q.tolist(), image_gap=gap))
    return sorted(witnesses, key=lambda w: w.points)


def double_point_search(f: ExprMap, box: Box, budget: int, seed: int, a=None, gap_tol: float = DEFAULT_GAP_TOL,
                        separation: Optional[float] = None,
                        manager: Optional[TaskQueueManager] = None) -> list[TupleWitness]:
    """
    搜索 f(q1) = f(q2)、q1 ≠ q2 的点对

    最小化差商 (f(q1) − f(q2)) / ‖q1 − q2‖，像差不超过 gap_tol 且间隔不小于
    separation（缺省 1e-4 × 盒直径）的结果作为见证。
    """
    separation = separation if separation is not None else 1e-4 * box.diameter
    return _search_tuples(f, box, 2, budget, seed, a, gap_tol, separation,
                          manager or get_task_manager(), "double_point")


def injectivity_check(f: ExprMap, box: Box, budget: int, seed: int, a=None,
                      manager: Optional[TaskQueueManager] = None) -> InjectivityReport:
    witnesses = double_point_search(f, box, budget, seed, a, manager=manager)
    verdict = "NOT_INJECTIVE" if witnesses else "INJECTIVE"
    logger.service_info("单射性检查完成", extra_fields={"verdict": verdict, "double_points": len(witnesses)})
    return InjectivityReport(verdict=verdict, double_points=witnesses, budget=budget)


def normal_crossings_check(f: ExprMap, box: Box, d_max: int, budget: int, seed: int, a=None,
                           gap_tol: float = DEFAULT_GAP_TOL, separation: Optional[float] = None,
                           manager: Optional[TaskQueueManager] = None) -> NormalCrossingsReport:
    """对 d = 2..d_max 搜索落在 Δ_d 上的点组并计算对角线缺陷"""
    if d_max < 2:
        raise InvalidRegimeError("d_max 必须 ≥ 2")
    if d_max > f.out_dim + 2:
        raise InvalidRegimeError(f"d_max 不能超过 m+2 = {f.out_dim + 2}")
    separation = separation if separation is not None else 1e-4 * box.diameter
    manager = manager or get_task_manager()
    levels = []
    for d in range(2, d_max + 1):
        tuples = _search_tuples(f, box, d, budget, seed + d, a, gap_tol, separation, manager, f"crossing_{d}")
        scored = []
        for w in tuples:
            q = MultiPointTuple(np.asarray(w.points), separation)
            scored.append(w.model_copy(update={"defect": diagonal_defect(f, q, a, max(gap_tol, w.image_gap))}))
        levels.append(CrossingLevel(d=d, tuples=scored, all_transverse=all(w.defect == 0 for w in scored)))
    verdict = "NORMAL_CROSSINGS" if all(level.all_transverse for level in levels) else "NOT_NORMAL_CROSSINGS"
    logger.service_info("正规交叉检查完成", extra_fields={
        "verdict": verdict, "tuples": [len(level.tuples) for level in levels]
    })
    return NormalCrossingsReport(verdict=verdict, levels=levels)


def estimate_df(f: ExprMap, box: Box, budget: int, seed: int, a=None,
                sampler: Optional[Callable[[np.random.Generator, int], np.ndarray]] = None,
                injectivity_budget: int = 32, policy: Optional[TolPolicy] = None,
                manager: Optional[TaskQueueManager] = None) -> DfEstimate:
    """
    估计 d_f：最大的 d，使任意 d 个不同点的像差 {f(q_i) − f(q_1)} 仿射无关

    逐个 d 采样 budget 个点组（两两间隔不小于 1e-2 × 盒直径），
    第一次出现秩亏的 d 记为违例，d_hat = d − 1。d 的上限为 m+2。

    Raises:
        NotInjectiveError: 预检查发现同像点对
    """
    policy = policy or DEFAULT_POLICY
    double_points = double_point_search(f, box, injectivity_budget, seed, a, manager=manager)
    if double_points:
        raise NotInjectiveError("f 在搜索盒上不是单射", {"double_point": double_points[0].points})
    sampler = sampler or (lambda rng, count: box.sample(rng, count))
    separation = 1e-2 * box.diameter
    m = f.out_dim
    n = f.arity_x
    tested = []
    for d in range(2, m + 3):
        tested.append(d)
        rng = substream(seed, d)
        tuples = np.asarray(sampler(rng, budget * d), dtype=float).reshape(budget, d, n)
        tuples = tuples[_min_pairwise(tuples) >= separation]
        if len(tuples) == 0:
            continue
        images = f.eval(tuples.reshape(-1, n), a).reshape(len(tuples), d, m)
        ranks, _ = batch_rank(images[:, 1:] - images[:, :1], policy)
        bad = np.flatnonzero(ranks < d - 1)
        if bad.size:
            if d == 2:
                raise NotInjectiveError("采样到同像点对", {"tuple": tuples[bad[0]].tolist()})
            logger.service_info("d_f 估计完成", extra_fields={"d_hat": d - 1, "budget": budget})
            return DfEstimate(d_hat=d - 1, violating_tuple=tuples[bad[0]].tolist(), budget_per_d=budget,
                              tested=tested)
    # 仿射秩最多为 m，d = m+2 时必然秩亏；走到这里说明所有样本都被间隔过滤掉了
    raise PreconditionError("有效点组为空，无法估计 d_f", {"budget": budget, "separation": separation})
