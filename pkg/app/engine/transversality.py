"""
横截缺陷引擎
~~~~~~~~~~~

Z 取为显式浸没 h: R^q → R^c 的零点集，于是 T_zZ = ker dh_z，
映射 f 在 x 处的缺陷为 δ = c − rank(dh·df)（f(x) ∉ Z 时为 0）。

在此基础上提供族上一点的 W / W̃ 分类、δ(F,Z) 的采样下界、
坏参数集 Σ(F,Z) 的见证搜索与投影采样。
"""

import os
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, Union

import numpy as np
from scipy.optimize import least_squares

from ..models.reports import Classification, DefectReport, DefectSupReport, SigmaSample
from ..models.validators import Box, SearchSpec, TolPolicy
from ..utils.logger import get_engine_logger
from ..utils.task_manager import TaskQueueManager, get_task_manager, substream
from .errors import ArityError, EvaluationError, InvalidSubmanifoldError, LabError
from .expr import ExprMap, Wrt, parse
from .linalg import DEFAULT_POLICY, SEARCH_POLICY, batch_rank, rank_decide

logger = get_engine_logger("transversality")

DEFAULT_MEMBERSHIP_TOL = float(os.getenv("LAB_MEMBERSHIP_TOL", "1e-9"))


class DifferentiableMap(Protocol):
    """可求值、可求 Jacobian 的映射；ExprMap 与多点堆叠映射都满足该协议"""
    arity_x: int
    arity_a: int

    @property
    def out_dim(self) -> int: ...

    def eval(self, x, a=None) -> np.ndarray: ...

    def jacobian(self, x, a=None, wrt: Union[Wrt, str] = Wrt.X) -> np.ndarray: ...


@dataclass(frozen=True)
class LevelSetSubmanifold:
    """
    Z = h⁻¹(0) ⊂ R^q，h: R^q → R^c 在 Z 上是浸没

    Attributes:
        defining_map: h，arity_x = q，无参数
        membership_tol: ‖h(y)‖∞ ≤ membership_tol 视为 y ∈ Z
        policy: 判定 dh 满秩及缺陷秩时使用的容差策略
    """
    defining_map: ExprMap
    membership_tol: float = DEFAULT_MEMBERSHIP_TOL
    policy: TolPolicy = DEFAULT_POLICY

    def __post_init__(self):
        if self.defining_map.arity_a:
            raise InvalidSubmanifoldError("定义映射 h 不能带参数")
        if self.codim > self.ambient_dim:
            raise InvalidSubmanifoldError(f"余维数 {self.codim} 超过外围维数 {self.ambient_dim}")
        if self.membership_tol <= 0:
            raise InvalidSubmanifoldError("成员容差必须为正")

    @classmethod
    def from_source(cls, source: str, ambient_dim: int, membership_tol: Optional[float] = None,
                    policy: Optional[TolPolicy] = None) -> "LevelSetSubmanifold":
        return cls(parse(source, ambient_dim), membership_tol or DEFAULT_MEMBERSHIP_TOL,
                   policy or DEFAULT_POLICY)

    @classmethod
    def point(cls, y0, membership_tol: Optional[float] = None) -> "LevelSetSubmanifold":
        """单点 Z = {y0}，h(y) = y − y0"""
        y0 = np.atleast_1d(np.asarray(y0, dtype=float))
        q = y0.shape[0]
        return cls(ExprMap.linear(np.eye(q)).compose_affine(np.eye(q), -y0),
                   membership_tol or DEFAULT_MEMBERSHIP_TOL)

    @property
    def ambient_dim(self) -> int:
        return self.defining_map.arity_x

    @property
    def codim(self) -> int:
        return self.defining_map.out_dim

    def residual(self, y) -> np.ndarray:
        """‖h(y)‖∞，y 可以是 (q,) 或 (N, q)"""
        return np.max(np.abs(self.defining_map.eval(y)), axis=-1)

    def contains(self, y) -> np.ndarray:
        return self.residual(y) <= self.membership_tol

    def check_submersion(self, y) -> np.ndarray:
        """
        在 Z 上的点处检查 dh 满秩，返回 Jh(y)

        Raises:
            InvalidSubmanifoldError: rank dh(y) < c
        """
        jh = self.defining_map.jacobian(y)
        ranks, _ = batch_rank(jh, self.policy)
        if np.any(ranks < self.codim):
            bad = np.atleast_2d(np.asarray(y, dtype=float))[np.atleast_1d(ranks < self.codim)][0]
            raise InvalidSubmanifoldError("h 在 Z 上不是浸没，Z 的描述无效",
                                          {"y": bad.tolist(), "codim": self.codim})
        return jh


@dataclass(frozen=True)
class FamilyProblem:
    """参数族 F: X_box × A_box → R^q 与目标子流形 Z"""
    F: ExprMap
    Z: LevelSetSubmanifold
    x_box: Box
    a_box: Box
    name: str = ""
    r: Optional[int] = field(default=None, metadata={"description": "光滑阶，None 表示 C^∞"})

    def __post_init__(self):
        if self.F.out_dim != self.Z.ambient_dim:
            raise ArityError(f"F 的输出维数 {self.F.out_dim} 与 Z 的外围维数 {self.Z.ambient_dim} 不一致")
        if self.x_box.dim != self.F.arity_x or self.a_box.dim != self.F.arity_a:
            raise ArityError("搜索盒维数与 F 的元数不一致",
                             {"x_box": self.x_box.dim, "a_box": self.a_box.dim,
                              "n": self.F.arity_x, "p": self.F.arity_a})

    @property
    def n(self) -> int:
        return self.F.arity_x

    @property
    def p(self) -> int:
        return self.F.arity_a

    @property
    def c(self) -> int:
        return self.Z.codim

    @property
    def xa_box(self) -> Box:
        return Box(lower=self.x_box.lower + self.a_box.lower, upper=self.x_box.upper + self.a_box.upper)


# --- 单点缺陷 ---
def _defect_matrix(f: DifferentiableMap, Z: LevelSetSubmanifold, x, a, wrt: Wrt) -> tuple[float, np.ndarray]:
    y = f.eval(x, a)
    residual = float(Z.residual(y))
    if residual > Z.membership_tol:
        return residual, np.zeros((Z.codim, 0))
    jh = Z.check_submersion(y)
    return residual, jh @ f.jacobian(x, a, wrt)


def defect_at(f: DifferentiableMap, Z: LevelSetSubmanifold, x, a=None, wrt: Union[Wrt, str] = Wrt.X,
              policy: Optional[TolPolicy] = None) -> int:
    """
    δ(f, x, Z) = c − rank(dh·df)；f(x) 不在 Z 上时为 0

    Args:
        f: 可微映射
        Z: 水平集子流形
        x: 状态点
        a: 参数点（族映射时）
        wrt: 求导变量，X 给出截面缺陷，XA 给出族缺陷
        policy: 秩容差策略，缺省使用 Z 的策略

    Raises:
        InvalidSubmanifoldError: f(x) ∈ Z 但 dh 在该点不满秩
    """
    residual, M = _defect_matrix(f, Z, x, a, Wrt(wrt))
    if residual > Z.membership_tol:
        return 0
    return Z.codim - rank_decide(M, policy or Z.policy).rank


def classify_family_point(P: FamilyProblem, x, a, policy: Optional[TolPolicy] = None) -> DefectReport:
    """计算截面缺陷与族缺陷并给出 W / W̃ 分类"""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    a = np.atleast_1d(np.asarray(a, dtype=float))
    policy = policy or P.Z.policy
    y = P.F.eval(x, a)
    residual = float(P.Z.residual(y))
    if residual > P.Z.membership_tol:
        return DefectReport(delta_section=0, delta_family=0, classification=Classification.NOT_ON_Z,
                            witness_x=x.tolist(), witness_a=a.tolist(), residual=residual)
    jh = P.Z.check_submersion(y)
    _, jac, _ = P.F.jet(x, a, Wrt.XA)
    rank_section = rank_decide(jh @ jac[:, :P.n], policy).rank
    # 加列不会降秩，数值上取两者较大者
    rank_family = max(rank_decide(jh @ jac, policy).rank, rank_section)
    delta_section = P.c - rank_section
    delta_family = P.c - rank_family
    if delta_section == 0:
        label = Classification.TRANSVERSE
    elif delta_section == delta_family:
        label = Classification.IN_W
    else:
        label = Classification.IN_W_TILDE
    return DefectReport(delta_section=delta_section, delta_family=delta_family, classification=label,
                        witness_x=x.tolist(), witness_a=a.tolist(), residual=residual)


def classify_family_batch(P: FamilyProblem, X, A,
                          policy: Optional[TolPolicy] = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    classify_family_point 的批量版本

    Returns:
        (delta_section (N,), delta_family (N,), 分类标签字符串数组 (N,))
    """
    policy = policy or P.Z.policy
    X = np.atleast_2d(np.asarray(X, dtype=float))
    A = np.atleast_2d(np.asarray(A, dtype=float))
    Y = P.F.eval(X, A)
    count = len(Y)
    on = P.Z.residual(Y) <= P.Z.membership_tol
    delta_section = np.zeros(count, dtype=int)
    delta_family = np.zeros(count, dtype=int)
    labels = np.full(count, Classification.NOT_ON_Z.value, dtype=object)
    if np.any(on):
        X_on, A_on = np.broadcast_to(X, (count, P.n))[on], np.broadcast_to(A, (count, P.p))[on]
        jh = P.Z.check_submersion(Y[on])
        M = jh @ P.F.jacobian(X_on, A_on, Wrt.XA)
        rank_section, _ = batch_rank(M[..., :P.n], policy)
        rank_family, _ = batch_rank(M, policy)
        ds = P.c - rank_section
        df = P.c - np.maximum(rank_family, rank_section)
        delta_section[on], delta_family[on] = ds, df
        labels[on] = np.where(ds == 0, Classification.TRANSVERSE.value,
                              np.where(ds == df, Classification.IN_W.value, Classification.IN_W_TILDE.value))
    return delta_section, delta_family, labels


def delta_star(P: FamilyProblem, sampled_sup: int) -> int:
    """δ*(F,Z) = n − c + δ(F,Z)"""
    return P.n - P.c + sampled_sup


# --- δ(F,Z) 的采样下界 ---
def _batch_family_defects(P: FamilyProblem, X: np.ndarray, A: np.ndarray, policy: TolPolicy):
    Y = P.F.eval(X, A)
    residual = P.Z.residual(Y)
    on = residual <= P.Z.membership_tol
    defects = np.zeros(len(X), dtype=int)
    if np.any(on):
        jh = P.Z.check_submersion(Y[on])
        M = jh @ P.F.jacobian(X[on], A[on], Wrt.XA)
        ranks, _ = batch_rank(M, policy)
        defects[on] = P.c - ranks
    return residual, on, defects


def _project_to_z(P: FamilyProblem, z0: np.ndarray) -> Optional[np.ndarray]:
    """在 X_box × A_box 中把 (x,a) 用有界最小二乘拉到 F⁻¹(Z) 上"""
    box = P.xa_box
    h = P.Z.defining_map

    def fun(z):
        return h.eval(P.F.eval(z[:P.n], z[P.n:]))

    def jac(z):
        y = P.F.eval(z[:P.n], z[P.n:])
        return h.jacobian(y) @ P.F.jacobian(z[:P.n], z[P.n:], Wrt.XA)

    try:
        sol = least_squares(fun, np.clip(z0, box.lo, box.hi), jac=jac, bounds=(box.lo, box.hi),
                            method="trf", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=100)
    except (EvaluationError, ValueError):
        return None
    return sol.x


def defect_family_sup(P: FamilyProblem, search: Optional[SearchSpec] = None, budget: Optional[int] = None,
                      seed: Optional[int] = None, policy: Optional[TolPolicy] = None) -> DefectSupReport:
    """
    δ(F,Z) = sup δ(F,(x,a),Z) 的采样下界

    在 X_box × A_box 的网格上（可再加 budget 个随机样本）批量计算族缺陷，
    并把残差最小的 search.refine 个网格点投影到 F⁻¹(Z) 上补充检查。
    F(U) ∩ Z 为空时结果为 0。
    """
    search = search or SearchSpec()
    policy = policy or P.Z.policy
    box = P.xa_box
    points = box.grid(search.grid_size(box.dim))
    if budget:
        rng = substream(seed or 0, 0)
        points = np.vstack([points, box.sample(rng, budget)])
    if len(points) == 0:
        raise LabError("δ(F,Z) 的样本集为空")

    X, A = points[:, :P.n], points[:, P.n:]
    residual, on, defects = _batch_family_defects(P, X, A, policy)

    if search.refine:
        order = np.argsort(residual, kind="stable")
        candidates = [points[i] for i in order[:search.refine] if not on[i]]
        projected = [z for z in (_project_to_z(P, z0) for z0 in candidates) if z is not None]
        if projected:
            extra = np.array(projected)
            r2, on2, d2 = _batch_family_defects(P, extra[:, :P.n], extra[:, P.n:], policy)
            points = np.vstack([points, extra])
            residual = np.concatenate([residual, r2])
            on = np.concatenate([on, on2])
            defects = np.concatenate([defects, d2])

    found = bool(np.any(on))
    best = int(np.argmax(defects)) if found else None
    sup = int(defects[best]) if found else 0
    report = DefectSupReport(
        sup=sup, samples=len(points), intersection_found=found,
        argmax_x=points[best, :P.n].tolist() if found else None,
        argmax_a=points[best, P.n:].tolist() if found else None,
        delta_star=delta_star(P, sup), x_box=P.x_box, a_box=P.a_box,
    )
    logger.service_info("δ(F,Z) 采样完成", extra_fields={
        "problem": P.name, "sup": sup, "samples": len(points), "on_z": int(np.count_nonzero(on))
    })
    return report


# --- Σ(F,Z) 的见证搜索 ---
# 一次筛选中同时求值的 (x, a) 对数上限
SCREEN_ROWS = 1 << 16
# sample_sigma 每个批任务处理的样本数，与工作线程数无关
SIGMA_CHUNK = 256
GN_ITERATIONS = 60
GN_TOL = 1e-14

# system(rows, Z, jacobian) 对 Z 的每一行给出残差，jacobian 为真时同时给出 Jacobian
BatchSystem = Callable[[np.ndarray, np.ndarray, bool], Union[np.ndarray, tuple[np.ndarray, np.ndarray]]]


def _gauss_newton_batch(system: BatchSystem, Z: np.ndarray, lo: np.ndarray, hi: np.ndarray,
                        iterations: int = GN_ITERATIONS) -> np.ndarray:
    """
    对每一行独立做带回溯的 Gauss-Newton

    步长取 pinv(J)·R 的最小范数解，试探点投影回 [lo, hi]；
    残差降到 GN_TOL 以下或一轮回溯都没有改进时该行停止。各行的轨迹互不影响。
    """
    Z = np.array(Z, dtype=float)
    live = np.ones(len(Z), dtype=bool)
    for _ in range(iterations):
        idx = np.flatnonzero(live)
        if len(idx) == 0:
            break
        R, J = system(idx, Z[idx], True)
        norms = np.linalg.norm(R, axis=-1)
        converged = norms <= GN_TOL
        live[idx[converged]] = False
        idx, R, J, norms = idx[~converged], R[~converged], J[~converged], norms[~converged]
        if len(idx) == 0:
            break
        step = -np.einsum("nij,nj->ni", np.linalg.pinv(J), R)
        current = Z[idx]
        best = current.copy()
        improved = np.zeros(len(idx), dtype=bool)
        t = 1.0
        for _ in range(30):
            pending = np.flatnonzero(~improved)
            trial = np.clip(current[pending] + t * step[pending], lo, hi)
            better = np.linalg.norm(system(idx[pending], trial, False), axis=-1) < norms[pending]
            best[pending[better]] = trial[better]
            improved[pending[better]] = True
            if improved.all():
                break
            t *= 0.5
        Z[idx] = best
        live[idx[~improved]] = False
    return Z


def _section_system(P: FamilyProblem, A: np.ndarray) -> BatchSystem:
    """固定参数 a 时的 h(F_a(x)) = 0"""
    h = P.Z.defining_map

    def system(rows, X, jacobian):
        Y, JFx, _ = P.F.jet(X, A[rows], Wrt.X)
        values, Jh, _ = h.jet(Y)
        return (values, Jh @ JFx) if jacobian else values
    return system


def _lagrange_system(P: FamilyProblem, A_fixed: Optional[np.ndarray] = None) -> BatchSystem:
    """
    h(F) = 0，(dh·dF_x)ᵀλ = 0，‖λ‖² = 1：零点处截面缺陷为正

    A_fixed 给出时未知量为 (x, λ)，否则为 (x, a, λ)。Jacobian 用二阶 jet 解析计算。
    """
    n, p, c = P.n, P.p, P.c
    h = P.Z.defining_map
    free = np.r_[0:n, n + p:n + p + c] if A_fixed is not None else np.arange(n + p + c)

    def split(rows, Z):
        if A_fixed is not None:
            return Z[:, :n], A_fixed[rows], Z[:, n:]
        return Z[:, :n], Z[:, n:n + p], Z[:, n + p:]

    def system(rows, Z, jacobian):
        X, A, L = split(rows, Z)
        norm = np.sum(L * L, axis=-1, keepdims=True) - 1.0
        if not jacobian:
            Y, JFx, _ = P.F.jet(X, A, Wrt.X)
            values, Jh, _ = h.jet(Y)
            return np.concatenate([values, np.einsum("Ncj,Nc->Nj", Jh @ JFx, L), norm], axis=-1)
        Y, JF, HF = P.F.jet(X, A, Wrt.XA, second_order=True)
        values, Jh, Hh = h.jet(Y, second_order=True)
        dh = Jh @ JF
        M = dh[..., :n]
        dM = (np.einsum("Nckl,Nlz,Nkj->Ncjz", Hh, JF, JF[..., :n], optimize=True)
              + np.einsum("Nck,Nkjz->Ncjz", Jh, HF[:, :, :n, :]))
        J = np.zeros((len(Z), c + n + 1, n + p + c))
        J[:, :c, :n + p] = dh
        J[:, c:c + n, :n + p] = np.einsum("Nc,Ncjz->Njz", L, dM)
        J[:, c:c + n, n + p:] = np.swapaxes(M, 1, 2)
        J[:, -1, n + p:] = 2.0 * L
        R = np.concatenate([values, np.einsum("Ncj,Nc->Nj", M, L), norm], axis=-1)
        return R, J[:, :, free]
    return system


def _lagrange_start(P: FamilyProblem, X: np.ndarray, A: np.ndarray) -> np.ndarray:
    """dh·dF_x 最小奇异值对应的左奇异向量，作为 λ 的初值"""
    Y = P.F.eval(X, A)
    M = P.Z.defining_map.jacobian(Y) @ P.F.jacobian(X, A, Wrt.X)
    u, _, _ = np.linalg.svd(M, full_matrices=True)
    return u[..., -1]


def _witness_mask(P: FamilyProblem, X: np.ndarray, A: np.ndarray, policy: TolPolicy) -> np.ndarray:
    """(x, a) 在搜索盒内、F(x,a) ∈ Z 且截面缺陷为正"""
    mask = P.x_box.contains(X, 1e-12) & P.a_box.contains(A, 1e-12)
    Y = P.F.eval(X, A)
    on = mask & (P.Z.residual(Y) <= P.Z.membership_tol)
    mask = np.zeros(len(X), dtype=bool)
    if np.any(on):
        jh = P.Z.check_submersion(Y[on])
        ranks, _ = batch_rank(jh @ P.F.jacobian(X[on], A[on], Wrt.X), policy)
        mask[on] = ranks < P.c
    return mask


def _screen_batch(P: FamilyProblem, C: np.ndarray, A: np.ndarray, policy: TolPolicy):
    """
    所有候选上的向量化筛选，不做任何局部求解

    Args:
        C: 候选点，形状 (m, G, n)，第 i 行是第 i 个参数的候选
        A: 参数，形状 (m, p)

    Returns:
        (has_hit (m,), 直接命中的见证 (m, n), ‖h(F)‖² 最小的候选 (m, n))
    """
    m, G, n = C.shape
    X = C.reshape(m * G, n)
    AA = np.repeat(A, G, axis=0)
    h = P.Z.defining_map
    merit = np.empty(m * G)
    hit = np.zeros(m * G, dtype=bool)
    for start in range(0, m * G, SCREEN_ROWS):
        chunk = slice(start, start + SCREEN_ROWS)
        Y = P.F.eval(X[chunk], AA[chunk])
        values = h.eval(Y)
        merit[chunk] = np.sum(values ** 2, axis=-1)
        on = np.max(np.abs(values), axis=-1) <= P.Z.membership_tol
        if np.any(on):
            jh = P.Z.check_submersion(Y[on])
            ranks, _ = batch_rank(jh @ P.F.jacobian(X[chunk][on], AA[chunk][on], Wrt.X), policy)
            hit[start + np.flatnonzero(on)[ranks < P.c]] = True
    merit, hit = merit.reshape(m, G), hit.reshape(m, G)
    rows = np.arange(m)
    best = C[rows, np.argmin(merit, axis=1)]
    witness = C[rows, np.argmin(np.where(hit, merit, np.inf), axis=1)]
    return hit.any(axis=1), witness, best


def _project_batch(P: FamilyProblem, X0: np.ndarray, A0: np.ndarray, policy: TolPolicy) -> list:
    inf = np.full(P.c, np.inf)
    box = P.xa_box
    Z = _gauss_newton_batch(_lagrange_system(P), np.hstack([X0, A0, _lagrange_start(P, X0, A0)]),
                            np.concatenate([box.lo, -inf]), np.concatenate([box.hi, inf]))
    X, A = Z[:, :P.n], Z[:, P.n:P.n + P.p]
    ok = _witness_mask(P, X, A, policy)
    return [(X[i], A[i]) if ok[i] else None for i in range(len(Z))]


def _refine_batch(P: FamilyProblem, X0: np.ndarray, A: np.ndarray, policy: TolPolicy,
                  solve_section: bool, project: bool) -> list:
    """
    对每个参数只细化筛选出的最优候选

    先固定 a 求 h(F_a(x)) = 0 再求 Lagrange 系统；仍未得到见证且 project 为真时，
    从最优候选出发在 (x, a, λ) 上投影到 Σ。
    """
    results: list = [None] * len(A)
    pending = np.arange(len(A))
    if solve_section:
        inf = np.full(P.c, np.inf)
        X = _gauss_newton_batch(_section_system(P, A), X0, P.x_box.lo, P.x_box.hi)
        Z = _gauss_newton_batch(_lagrange_system(P, A), np.hstack([X, _lagrange_start(P, X, A)]),
                                np.concatenate([P.x_box.lo, -inf]), np.concatenate([P.x_box.hi, inf]))
        ok = _witness_mask(P, Z[:, :P.n], A, policy)
        for i in np.flatnonzero(ok):
            results[i] = (Z[i, :P.n], A[i])
        pending = np.flatnonzero(~ok)
    if project and len(pending):
        for i, found in zip(pending, _project_batch(P, X0[pending], A[pending], policy)):
            results[i] = found
    return results


def _search_batch(P: FamilyProblem, A: np.ndarray, search: SearchSpec, rngs: list[np.random.Generator],
                  policy: TolPolicy, project: bool) -> list[Optional[tuple[np.ndarray, np.ndarray]]]:
    """一批参数的见证搜索：向量化筛选，再对未命中的参数批量细化"""
    m = len(A)
    if search.kind == "grid":
        grid = P.x_box.grid(search.grid_size(P.n))
        C = np.broadcast_to(grid, (m,) + grid.shape)
    else:
        C = np.stack([P.x_box.sample(rng, search.starts) for rng in rngs])
    has_hit, witness, best = _screen_batch(P, C, A, policy)
    results: list = [(witness[i], A[i]) if has_hit[i] else None for i in range(m)]
    pending = np.flatnonzero(~has_hit)
    solve_section = search.refine > 0
    if len(pending) == 0 or not (solve_section or project):
        return results
    try:
        refined = _refine_batch(P, best[pending], A[pending], policy, solve_section, project)
    except (EvaluationError, np.linalg.LinAlgError):
        # 批内某一行越出定义域时逐行重做，出错的行记为未找到
        refined = []
        for i in pending:
            try:
                refined.extend(_refine_batch(P, best[i:i + 1], A[i:i + 1], policy, solve_section, project))
            except (EvaluationError, np.linalg.LinAlgError):
                refined.append(None)
    for i, found in zip(pending, refined):
        results[i] = found
    logger.debug_debug("见证搜索批次完成", extra_fields={
        "size": m, "screen_hits": int(np.count_nonzero(has_hit)),
        "refined_hits": sum(r is not None for r in refined),
    })
    return results


def find_nontransverse_witness(P: FamilyProblem, a, search: Optional[SearchSpec] = None,
                               rng: Optional[np.random.Generator] = None,
                               policy: Optional[TolPolicy] = None) -> Optional[np.ndarray]:
    """
    在 X_box 中寻找 δ(F_a,x,Z) > 0 的点

    先在网格（或随机多起点）上向量化筛选直接命中的点，否则只对 ‖h(F_a(x))‖² 最小的候选
    依次求解 h(F_a(x)) = 0 与 Lagrange 系统。返回 None 只说明在当前预算下没有找到。
    """
    a = np.atleast_1d(np.asarray(a, dtype=float)).reshape(1, P.p)
    found = _search_batch(P, a, search or SearchSpec(), [rng or substream(0, 0)], policy or SEARCH_POLICY,
                          project=False)[0]
    return None if found is None else found[0]


def project_to_sigma(P: FamilyProblem, x0, a0, policy: Optional[TolPolicy] = None) -> Optional[tuple[np.ndarray, np.ndarray]]:
    """
    从 (x0, a0) 出发，在 (x, a, λ) 上求解 h(F(x,a)) = 0，(dh·dF_x)ᵀλ = 0，‖λ‖² = 1

    得到的 a* 若在 A_box 内且在 x* 处截面缺陷为正，返回 (x*, a*)，否则 None。
    """
    x0 = np.clip(np.atleast_1d(np.asarray(x0, dtype=float)), P.x_box.lo, P.x_box.hi)
    a0 = np.clip(np.atleast_1d(np.asarray(a0, dtype=float)), P.a_box.lo, P.a_box.hi)
    try:
        return _project_batch(P, x0.reshape(1, P.n), a0.reshape(1, P.p), policy or SEARCH_POLICY)[0]
    except (EvaluationError, np.linalg.LinAlgError):
        return None


def sample_sigma(P: FamilyProblem, budget: int, seed: int, refine: bool = True,
                 search: Optional[SearchSpec] = None,
                 a_sampler: Optional[Callable[[np.random.Generator], np.ndarray]] = None,
                 manager: Optional[TaskQueueManager] = None,
                 policy: Optional[TolPolicy] = None) -> SigmaSample:
    """
    采样 Σ(F,Z)

    第 i 个样本 a_i 由 substream(seed, i) 生成（缺省在 A_box 中均匀），
    对每个 a_i 搜索见证；未找到且 refine 为真时投影到 Σ 上。
    样本按下标分成固定大小的批次，结果按样本下标排序，与工作线程数无关。
    """
    search = search or SearchSpec()
    policy = policy or SEARCH_POLICY
    manager = manager or get_task_manager()
    sampler = a_sampler or (lambda rng: P.a_box.sample(rng, 1)[0])
    chunks = [range(start, min(start + SIGMA_CHUNK, budget)) for start in range(0, budget, SIGMA_CHUNK)]

    def run(_: int, indices: range):
        rngs = [substream(seed, i) for i in indices]
        A = np.array([np.asarray(sampler(rng), dtype=float) for rng in rngs]).reshape(len(indices), P.p)
        return _search_batch(P, A, search, rngs, policy, project=refine)

    logger.debug_info("开始采样 Σ", extra_fields={"problem": P.name, "budget": budget, "refine": refine})
    results = [r for batch in manager.map(run, chunks, label="sigma") for r in batch if r is not None]
    report = SigmaSample(points=[a.tolist() for _, a in results], witnesses=[x.tolist() for x, _ in results],
                         budget=budget, refined=refine, a_box=P.a_box)
    logger.service_info("Σ 采样完成", extra_fields={"problem": P.name, "budget": budget, "hits": len(results)})
    return report
