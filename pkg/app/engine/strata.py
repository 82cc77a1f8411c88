"""
余秩层检查
~~~~~~~~~

基于 S^k 层的 1-jet 检查：Morse 函数、浸入、Whitney 伞（cross-cap）与余秩统计。

S^k 在一点附近由 Schur 补局部方程给出，共 codim = (n−v+k)(ℓ−v+k) 个分量；
j¹f 与 S^k 的横截缺陷等于 codim − rank(d/dx chart(Jf(x)))，导数用中心差分。
"""

import math
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import least_squares

from ..models.reports import CorankSurvey, CorankWitness, CriticalPoint, ImmersionReport, MorseReport, UmbrellaReport
from ..models.validators import Box, TolPolicy
from ..utils.logger import get_engine_logger
from ..utils.task_manager import TaskQueueManager, get_task_manager, substream
from .errors import EvaluationError, InvalidRegimeError, PreconditionError
from .expr import ExprMap, Wrt
from .linalg import SEARCH_POLICY, batch_rank, rank_decide, schur_stratum_chart, select_pivots

logger = get_engine_logger("strata")

FD_STEP = float(os.getenv("LAB_FD_STEP", "1e-5"))
# 差分 Jacobian 的秩判定容差
CHART_POLICY = TolPolicy.absolute(1e-6)
# 相对容差，分别乘以盒上采样到的最大 Hessian 谱范数与最大梯度范数
HESSIAN_TOL = 1e-5
GRADIENT_TOL = 1e-10
HESSIAN_SAMPLES = 256
CHUNK = 64


def stratum_codim(n: int, ell: int, k: int) -> int:
    """codim S^k(R^n, R^ℓ) = (n−v+k)(ℓ−v+k)，v = min(n, ℓ)"""
    v = min(n, ell)
    if not 1 <= k <= v:
        raise InvalidRegimeError(f"余秩 k={k} 超出范围 [1, {v}]", {"n": n, "ell": ell})
    return (n - v + k) * (ell - v + k)


@dataclass(frozen=True)
class StratumSpec:
    k: int
    n: int
    ell: int

    def __post_init__(self):
        stratum_codim(self.n, self.ell, self.k)

    @property
    def v(self) -> int:
        return min(self.n, self.ell)

    @property
    def codim(self) -> int:
        return stratum_codim(self.n, self.ell, self.k)


@dataclass(frozen=True)
class JetPoint:
    """j¹f(x) = (x, f(x), Jf(x))"""
    x: np.ndarray
    y: np.ndarray
    J: np.ndarray


def jet_extension(f: ExprMap, x, a=None) -> JetPoint:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y, J, _ = f.jet(x, a, Wrt.X)
    return JetPoint(x, y, J)


def stratum_defect(f: ExprMap, k: int, x, a=None, step: float = FD_STEP,
                   policy: Optional[TolPolicy] = None) -> int:
    """
    j¹f 在 x 处与 S^k 的横截缺陷

    Raises:
        PreconditionError: x 处 Jf 的余秩不等于 k
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    J0 = f.jacobian(x, a, Wrt.X)
    spec = StratumSpec(k, f.arity_x, f.out_dim)
    corank = rank_decide(J0, policy or SEARCH_POLICY).corank
    if corank != k:
        raise PreconditionError(f"点不在 S^{k} 上（余秩为 {corank}）", {"x": x.tolist()})
    pivots = select_pivots(J0, k, policy or SEARCH_POLICY)

    def chart(point: np.ndarray) -> np.ndarray:
        return schur_stratum_chart(f.jacobian(point, a, Wrt.X), k, pivots).ravel()

    D = np.empty((spec.codim, spec.n))
    for i in range(spec.n):
        e = np.zeros(spec.n)
        e[i] = step
        D[:, i] = (chart(x + e) - chart(x - e)) / (2 * step)
    delta = spec.codim - rank_decide(D, CHART_POLICY).rank
    logger.debug_debug("层缺陷计算完成", extra_fields={"k": k, "codim": spec.codim, "delta": delta})
    return delta


# --- Morse ---
def _scalar(f: ExprMap) -> None:
    if f.out_dim != 1:
        raise PreconditionError(f"Morse 检查要求标量函数，实际输出维数为 {f.out_dim}")


def _newton_batch(f: ExprMap, X: np.ndarray, box: Box, a=None, iterations: int = 200) -> np.ndarray:
    """对一批起点同时做带回溯的阻尼 Newton，求 ∇f = 0"""
    lo, hi = box.lo, box.hi

    def gradient(points):
        return f.jacobian(points, a, Wrt.X)[:, 0, :]

    for _ in range(iterations):
        _, J, H = f.jet(X, a, Wrt.X, second_order=True)
        g, H = J[:, 0, :], H[:, 0]
        norms = np.linalg.norm(g, axis=-1)
        active = norms > 0.0
        if not np.any(active):
            break
        step = -np.einsum("nij,nj->ni", np.linalg.pinv(H[active]), g[active])
        current = X[active]
        best = current.copy()
        improved = np.zeros(len(current), dtype=bool)
        t = 1.0
        for _ in range(30):
            trial = np.clip(current + t * step, lo, hi)
            better = ~improved & (np.linalg.norm(gradient(trial), axis=-1) < norms[active])
            best[better] = trial[better]
            improved |= better
            if improved.all():
                break
            t *= 0.5
        X = X.copy()
        X[active] = best
        if not improved.any():
            break
    return X


def morse_check(f: ExprMap, box: Box, budget: Optional[int], seed: int, a=None,
                manager: Optional[TaskQueueManager] = None) -> MorseReport:
    """
    多起点 Newton 寻找临界点，逐个检查 Hessian 非退化

    缺省起点数为每单位盒体积 100 个。σ_min(H) 与盒上 Hessian 的最大谱范数比较，
    Hessian 的判定不受 f 整体尺度影响。判定 MORSE 只说明找到的临界点都非退化。
    """
    _scalar(f)
    starts = budget or max(16, math.ceil(100 * box.volume))
    manager = manager or get_task_manager()
    chunks = [min(CHUNK, starts - i) for i in range(0, starts, CHUNK)]

    def run(rng: np.random.Generator, index: int) -> np.ndarray:
        return _newton_batch(f, box.sample(rng, chunks[index]), box, a)

    X = np.vstack(manager.map_seeded(run, len(chunks), seed, label="morse"))
    _, J, H = f.jet(X, a, Wrt.X, second_order=True)
    grad_norms = np.linalg.norm(J[:, 0, :], axis=-1)
    _, J_box, H_box = f.jet(box.sample(substream(seed, len(chunks)), HESSIAN_SAMPLES), a, Wrt.X, second_order=True)
    gradient_scale = float(np.max(np.linalg.norm(J_box[:, 0, :], axis=-1), initial=0.0))
    found = (grad_norms <= GRADIENT_TOL * gradient_scale) & box.contains(X)
    scale = float(np.max(np.linalg.norm(H_box[:, 0], ord=2, axis=(-2, -1)), initial=0.0))
    if np.any(found):
        scale = max(scale, float(np.max(np.linalg.norm(H[found, 0], ord=2, axis=(-2, -1)))))
    threshold = HESSIAN_TOL * scale

    points: list[CriticalPoint] = []
    for i in np.flatnonzero(found):
        if any(np.max(np.abs(X[i] - np.asarray(c.x))) < 1e-6 for c in points):
            continue
        sigma = np.linalg.svd(H[i, 0], compute_uv=False)
        points.append(CriticalPoint(
            x=X[i].tolist(), gradient_norm=float(grad_norms[i]), hessian_det=float(np.linalg.det(H[i, 0])),
            hessian_sigma_min=float(sigma[-1]), nondegenerate=bool(sigma[-1] > threshold),
        ))
    points.sort(key=lambda c: c.x)
    degenerate = [c for c in points if not c.nondegenerate]
    verdict = "NOT_MORSE" if degenerate else "MORSE"
    logger.debug_info("Morse 检查完成", extra_fields={
        "starts": starts, "critical_points": len(points), "verdict": verdict, "hessian_threshold": threshold
    })
    return MorseReport(verdict=verdict, critical_points=points, degenerate_witnesses=degenerate, starts=starts)


# --- 余秩见证 ---
def _kernel_system(f: ExprMap, n: int, k: int, a, left: bool):
    def residual(z: np.ndarray) -> np.ndarray:
        J = f.jacobian(z[:n], a, Wrt.X)
        V = z[n:].reshape(-1, k)
        product = V.T @ J if left else J @ V
        gram = V.T @ V - np.eye(k)
        return np.concatenate([product.ravel(), gram[np.triu_indices(k)]])
    return residual


def corank_witness(f: ExprMap, x0, k: int, box: Box, a=None,
                   policy: Optional[TolPolicy] = None) -> Optional[CorankWitness]:
    """
    从 x0 出发求解 J(x)·V = 0、VᵀV = I（V 取在较小的一侧），得到余秩 ≥ k 的点

    Returns:
        CorankWitness；细化后的点不在盒内或余秩 < k 时返回 None
    """
    policy = policy or SEARCH_POLICY
    n, ell = f.arity_x, f.out_dim
    x0 = np.clip(np.atleast_1d(np.asarray(x0, dtype=float)), box.lo, box.hi)
    left = n > ell
    J0 = f.jacobian(x0, a, Wrt.X)
    u, _, vt = np.linalg.svd(J0, full_matrices=True)
    V0 = u[:, -k:] if left else vt[-k:].T
    size = V0.size
    inf = np.full(size, np.inf)
    try:
        sol = least_squares(_kernel_system(f, n, k, a, left), np.concatenate([x0, V0.ravel()]),
                            bounds=(np.concatenate([box.lo, -inf]), np.concatenate([box.hi, inf])),
                            method="trf", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=200)
    except (EvaluationError, ValueError, np.linalg.LinAlgError):
        return None
    x = sol.x[:n]
    if not box.contains(x, 1e-12):
        return None
    decision = rank_decide(f.jacobian(x, a, Wrt.X), policy)
    if decision.corank < k:
        return None
    sigma_min = decision.singular_values[-1] if decision.singular_values else 0.0
    return CorankWitness(x=x.tolist(), corank=decision.corank, sigma_min=float(sigma_min))


def _samples(box: Box, budget: int, rng: np.random.Generator) -> np.ndarray:
    per_axis = max(2, int(round(budget ** (1.0 / box.dim))))
    grid = box.grid(per_axis)
    return np.vstack([grid, box.sample(rng, budget)])


def _dedupe(witnesses: list[CorankWitness]) -> list[CorankWitness]:
    kept: list[CorankWitness] = []
    for w in witnesses:
        if not any(np.max(np.abs(np.subtract(w.x, c.x))) < 1e-8 for c in kept):
            kept.append(w)
    return sorted(kept, key=lambda w: (-w.corank, w.x))


def _search_corank(f: ExprMap, box: Box, budget: int, seed: int, ks: list[int], refine: int, a,
                   policy: TolPolicy, manager: TaskQueueManager):
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
    X = _samples(box, budget, rng)
    ranks, sigma = batch_rank(f.jacobian(X, a, Wrt.X), policy)
    v = min(f.arity_x, f.out_dim)
    coranks = v - ranks
    jobs = []
    for k in ks:
        # 第 k 小的奇异值越小，越接近余秩 k
        order = np.argsort(sigma[:, v - k], kind="stable")
        jobs.extend((k, X[i]) for i in order[:refine])
    found = manager.map(lambda _, job: corank_witness(f, job[1], job[0], box, a, policy), jobs, label="corank")
    return X, coranks, sigma, _dedupe([w for w in found if w is not None])


def immersion_check(f: ExprMap, box: Box, budget: int, seed: int, a=None, refine: int = 8,
                    policy: Optional[TolPolicy] = None,
                    manager: Optional[TaskQueueManager] = None) -> ImmersionReport:
    """多起点最小化 σ_min(Jf)，降到秩容差以下即为非浸入见证"""
    if f.out_dim < f.arity_x:
        raise PreconditionError("浸入要求 ℓ ≥ n", {"n": f.arity_x, "ell": f.out_dim})
    policy = policy or SEARCH_POLICY
    X, coranks, sigma, witnesses = _search_corank(f, box, budget, seed, [1], refine, a, policy,
                                                  manager or get_task_manager())
    sigma_min = min([float(np.min(sigma[:, -1]))] + [w.sigma_min for w in witnesses])
    if np.any(coranks > 0) and not witnesses:
        i = int(np.argmax(coranks))
        witnesses = [CorankWitness(x=X[i].tolist(), corank=int(coranks[i]), sigma_min=float(sigma[i, -1]))]
    verdict = "NOT_IMMERSION" if witnesses else "IMMERSION"
    logger.debug_info("浸入检查完成", extra_fields={"verdict": verdict, "witnesses": len(witnesses)})
    return ImmersionReport(verdict=verdict, corank_witnesses=witnesses, min_singular_value=sigma_min,
                           starts=budget)


def whitney_umbrella_check(f: ExprMap, x, a=None) -> UmbrellaReport:
    """
    x 是否为 Whitney 伞奇点：余秩 1 且 j¹f 在 x 处与 S¹ 横截

    Raises:
        PreconditionError: f 不是 R^n → R^{2n−1}，或 x 处余秩不为 1
    """
    n = f.arity_x
    if f.out_dim != 2 * n - 1:
        raise PreconditionError(f"Whitney 伞检查要求 f: R^{n} → R^{2 * n - 1}，实际输出维数为 {f.out_dim}")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    corank = rank_decide(f.jacobian(x, a, Wrt.X), SEARCH_POLICY).corank
    if corank != 1:
        raise PreconditionError(f"x 不是余秩 1 奇点（余秩为 {corank}）", {"x": x.tolist()})
    delta = stratum_defect(f, 1, x, a)
    return UmbrellaReport(is_umbrella=delta == 0, x=x.tolist(), stratum_defect=delta,
                          codim=stratum_codim(n, f.out_dim, 1))


def corank_survey(f: ExprMap, box: Box, budget: int, seed: int, a=None, target_k: Optional[int] = None,
                  refine: int = 4, policy: Optional[TolPolicy] = None,
                  manager: Optional[TaskQueueManager] = None) -> CorankSurvey:
    """
    采样统计 Jf 的余秩分布，并对每个 k（或只对 target_k）做见证细化

    Returns:
        CorankSurvey，max_corank 取样本与见证中的最大余秩
    """
    policy = policy or SEARCH_POLICY
    v = min(f.arity_x, f.out_dim)
    ks = [target_k] if target_k is not None else list(range(1, v + 1))
    for k in ks:
        if not 1 <= k <= v:
            raise InvalidRegimeError(f"余秩 k={k} 超出范围 [1, {v}]")
    X, coranks, _, witnesses = _search_corank(f, box, budget, seed, ks, refine, a, policy,
                                              manager or get_task_manager())
    values, counts = np.unique(coranks, return_counts=True)
    histogram = {int(c): int(m) for c, m in zip(values, counts)}
    max_corank = max([int(coranks.max())] + [w.corank for w in witnesses])
    return CorankSurvey(histogram=histogram, max_corank=max_corank, witnesses=witnesses, samples=len(X))
