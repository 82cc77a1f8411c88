"""
维数估计
~~~~~~~

盒计数（Minkowski）维数作为 Hausdorff 维数的数值替代；盒维数是 Hausdorff 维数的上界，
因此"估计值 ≤ 阈值"仍是有意义的检查。另外提供测度零的统计探针。
"""

from typing import Optional

import numpy as np

from ..models.reports import BoxCountEstimate, ProbeResult, ScalePoint, SigmaDimensionReport
from ..models.scenario import ThresholdQuery
from ..models.validators import ScaleSpec, SearchSpec
from ..utils.logger import get_engine_logger
from ..utils.task_manager import TaskQueueManager, get_task_manager, substream
from .errors import InvalidRegimeError, PreconditionError
from .thresholds import genericity_threshold
from .transversality import FamilyProblem, defect_family_sup, sample_sigma

logger = get_engine_logger("dimension")

MIN_POINTS = 100
MAX_AMBIENT_DIM = 10


def _count_boxes(points: np.ndarray, origin: np.ndarray, epsilon: float) -> int:
    cells = np.floor((points - origin) / epsilon).astype(np.int64)
    return int(len(np.unique(cells, axis=0)))


def box_count(points, scale_spec: Optional[ScaleSpec] = None,
              manager: Optional[TaskQueueManager] = None) -> BoxCountEstimate:
    """
    盒计数维数

    网格锚定在点云包围盒的角上，在几何尺度阶梯上统计非空盒子数 N(ε)，
    对 log N(ε) 与 log(1/ε) 做最小二乘拟合。两端各丢弃 discard 层，
    盒数超过 saturation × 点数 的层视为采样饱和，也不参与拟合。
    斜率截断到 [0, 外围维数]，超出外围维数 0.1 以上时记录警告。

    Raises:
        PreconditionError: 点数少于 100
        InvalidRegimeError: 外围维数超过 10
    """
    scale_spec = scale_spec or ScaleSpec()
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    count, ambient = points.shape
    if count < MIN_POINTS:
        raise PreconditionError(f"盒计数至少需要 {MIN_POINTS} 个点，实际 {count} 个")
    if ambient > MAX_AMBIENT_DIM:
        raise InvalidRegimeError(f"不支持超过 {MAX_AMBIENT_DIM} 维的点云")

    origin = points.min(axis=0)
    diameter = float(np.linalg.norm(points.max(axis=0) - origin))
    if diameter == 0.0:
        return BoxCountEstimate(dimension=0.0, scales=[], fit_r2=1.0, ambient_dim=ambient, points=count)

    epsilons = scale_spec.epsilons(diameter)
    manager = manager or get_task_manager()
    counts = np.array(manager.map(lambda _, eps: _count_boxes(points, origin, eps), list(epsilons),
                                  label="box_count"))

    kept = np.arange(scale_spec.discard, len(epsilons) - scale_spec.discard)
    unsaturated = kept[counts[kept] <= scale_spec.saturation * count]
    if len(unsaturated) >= 3:
        kept = unsaturated
    else:
        kept = kept[:3]
    x = np.log(1.0 / epsilons[kept])
    y = np.log(counts[kept])
    slope, intercept = np.polyfit(x, y, 1)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum((y - (slope * x + intercept)) ** 2))
    fit_r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot

    if slope > ambient + 0.1:
        logger.service_warning("盒计数斜率超过外围维数，按外围维数截断", extra_fields={
            "slope": round(float(slope), 4), "ambient_dim": ambient
        })
    estimate = BoxCountEstimate(
        dimension=float(np.clip(slope, 0.0, ambient)),
        scales=[ScalePoint(epsilon=float(e), count=int(c)) for e, c in zip(epsilons, counts)],
        fit_r2=fit_r2, ambient_dim=ambient, points=count,
    )
    logger.debug_info("盒计数完成", extra_fields={
        "points": count, "dimension": round(estimate.dimension, 4), "fit_levels": len(kept)
    })
    return estimate


def cantor_cloud(depth: int) -> np.ndarray:
    """三分 Cantor 集第 depth 层各区间的左端点，形状 (2^depth, 1)"""
    if depth < 1:
        raise PreconditionError("depth 必须为正")
    points = np.zeros(1)
    for level in range(1, depth + 1):
        points = np.concatenate([points, points + 2.0 * 3.0 ** -level])
    return np.sort(points)[:, None]


def segment_cloud(count: int, seed: int, start=(0.0, 0.0), end=(1.0, 1.0)) -> np.ndarray:
    """线段 [start, end] 上的均匀随机点"""
    start, end = np.asarray(start, dtype=float), np.asarray(end, dtype=float)
    t = substream(seed, 0).random(count)[:, None]
    return start + t * (end - start)


def product_cloud(first: np.ndarray, second: np.ndarray, count: Optional[int] = None, seed: int = 0) -> np.ndarray:
    """
    两个点云的乘积

    count 为 None 时返回完整笛卡尔积，否则随机抽取 count 对
    """
    first, second = np.atleast_2d(first), np.atleast_2d(second)
    if first.shape[0] == 1 and first.shape[1] > 1:
        first = first.T
    if second.shape[0] == 1 and second.shape[1] > 1:
        second = second.T
    if count is None:
        i, j = np.meshgrid(np.arange(len(first)), np.arange(len(second)), indexing="ij")
        i, j = i.ravel(), j.ravel()
    else:
        rng = substream(seed, 0)
        i, j = rng.integers(0, len(first), count), rng.integers(0, len(second), count)
    return np.hstack([first[i], second[j]])


def measure_zero_probe(P: FamilyProblem, trials: int, seed: int, search: Optional[SearchSpec] = None,
                       manager: Optional[TaskQueueManager] = None) -> ProbeResult:
    """
    在 A_box 中均匀抽取参数，统计在缺省预算下找到非横截见证的比例

    与不投影的 Σ 采样相同：第 i 次试验的参数取自 substream(seed, i)。
    """
    if trials < 1:
        raise PreconditionError("trials 必须 ≥ 1")
    hits = len(sample_sigma(P, trials, seed, refine=False, search=search, manager=manager).points)
    logger.service_info("测度零探针完成", extra_fields={"problem": P.name, "trials": trials, "hits": hits})
    return ProbeResult(trials=trials, hit_count=hits, hit_fraction=hits / trials)


def sigma_dimension_report(P: FamilyProblem, budget: int, seed: int, scale_spec: Optional[ScaleSpec] = None,
                           search: Optional[SearchSpec] = None, refine: bool = True,
                           manager: Optional[TaskQueueManager] = None) -> SigmaDimensionReport:
    """
    采样 Σ → 盒计数，并附上主定理给出的阈值

    Σ 采样为空或点数不足时 estimate 为 None。
    """
    sup = defect_family_sup(P, search)
    threshold = genericity_threshold(ThresholdQuery(kind="main1", dim_a=P.p, delta_star=sup.delta_star, r=P.r))
    sample = sample_sigma(P, budget, seed, refine=refine, search=search, manager=manager)
    points = np.asarray(sample.points, dtype=float)
    estimate, note = None, ""
    if len(points) == 0:
        note = "Σ 采样为空，与测度零一致，维数未定义"
    elif len(points) < MIN_POINTS:
        note = f"Σ 采样只有 {len(points)} 个点，不足以做盒计数"
    else:
        estimate = box_count(points, scale_spec, manager)
    return SigmaDimensionReport(estimate=estimate, threshold=threshold, sample_size=len(points),
                                delta_star=sup.delta_star, note=note)
