"""
Hausdorff 指数阈值计算器
~~~~~~~~~~~~~~~~~~~~~~~

按各横截性定理给出坏集合 Σ 具有 s 维 Hausdorff 测度零的 s 的下界。
所有结果都是精确有理数（fractions.Fraction），并带有严格/非严格标志。
r 为 None 表示 C^∞ 情形。
"""

from fractions import Fraction
from typing import Callable, Optional

from ..models.reports import ThresholdBound
from ..models.scenario import ThresholdQuery
from ..utils.logger import get_engine_logger
from .errors import InvalidRegimeError
from .multipoint import diagonal_codim
from .strata import stratum_codim

logger = get_engine_logger("thresholds")


def _require_r(q: ThresholdQuery, minimum: int) -> None:
    if q.r is not None and q.r < minimum:
        raise InvalidRegimeError(f"{q.kind} 查询要求 r ≥ {minimum}，实际 r={q.r}")


def _graded(q: ThresholdQuery, base: int, exponent: int, divisor: Optional[int], branch: str) -> ThresholdBound:
    """
    通用两分支形式：

    exponent ≥ 0 时 s ≥ base − 1 + (exponent+1)/divisor，C^∞ 时 s > base − 1；
    exponent < 0 时 s > base + exponent，界为负时取 s ≥ 0。
    """
    if exponent >= 0:
        if divisor is None:
            return ThresholdBound.from_fraction(q, Fraction(base - 1), True, f"{branch}:smooth")
        bound = Fraction(base - 1) + Fraction(exponent + 1, divisor)
        return ThresholdBound.from_fraction(q, bound, False, f"{branch}:nonnegative",
                                            trivial=divisor < exponent + 1)
    bound = base + exponent
    if bound < 0:
        return ThresholdBound.from_fraction(q, Fraction(0), False, f"{branch}:negative")
    return ThresholdBound.from_fraction(q, Fraction(bound), True, f"{branch}:negative")


def _strict(q: ThresholdQuery, bound: int, branch: str) -> ThresholdBound:
    if bound < 0:
        return ThresholdBound.from_fraction(q, Fraction(0), False, branch)
    return ThresholdBound.from_fraction(q, Fraction(bound), True, branch)


def _main1(q: ThresholdQuery) -> ThresholdBound:
    return _graded(q, q.dim_a, q.delta_star, q.r, "main")


def _main2(q: ThresholdQuery) -> ThresholdBound:
    if q.delta_star >= 0:
        raise InvalidRegimeError("main2 只适用于 δ* < 0", {"delta_star": q.delta_star})
    return _strict(q, q.dim_a + q.delta_star, "main:negative")


def _jet(q: ThresholdQuery) -> ThresholdBound:
    _require_r(q, 2)
    exponent = q.n - stratum_codim(q.n, q.ell, q.k)
    return _graded(q, q.m * q.ell, exponent, None if q.r is None else q.r - 1, "jet")


def _multipoint(q: ThresholdQuery) -> ThresholdBound:
    exponent = q.n * q.d - diagonal_codim(q.ell, q.d)
    return _graded(q, q.m * q.ell, exponent, q.r, "multipoint")


def _morse(q: ThresholdQuery) -> ThresholdBound:
    _require_r(q, 2)
    return _graded(q, q.m, 0, None if q.r is None else q.r - 1, "morse")


def _pareto(q: ThresholdQuery) -> ThresholdBound:
    if q.m < q.ell:
        raise InvalidRegimeError("pareto 查询要求 m ≥ ℓ", {"m": q.m, "ell": q.ell})
    margin = q.m - 2 * q.ell + 4
    if margin <= 0:
        raise InvalidRegimeError("pareto 查询要求 m − 2ℓ + 4 > 0", {"m": q.m, "ell": q.ell})
    return _strict(q, q.m * q.ell - margin, "pareto")


def _whitney(q: ThresholdQuery) -> ThresholdBound:
    if q.n < 2:
        raise InvalidRegimeError("Whitney 伞查询要求 n ≥ 2")
    return _strict(q, q.m * (2 * q.n - 1) - 1, "whitney")


def _immersion(q: ThresholdQuery) -> ThresholdBound:
    _require_r(q, 2)
    if q.ell < 2 * q.n:
        raise InvalidRegimeError("浸入查询要求 ℓ ≥ 2n", {"ell": q.ell, "n": q.n})
    return _strict(q, q.m * q.ell + 2 * q.n - q.ell - 1, "immersion")


def _injective_family(minimum_r: int) -> Callable[[ThresholdQuery], ThresholdBound]:
    def compute(q: ThresholdQuery) -> ThresholdBound:
        _require_r(q, minimum_r)
        if 2 * q.n >= q.ell:
            raise InvalidRegimeError(f"{q.kind} 查询要求 2n < ℓ", {"ell": q.ell, "n": q.n})
        return _strict(q, q.m * q.ell + 2 * q.n - q.ell, q.kind)
    return compute


def _corank(q: ThresholdQuery) -> ThresholdBound:
    """奇点余秩至多 k0，k0 为满足 codim S^k0 ≤ n 的最大整数"""
    _require_r(q, 2)
    v = min(q.n, q.ell)
    k0 = 0
    while k0 + 1 <= v and stratum_codim(q.n, q.ell, k0 + 1) <= q.n:
        k0 += 1
    if k0 >= v:
        raise InvalidRegimeError("所有余秩层的余维数都不超过 n，结论平凡", {"k0": k0})
    return _strict(q, q.m * q.ell + q.n - stratum_codim(q.n, q.ell, k0 + 1), f"corank:k0={k0}")


def _normal_crossings(q: ThresholdQuery) -> ThresholdBound:
    if not 2 <= q.d_f <= q.m + 1:
        raise InvalidRegimeError("d_f 必须满足 2 ≤ d_f ≤ m+1", {"d_f": q.d_f, "m": q.m})
    base = q.m * q.ell
    if q.r is None:
        return ThresholdBound.from_fraction(q, Fraction(base - 1), True, "normal_crossings:smooth")
    if q.n > q.ell:
        numerator, branch = q.d_f * (q.n - q.ell) + q.ell + 1, "normal_crossings:n>ell"
    elif q.ell <= 2 * q.n:
        numerator, branch = 2 * q.n - q.ell + 1, "normal_crossings:n<=ell<=2n"
    else:
        raise InvalidRegimeError("正规交叉查询要求 ℓ ≤ 2n（ℓ > 2n 时使用 injective 查询）")
    return ThresholdBound.from_fraction(q, Fraction(base - 1) + Fraction(numerator, q.r), False, branch)


_CALCULATORS: dict[str, Callable[[ThresholdQuery], ThresholdBound]] = {
    "main1": _main1,
    "main2": _main2,
    "jet": _jet,
    "multipoint": _multipoint,
    "morse": _morse,
    "pareto": _pareto,
    "whitney": _whitney,
    "immersion": _immersion,
    "injective": _injective_family(1),
    "injective_immersion": _injective_family(2),
    "embedding": _injective_family(1),
    "corank": _corank,
    "normal_crossings": _normal_crossings,
}


def genericity_threshold(query: ThresholdQuery) -> ThresholdBound:
    """
    计算阈值

    Args:
        query: 阈值查询

    Returns:
        ThresholdBound，value 为精确有理数界，strict 表示 s > bound

    Raises:
        InvalidRegimeError: 参数不在定理适用范围内（如 morse 且 r = 1）
    """
    try:
        bound = _CALCULATORS[query.kind](query)
    except InvalidRegimeError as e:
        logger.service_error(f"阈值查询无效: {e}", extra_fields={"kind": query.kind})
        raise
    logger.debug_info("阈值计算完成", extra_fields={"kind": query.kind, "bound": bound.text})
    return bound
