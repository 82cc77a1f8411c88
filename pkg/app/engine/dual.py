"""
二阶前向自动微分
~~~~~~~~~~~~~~~

Jet 保存函数值、梯度和（可选的）Hessian，所有量都支持批量维度：
value 形状为 B，grad 形状为 B+(k,)，hess 形状为 B+(k,k)。
与普通 numpy 数组、Python 浮点数混合运算时，后者视为常数。
"""

from typing import Callable, Optional, Union

import numpy as np

from .errors import EvaluationError

Scalar = Union[float, int, np.ndarray]


def _outer(g: np.ndarray, h: np.ndarray) -> np.ndarray:
    return g[..., :, None] * h[..., None, :]


class Jet:
    """截断到二阶的前向模式对偶数（DualNumber2）"""

    __slots__ = ("value", "grad", "hess")
    # 让 numpy 把混合运算交回给 Jet 的反射运算符
    __array_ufunc__ = None

    def __init__(self, value: Scalar, grad: np.ndarray, hess: Optional[np.ndarray] = None):
        self.value = np.asarray(value, dtype=float)
        self.grad = grad
        self.hess = hess

    @classmethod
    def variable(cls, value: Scalar, index: int, k: int, second_order: bool) -> "Jet":
        """
        创建第 index 个自变量的种子

        Args:
            value: 变量取值（可批量）
            index: 在被求导变量中的位置
            k: 被求导变量总数
            second_order: 是否携带 Hessian
        """
        value = np.asarray(value, dtype=float)
        grad = np.zeros(value.shape + (k,))
        grad[..., index] = 1.0
        hess = np.zeros(value.shape + (k, k)) if second_order else None
        return cls(value, grad, hess)

    @classmethod
    def constant(cls, value: Scalar, shape: tuple, k: int, second_order: bool) -> "Jet":
        value = np.broadcast_to(np.asarray(value, dtype=float), shape).copy()
        hess = np.zeros(shape + (k, k)) if second_order else None
        return cls(value, np.zeros(shape + (k,)), hess)

    @property
    def second_order(self) -> bool:
        return self.hess is not None

    def _chain(self, v: np.ndarray, d1: np.ndarray, d2: Optional[np.ndarray]) -> "Jet":
        """一元函数的链式法则：φ(u) 的值、一阶导 φ'(u)、二阶导 φ''(u)"""
        grad = d1[..., None] * self.grad
        hess = None
        if self.hess is not None:
            hess = d1[..., None, None] * self.hess
            if d2 is not None:
                hess = hess + d2[..., None, None] * _outer(self.grad, self.grad)
        return Jet(v, grad, hess)

    def __neg__(self) -> "Jet":
        return Jet(-self.value, -self.grad, None if self.hess is None else -self.hess)

    def __add__(self, other) -> "Jet":
        if isinstance(other, Jet):
            hess = None if self.hess is None else self.hess + other.hess
            return Jet(self.value + other.value, self.grad + other.grad, hess)
        return Jet(self.value + other, self.grad, self.hess)

    __radd__ = __add__

    def __sub__(self, other) -> "Jet":
        return self + (-other)

    def __rsub__(self, other) -> "Jet":
        return (-self) + other

    def __mul__(self, other) -> "Jet":
        if isinstance(other, Jet):
            u, w = self.value, other.value
            grad = u[..., None] * other.grad + w[..., None] * self.grad
            hess = None
            if self.hess is not None:
                hess = (u[..., None, None] * other.hess + w[..., None, None] * self.hess
                        + _outer(self.grad, other.grad) + _outer(other.grad, self.grad))
            return Jet(u * w, grad, hess)
        c = np.asarray(other, dtype=float)
        hess = None if self.hess is None else c[..., None, None] * self.hess
        return Jet(self.value * c, c[..., None] * self.grad, hess)

    __rmul__ = __mul__

    def reciprocal(self) -> "Jet":
        u = self.value
        if np.any(u == 0.0):
            raise EvaluationError("除数为零")
        inv = 1.0 / u
        return self._chain(inv, -inv * inv, 2.0 * inv ** 3)

    def __truediv__(self, other) -> "Jet":
        if isinstance(other, Jet):
            return self * other.reciprocal()
        c = np.asarray(other, dtype=float)
        if np.any(c == 0.0):
            raise EvaluationError("除数为零")
        return self * (1.0 / c)

    def __rtruediv__(self, other) -> "Jet":
        return self.reciprocal() * other

    def powi(self, n: int) -> "Jet":
        """整数次幂"""
        u = self.value
        if n == 0:
            return Jet.constant(1.0, u.shape, self.grad.shape[-1], self.second_order)
        if n < 0 and np.any(u == 0.0):
            raise EvaluationError("零的负整数次幂")
        v = u ** float(n)
        d1 = n * u ** float(n - 1)
        d2 = None
        if n != 1:
            d2 = n * (n - 1) * u ** float(n - 2)
        return self._chain(v, d1, d2)


Number = Union[Jet, np.ndarray, float]


def _check(condition: np.ndarray, message: str) -> None:
    if np.any(condition):
        raise EvaluationError(message)


def _unary(name: str, f: Callable, d1: Callable, d2: Callable, guard: Callable, message: str,
           jet_guard: Optional[Callable] = None) -> Callable[[Number], Number]:
    def apply(u: Number) -> Number:
        raw = u.value if isinstance(u, Jet) else np.asarray(u, dtype=float)
        _check(guard(raw), message)
        if not isinstance(u, Jet):
            return f(raw)
        if jet_guard is not None:
            _check(jet_guard(raw), f"{name} 在该点不可微")
        return u._chain(f(raw), d1(raw), d2(raw))

    apply.__name__ = name
    return apply


def _never(u: np.ndarray) -> np.ndarray:
    return np.zeros_like(u, dtype=bool)


sin = _unary("sin", np.sin, np.cos, lambda u: -np.sin(u), _never, "")
cos = _unary("cos", np.cos, lambda u: -np.sin(u), lambda u: -np.cos(u), _never, "")
exp = _unary("exp", np.exp, np.exp, np.exp, _never, "")
log = _unary("log", np.log, lambda u: 1.0 / u, lambda u: -1.0 / (u * u),
             lambda u: u <= 0.0, "对非正数取对数")
sqrt = _unary("sqrt", np.sqrt, lambda u: 0.5 / np.sqrt(u), lambda u: -0.25 / (u * np.sqrt(u)),
              lambda u: u < 0.0, "对负数开平方", jet_guard=lambda u: u == 0.0)
# abs 在 0 处取 sign(0)=0 作为导数
abs_ = _unary("abs", np.abs, np.sign, np.zeros_like, _never, "")

FUNCTIONS: dict[str, Callable[[Number], Number]] = {
    "sin": sin,
    "cos": cos,
    "exp": exp,
    "log": log,
    "sqrt": sqrt,
    "abs": abs_,
}


def power(base: Number, n: int) -> Number:
    if isinstance(base, Jet):
        return base.powi(n)
    raw = np.asarray(base, dtype=float)
    if n < 0:
        _check(raw == 0.0, "零的负整数次幂")
    return raw ** float(n)


def divide(a: Number, b: Number) -> Number:
    if isinstance(a, Jet) or isinstance(b, Jet):
        return a / b
    b = np.asarray(b, dtype=float)
    _check(b == 0.0, "除数为零")
    return np.asarray(a, dtype=float) / b
