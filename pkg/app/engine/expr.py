"""
表达式映射模块
~~~~~~~~~~~~~

解析用户定义的多元映射与参数族，支持批量求值以及基于 Jet 的一阶、二阶精确导数。

文法：
    program   := '[' expr ((',' | ';') expr)* ']' | expr (';' expr)*
    expr      := term (('+' | '-') term)*
    term      := unary (('*' | '/') unary)*
    unary     := ('-' | '+') unary | power
    power     := atom ('^' 整数)?
    atom      := 数字 | x<i> | a<j> | pi | 函数 '(' expr ')' | '(' expr ')'

函数：sin cos exp log sqrt abs。
"""

import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from . import dual
from .dual import Jet
from .errors import ArityError, ExprSyntaxError, UnknownIdentifierError


class Wrt(str, Enum):
    """求导变量的选择"""
    X = "X"
    A = "A"
    XA = "XA"


# --- 表达式树节点 ---
@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    kind: str  # 'x' 或 'a'
    index: int  # 从1开始


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class Bin:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: int


@dataclass(frozen=True)
class Call:
    name: str
    arg: "Node"


Node = Union[Num, Var, Neg, Bin, Pow, Call]

_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2}


# --- 词法分析 ---
_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<number>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),;\[\]−])
""", re.VERBOSE)

_VAR_RE = re.compile(r"([xa])(\d+)$")


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    pos: int


def _tokenize(source: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(source):
        match = _TOKEN_RE.match(source, pos)
        if match is None:
            raise ExprSyntaxError(f"非法字符 '{source[pos]}'", pos, source)
        kind = match.lastgroup
        if kind != "ws":
            text = match.group()
            if text == "−":
                text = "-"
            tokens.append(_Token(kind, text, pos))
        pos = match.end()
    tokens.append(_Token("eof", "", len(source)))
    return tokens


class _Parser:
    """递归下降解析器"""

    def __init__(self, source: str, arity_x: int, arity_a: int):
        self.source = source
        self.arity_x = arity_x
        self.arity_a = arity_a
        self.tokens = _tokenize(source)
        self.i = 0

    @property
    def current(self) -> _Token:
        return self.tokens[self.i]

    def _advance(self) -> _Token:
        token = self.tokens[self.i]
        self.i += 1
        return token

    def _fail(self, token: _Token, message: Optional[str] = None) -> ExprSyntaxError:
        if message is None:
            message = "意外的输入结尾" if token.kind == "eof" else f"意外的符号 '{token.text}'"
        return ExprSyntaxError(message, token.pos, self.source)

    def _expect(self, text: str) -> _Token:
        token = self.current
        if token.kind != "op" or token.text != text:
            raise self._fail(token, None if token.kind == "eof" else f"此处应为 '{text}'")
        return self._advance()

    def _is_op(self, *texts: str) -> bool:
        return self.current.kind == "op" and self.current.text in texts

    def parse_program(self) -> list[Node]:
        if self._is_op("["):
            self._advance()
            components = [self.parse_expr()]
            while self._is_op(",", ";"):
                self._advance()
                components.append(self.parse_expr())
            self._expect("]")
        else:
            components = [self.parse_expr()]
            while self._is_op(";"):
                self._advance()
                components.append(self.parse_expr())
        if self.current.kind != "eof":
            raise self._fail(self.current)
        return components

    def parse_expr(self) -> Node:
        node = self.parse_term()
        while self._is_op("+", "-"):
            op = self._advance().text
            node = Bin(op, node, self.parse_term())
        return node

    def parse_term(self) -> Node:
        node = self.parse_unary()
        while self._is_op("*", "/"):
            op = self._advance().text
            node = Bin(op, node, self.parse_unary())
        return node

    def parse_unary(self) -> Node:
        if self._is_op("-"):
            self._advance()
            return Neg(self.parse_unary())
        if self._is_op("+"):
            self._advance()
            return self.parse_unary()
        return self.parse_power()

    def parse_power(self) -> Node:
        base = self.parse_atom()
        if self._is_op("^"):
            self._advance()
            base = Pow(base, self._parse_exponent())
            if self._is_op("^"):
                raise self._fail(self.current, "不支持连续乘方，请加括号")
        return base

    def _parse_exponent(self) -> int:
        parenthesized = self._is_op("(")
        if parenthesized:
            self._advance()
        sign = 1
        if self._is_op("-", "+"):
            sign = -1 if self._advance().text == "-" else 1
        token = self.current
        if token.kind != "number" or not token.text.isdigit():
            raise self._fail(token, "指数必须是整数常量")
        self._advance()
        if parenthesized:
            self._expect(")")
        return sign * int(token.text)

    def parse_atom(self) -> Node:
        token = self.current
        if token.kind == "number":
            self._advance()
            return Num(float(token.text))
        if token.kind == "ident":
            self._advance()
            return self._identifier(token)
        if self._is_op("("):
            self._advance()
            node = self.parse_expr()
            self._expect(")")
            return node
        raise self._fail(token)

    def _identifier(self, token: _Token) -> Node:
        name = token.text
        if name in dual.FUNCTIONS:
            self._expect("(")
            arg = self.parse_expr()
            self._expect(")")
            return Call(name, arg)
        if name == "pi":
            return Num(math.pi)
        match = _VAR_RE.match(name)
        if match is None:
            raise UnknownIdentifierError(f"未知标识符 '{name}' (位置 {token.pos})",
                                         {"identifier": name, "position": token.pos})
        kind, index = match.group(1), int(match.group(2))
        bound = self.arity_x if kind == "x" else self.arity_a
        if not 1 <= index <= bound:
            raise ArityError(f"变量 {name} 超出元数范围 (位置 {token.pos}, 上限 {kind}{bound})",
                             {"identifier": name, "position": token.pos})
        return Var(kind, index)


# --- 打印 ---
def to_source(node: Node) -> str:
    """把表达式树打印成可再次解析的文本"""
    return _print(node, 0)


def _print(node: Node, parent: int) -> str:
    if isinstance(node, Num):
        text = repr(float(node.value))
        return f"({text})" if node.value < 0 else text
    if isinstance(node, Var):
        return f"{node.kind}{node.index}"
    if isinstance(node, Call):
        return f"{node.name}({_print(node.arg, 0)})"
    if isinstance(node, Neg):
        text = "-" + _print(node.operand, 3)
        return f"({text})" if parent >= 3 else text
    if isinstance(node, Pow):
        exponent = str(node.exponent) if node.exponent >= 0 else f"({node.exponent})"
        text = f"{_print(node.base, 5)}^{exponent}"
        return f"({text})" if parent >= 5 else text
    prec = _PRECEDENCE[node.op]
    # 右操作数同级时加括号，保持左结合语义
    text = f"{_print(node.left, prec)} {node.op} {_print(node.right, prec + 1)}"
    return f"({text})" if prec < parent else text


# --- 求值 ---
def _evaluate(node: Node, env: dict[tuple[str, int], dual.Number]) -> dual.Number:
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return env[(node.kind, node.index)]
    if isinstance(node, Neg):
        return -_evaluate(node.operand, env)
    if isinstance(node, Pow):
        return dual.power(_evaluate(node.base, env), node.exponent)
    if isinstance(node, Call):
        return dual.FUNCTIONS[node.name](_evaluate(node.arg, env))
    left = _evaluate(node.left, env)
    right = _evaluate(node.right, env)
    if node.op == "+":
        return left + right
    if node.op == "-":
        return left - right
    if node.op == "*":
        return left * right
    return dual.divide(left, right)


def _linear_node(coefficients: Iterable[float], offset: float = 0.0, kind: str = "x") -> Node:
    node: Optional[Node] = None
    for j, c in enumerate(coefficients, start=1):
        if c == 0.0:
            continue
        term: Node = Var(kind, j) if c == 1.0 else Bin("*", Num(float(c)), Var(kind, j))
        node = term if node is None else Bin("+", node, term)
    if offset != 0.0 or node is None:
        node = Num(float(offset)) if node is None else Bin("+", node, Num(float(offset)))
    return node


def _substitute(node: Node, mapping: dict[tuple[str, int], Node]) -> Node:
    if isinstance(node, Var):
        return mapping.get((node.kind, node.index), node)
    if isinstance(node, Num):
        return node
    if isinstance(node, Neg):
        return Neg(_substitute(node.operand, mapping))
    if isinstance(node, Pow):
        return Pow(_substitute(node.base, mapping), node.exponent)
    if isinstance(node, Call):
        return Call(node.name, _substitute(node.arg, mapping))
    return Bin(node.op, _substitute(node.left, mapping), _substitute(node.right, mapping))


class ExprMap:
    """
    参数化映射 F: R^n × R^p → R^q，由表达式树列表描述。

    构造后不可变，求值与求导都是纯函数，可在多个工作线程中并发调用。
    """

    def __init__(self, components: Sequence[Node], arity_x: int, arity_a: int = 0):
        if arity_x < 0 or arity_a < 0:
            raise ArityError("元数不能为负")
        if not components:
            raise ArityError("映射至少需要一个分量")
        self.components: tuple[Node, ...] = tuple(components)
        self.arity_x = arity_x
        self.arity_a = arity_a

    @property
    def out_dim(self) -> int:
        return len(self.components)

    def __repr__(self) -> str:
        return f"ExprMap(n={self.arity_x}, p={self.arity_a}, {self.to_source()})"

    def to_source(self) -> str:
        return "[" + ", ".join(to_source(c) for c in self.components) + "]"

    # --- 构造 ---
    @classmethod
    def identity(cls, n: int) -> "ExprMap":
        return cls([Var("x", i) for i in range(1, n + 1)], n, 0)

    @classmethod
    def linear(cls, matrix: np.ndarray, arity_a: int = 0) -> "ExprMap":
        """x ↦ M·x"""
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        return cls([_linear_node(row) for row in matrix], matrix.shape[1], arity_a)

    def plus(self, other: "ExprMap") -> "ExprMap":
        if other.out_dim != self.out_dim or other.arity_x != self.arity_x:
            raise ArityError("相加的两个映射维数不一致")
        arity_a = max(self.arity_a, other.arity_a)
        return ExprMap([Bin("+", f, g) for f, g in zip(self.components, other.components)],
                       self.arity_x, arity_a)

    def plus_linear(self, matrix: np.ndarray) -> "ExprMap":
        """加上线性扰动 π(x) = M·x，M 的形状为 (q, n)"""
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        if matrix.shape != (self.out_dim, self.arity_x):
            raise ArityError(f"扰动矩阵形状应为 {(self.out_dim, self.arity_x)}，实际为 {matrix.shape}")
        return self.plus(ExprMap.linear(matrix, self.arity_a))

    def compose_affine(self, matrix: np.ndarray, offset: Optional[np.ndarray] = None) -> "ExprMap":
        """返回 y ↦ F(M·y + b, a)"""
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        if matrix.shape[0] != self.arity_x:
            raise ArityError("仿射变换的输出维数必须等于映射的 arity_x")
        offset = np.zeros(self.arity_x) if offset is None else np.asarray(offset, dtype=float)
        mapping = {("x", i + 1): _linear_node(matrix[i], offset[i]) for i in range(self.arity_x)}
        return ExprMap([_substitute(c, mapping) for c in self.components], matrix.shape[1], self.arity_a)

    def bind_parameters(self, a: Sequence[float]) -> "ExprMap":
        """固定参数 a，得到截面映射 F_a"""
        a = np.atleast_1d(np.asarray(a, dtype=float))
        if a.shape != (self.arity_a,):
            raise ArityError(f"参数长度应为 {self.arity_a}，实际为 {a.shape[0]}")
        mapping = {("a", j + 1): Num(float(v)) for j, v in enumerate(a)}
        return ExprMap([_substitute(c, mapping) for c in self.components], self.arity_x, 0)

    def select(self, indices: Sequence[int]) -> "ExprMap":
        """取出部分分量（从0开始编号）"""
        return ExprMap([self.components[i] for i in indices], self.arity_x, self.arity_a)

    def stack(self, other: "ExprMap") -> "ExprMap":
        if other.arity_x != self.arity_x:
            raise ArityError("拼接的两个映射 arity_x 不一致")
        return ExprMap(self.components + other.components, self.arity_x,
                       max(self.arity_a, other.arity_a))

    # --- 求值 ---
    def _inputs(self, x, a) -> tuple[np.ndarray, np.ndarray, tuple]:
        x = np.asarray(x, dtype=float)
        if x.ndim == 0:
            x = x.reshape(1)
        if x.shape[-1] != self.arity_x or x.ndim > 2:
            raise ArityError(f"x 的长度应为 {self.arity_x}，实际形状为 {x.shape}")
        batch = x.shape[:-1]
        if a is None:
            a = np.zeros(batch + (self.arity_a,))
            if self.arity_a:
                raise ArityError(f"该映射需要 {self.arity_a} 个参数")
        a = np.asarray(a, dtype=float)
        if a.ndim == 0:
            a = a.reshape(1)
        if a.shape[-1] != self.arity_a or a.ndim > 2:
            raise ArityError(f"a 的长度应为 {self.arity_a}，实际形状为 {a.shape}")
        batch = np.broadcast_shapes(batch, a.shape[:-1])
        x = np.broadcast_to(x, batch + (self.arity_x,))
        a = np.broadcast_to(a, batch + (self.arity_a,))
        return x, a, batch

    def _environment(self, x: np.ndarray, a: np.ndarray, wrt: Optional[Wrt],
                     second_order: bool) -> dict[tuple[str, int], dual.Number]:
        n, p = self.arity_x, self.arity_a
        seeded = {None: (), Wrt.X: ("x",), Wrt.A: ("a",), Wrt.XA: ("x", "a")}[wrt]
        k = (n if "x" in seeded else 0) + (p if "a" in seeded else 0)
        env: dict[tuple[str, int], dual.Number] = {}
        slot = 0
        for kind, values, count in (("x", x, n), ("a", a, p)):
            for i in range(count):
                column = values[..., i]
                if kind in seeded:
                    env[(kind, i + 1)] = Jet.variable(column, slot, k, second_order)
                    slot += 1
                else:
                    env[(kind, i + 1)] = column
        return env

    def eval(self, x, a=None) -> np.ndarray:
        """分量求值，返回形状 (q,) 或 (N, q)"""
        x, a, batch = self._inputs(x, a)
        env = self._environment(x, a, None, False)
        values = [np.broadcast_to(np.asarray(_evaluate(c, env), dtype=float), batch)
                  for c in self.components]
        return np.stack(values, axis=-1)

    def jet(self, x, a=None, wrt: Union[Wrt, str] = Wrt.X,
            second_order: bool = False) -> tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
        """
        一次前向传播同时得到值、Jacobian 和（可选）Hessian

        Returns:
            (values (…,q), jacobian (…,q,k), hessians (…,q,k,k) 或 None)
        """
        wrt = Wrt(wrt)
        x, a, batch = self._inputs(x, a)
        env = self._environment(x, a, wrt, second_order)
        k = {Wrt.X: self.arity_x, Wrt.A: self.arity_a, Wrt.XA: self.arity_x + self.arity_a}[wrt]
        jets = []
        for component in self.components:
            result = _evaluate(component, env)
            if not isinstance(result, Jet):
                result = Jet.constant(result, batch, k, second_order)
            jets.append(result)
        values = np.stack([np.broadcast_to(j.value, batch) for j in jets], axis=-1)
        jac = np.stack([np.broadcast_to(j.grad, batch + (k,)) for j in jets], axis=-2)
        hess = None
        if second_order:
            hess = np.stack([np.broadcast_to(j.hess, batch + (k, k)) for j in jets], axis=-3)
        return values, jac, hess

    def jacobian(self, x, a=None, wrt: Union[Wrt, str] = Wrt.X) -> np.ndarray:
        return self.jet(x, a, wrt)[1]

    def hessians(self, x, a=None, wrt: Union[Wrt, str] = Wrt.X) -> np.ndarray:
        """每个输出分量一个 Hessian，形状 (q, k, k) 或 (N, q, k, k)"""
        return self.jet(x, a, wrt, second_order=True)[2]


def parse(source: str, arity_x: int, arity_a: int = 0, out_dim: Optional[int] = None) -> ExprMap:
    """
    解析映射源码

    Args:
        source: 分号分隔或方括号包围的分量表达式列表
        arity_x: 状态变量个数 n
        arity_a: 参数个数 p
        out_dim: 声明的输出维数（可选），与分量个数不一致时报错

    Raises:
        ExprSyntaxError: 语法错误，带出错位置
        UnknownIdentifierError: 未知标识符
        ArityError: 变量下标越界或输出维数不符
    """
    components = _Parser(source, arity_x, arity_a).parse_program()
    if out_dim is not None and len(components) != out_dim:
        raise ArityError(f"声明的输出维数为 {out_dim}，实际解析出 {len(components)} 个分量")
    return ExprMap(components, arity_x, arity_a)
