"""
问题注册表
~~~~~~~~~

具名的映射、参数族、多目标问题和点云，每个条目带有解析元数据（已知 Σ、δ*、阈值等）
以及对应结论的锚定短语，供命令行与回归测试使用。
"""

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Literal, Optional, Sequence

import numpy as np

from ..models.validators import Box
from .dimension import cantor_cloud, segment_cloud
from .errors import ConfigError, PreconditionError
from .expr import ExprMap, parse
from .pareto import MultiObjective
from .transversality import FamilyProblem, LevelSetSubmanifold

ProblemKind = Literal["family", "map", "multiobjective", "cloud"]


@dataclass(frozen=True)
class ProblemRegistryEntry:
    """
    注册表条目

    family 条目给出 F(x,a) 与 Z 的定义映射 h（变量写作 x1..xq）；map 条目给出
    可能带扰动参数 a 的映射；multiobjective 条目的参数在使用前绑定；cloud 条目给出点云生成器。
    """
    name: str
    kind: ProblemKind
    description: str
    anchor: str
    source: str = ""
    arity_x: int = 1
    arity_a: int = 0
    z_source: Optional[str] = None
    z_membership_tol: Optional[float] = None
    x_box: Optional[Box] = None
    a_box: Optional[Box] = None
    r: Optional[int] = None
    cloud: Optional[Callable[[], np.ndarray]] = None
    metadata: dict[str, Any] = field(default_factory=dict)

    def _require(self, *kinds: str) -> None:
        if self.kind not in kinds:
            raise PreconditionError(f"问题 {self.name} 的类型是 {self.kind}，此处需要 {'/'.join(kinds)}")

    def mapping(self) -> ExprMap:
        self._require("family", "map", "multiobjective")
        return parse(self.source, self.arity_x, self.arity_a)

    def family(self) -> FamilyProblem:
        self._require("family")
        F = self.mapping()
        Z = LevelSetSubmanifold.from_source(self.z_source, F.out_dim, self.z_membership_tol)
        return FamilyProblem(F, Z, self.x_box, self.a_box, name=self.name, r=self.r)

    def multiobjective(self, a: Optional[Sequence[float]] = None) -> MultiObjective:
        """绑定参数 a（缺省为零）后的多目标问题"""
        self._require("multiobjective")
        f = self.mapping()
        if f.arity_a:
            f = f.bind_parameters(np.zeros(f.arity_a) if a is None else a)
        return MultiObjective(f, self.x_box)

    def points(self) -> np.ndarray:
        self._require("cloud")
        return self.cloud()

    def listing(self) -> dict[str, Any]:
        return {"name": self.name, "kind": self.kind, "description": self.description, "anchor": self.anchor}


_UNIT_1 = Box.cube(1)
_UNIT_2 = Box.cube(2)
_UNIT_3 = Box.cube(3)

_ENTRIES = [
    ProblemRegistryEntry(
        name="ex-2-2", kind="family",
        description="F(x,a) = (0, a1²−a2²)，Z = {(0,0)}；W = R×{0}，Σ 为 a1 = ±a2 两条直线",
        anchor="F(x,a)=(0, a_1^2−a_2^2)",
        source="[0, a1^2 - a2^2]", arity_x=1, arity_a=2, z_source="[x1, x2]",
        x_box=_UNIT_1, a_box=_UNIT_2,
        metadata={"delta_family_sup": 2, "delta_star": 1, "sigma": "a1^2 = a2^2",
                  "sigma_dimension": 1.0, "threshold": {"kind": "main1", "bound": "1", "strict": True}},
    ),
    ProblemRegistryEntry(
        name="ex-2-3", kind="family",
        description="F(x,a) = (x+a1, x+a2)，Z = {0}；Σ 为对角线 a1 = a2",
        anchor="F(x,a)=(x+a_1,…,x+a_ℓ)",
        source="[x1 + a1, x1 + a2]", arity_x=1, arity_a=2, z_source="[x1, x2]",
        x_box=Box.cube(1, -3.0, 3.0), a_box=_UNIT_2,
        metadata={"delta_family_sup": 0, "delta_star": -1, "sigma": "a1 = a2",
                  "sigma_dimension": 1.0, "threshold": {"kind": "main2", "bound": "1", "strict": True}},
    ),
    ProblemRegistryEntry(
        name="ex-2-3-l3", kind="family",
        description="F(x,a) = (x+a1, x+a2, x+a3)，Z = {0}；Σ 为 a1 = a2 = a3",
        anchor="Σ(F,Z)={a | a_1=⋯=a_ℓ}",
        source="[x1 + a1, x1 + a2, x1 + a3]", arity_x=1, arity_a=3, z_source="[x1, x2, x3]",
        x_box=Box.cube(1, -3.0, 3.0), a_box=_UNIT_3,
        metadata={"delta_family_sup": 0, "delta_star": -2, "sigma": "a1 = a2 = a3",
                  "sigma_dimension": 1.0, "threshold": {"kind": "main2", "bound": "1", "strict": True}},
    ),
    ProblemRegistryEntry(
        name="ex-2-4-negative", kind="family",
        description="F ≡ 0 到 R³，Z = {(1,0,0)}；F 的像与 Z 不交，dim A + δ* = −1 < 0",
        anchor="there exists an example satisfying dim A+δ*(F,Z)<0",
        source="[0, 0, 0]", arity_x=1, arity_a=1, z_source="[x1 - 1, x2, x3]",
        x_box=_UNIT_1, a_box=_UNIT_1,
        metadata={"delta_family_sup": 0, "delta_star": -2, "sigma": "empty"},
    ),
    ProblemRegistryEntry(
        name="transverse-scalar", kind="family",
        description="F(x,a) = x + a，Z = {0}；每个截面都与 Z 横截，Σ 为空",
        anchor="δ(F_a, x, Z)=0",
        source="[x1 + a1]", arity_x=1, arity_a=1, z_source="[x1]",
        x_box=Box.cube(1, -2.0, 2.0), a_box=_UNIT_1,
        metadata={"delta_family_sup": 0, "delta_star": 0, "sigma": "empty"},
    ),
    ProblemRegistryEntry(
        name="morse-cubic", kind="map",
        description="g(x) = x³ 加线性扰动 π(x) = a·x；a = 0 时 x = 0 为退化临界点",
        anchor="g+π:R→R is not a Morse function",
        source="x1^3 + a1*x1", arity_x=1, arity_a=1, x_box=Box.cube(1, -2.0, 2.0), a_box=_UNIT_1, r=2,
        metadata={"bad_set": "a = 0", "degenerate_point": [0.0],
                  "threshold": {"kind": "morse", "m": 1, "r": 2, "bound": "1", "strict": False}},
    ),
    ProblemRegistryEntry(
        name="morse-cantor-proxy", kind="cloud",
        description="r = 2 时坏集合可以恰为 Cantor 集；这里只给出 Cantor 集点云与阈值元数据",
        anchor="we obtain Σ=K",
        cloud=lambda: cantor_cloud(12),
        metadata={"cantor_dimension": float(np.log(2) / np.log(3)),
                  "thresholds": {"r=2": str(Fraction(1)), "r=3": str(Fraction(1, 2))}},
    ),
    ProblemRegistryEntry(
        name="immersion-sigma-b", kind="map",
        description="g(x) = (x², x², x²) 加 π(x) = (a1 x, a2 x, a3 x)；非浸入当且仅当 a1 = a2 = a3，见证 x = −a/2",
        anchor="we obtain Σ=B",
        source="[x1^2 + a1*x1, x1^2 + a2*x1, x1^2 + a3*x1]", arity_x=1, arity_a=3,
        x_box=Box.cube(1, -2.0, 2.0), a_box=_UNIT_3,
        metadata={"bad_set": "a1 = a2 = a3", "witness": "x = -a/2",
                  "threshold": {"kind": "immersion", "m": 1, "ell": 3, "n": 1, "bound": "1", "strict": True}},
    ),
    ProblemRegistryEntry(
        name="whitney-normal-form", kind="map",
        description="Whitney 伞标准形 (x1², x1x2, x2)，原点处为伞奇点",
        anchor="singular point of Whitney umbrella",
        source="[x1^2, x1*x2, x2]", arity_x=2, x_box=_UNIT_2,
        metadata={"point": [0.0, 0.0], "is_umbrella": True},
    ),
    ProblemRegistryEntry(
        name="whitney-degenerate", kind="map",
        description="退化变体 (x1³, x1²x2, x2)，原点余秩 1 但 j¹f 不与 S¹ 横截",
        anchor="transverse to S^1(X,R^{2n−1})",
        source="[x1^3, x1^2*x2, x2]", arity_x=2, x_box=_UNIT_2,
        metadata={"point": [0.0, 0.0], "is_umbrella": False},
    ),
    ProblemRegistryEntry(
        name="parabola", kind="map",
        description="抛物线 x ↦ (x, x²)，单射浸入",
        anchor="g+π is injective",
        source="[x1, x1^2]", arity_x=1, x_box=_UNIT_1,
        metadata={"injective": True, "immersion": True},
    ),
    ProblemRegistryEntry(
        name="nodal-cubic", kind="map",
        description="结点三次曲线 x ↦ (x²−1, x(x²−1))，x = ±1 映到同一点",
        anchor="g+π is not injective",
        source="[x1^2 - 1, x1*(x1^2 - 1)]", arity_x=1, x_box=Box.cube(1, -2.0, 2.0),
        metadata={"injective": False, "double_point": [-1.0, 1.0]},
    ),
    ProblemRegistryEntry(
        name="circle-r3", kind="map",
        description="R³ 中的单位圆 θ ↦ (cos θ, sin θ, 0)，在一个坐标卡上采样",
        anchor="it follows that d_f=3",
        source="[cos(x1), sin(x1), 0]", arity_x=1, x_box=Box.cube(1, 0.0, 6.2),
        metadata={"d_f": 3},
    ),
    ProblemRegistryEntry(
        name="twisted-cubic", kind="map",
        description="扭三次曲线 x ↦ (x, x², x³)，像差仿射无关直到 d = m+1",
        anchor="2 ≤ d_f ≤ m+1",
        source="[x1, x1^2, x1^3]", arity_x=1, x_box=Box.cube(1, 0.0, 1.0),
        metadata={"d_f": 4},
    ),
    ProblemRegistryEntry(
        name="line-r2", kind="map",
        description="R² 中的直线 x ↦ (x, 2x)，三个像点总共线",
        anchor="2 ≤ d_f ≤ m+1",
        source="[x1, 2*x1]", arity_x=1, x_box=Box.cube(1, 0.0, 1.0),
        metadata={"d_f": 2},
    ),
    ProblemRegistryEntry(
        name="pareto-9-1", kind="multiobjective",
        description="f_i = x1²+x2² 加线性扰动 π_i(x) = (a_{2i−1}, a_{2i})·x；π1 = π2 时 Pareto 集退化为单点",
        anchor="X*(f+π) = {(−a1/2, −a2/2)}",
        source="[x1^2 + x2^2 + a1*x1 + a2*x2, x1^2 + x2^2 + a3*x1 + a4*x2]", arity_x=2, arity_a=4,
        x_box=_UNIT_2, a_box=Box.cube(4),
        metadata={"alpha": 2.0, "bad_set": "pi1 = pi2",
                  "threshold": {"kind": "pareto", "m": 2, "ell": 2, "bound": "2", "strict": True}},
    ),
    ProblemRegistryEntry(
        name="pareto-centroid", kind="multiobjective",
        description="f1 = ‖x−p‖²，f2 = ‖x−q‖²，p = (1,0)，q = (0,1)；x*(w) = w1 p + w2 q",
        anchor="Φ(Δ_I) = X*(f_I)",
        source="[(x1 - 1)^2 + x2^2, x1^2 + (x2 - 1)^2]", arity_x=2, x_box=Box.cube(2, -2.0, 2.0),
        metadata={"alpha": 2.0, "p": [1.0, 0.0], "q": [0.0, 1.0]},
    ),
    ProblemRegistryEntry(
        name="cantor-depth-12", kind="cloud",
        description="三分 Cantor 集第 12 层的 4096 个左端点",
        anchor="log 2/log 3 = 0.63⋯",
        cloud=lambda: cantor_cloud(12),
        metadata={"dimension": float(np.log(2) / np.log(3))},
    ),
    ProblemRegistryEntry(
        name="segment-r2", kind="cloud",
        description="R² 中线段 [(0,0),(1,1)] 上的 4096 个均匀点",
        anchor="does not have 1-dimensional Hausdorff measure zero",
        cloud=lambda: segment_cloud(4096, 0),
        metadata={"dimension": 1.0},
    ),
]

REGISTRY: dict[str, ProblemRegistryEntry] = {entry.name: entry for entry in _ENTRIES}


def get_entry(name: str) -> ProblemRegistryEntry:
    try:
        return REGISTRY[name]
    except KeyError:
        raise ConfigError(f"未知问题名称: {name}", {"available": sorted(REGISTRY)}) from None


def list_entries() -> list[ProblemRegistryEntry]:
    return [REGISTRY[name] for name in sorted(REGISTRY)]
