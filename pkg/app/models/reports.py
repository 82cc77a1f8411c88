"""
结果报告模型
~~~~~~~~~~~

所有需要序列化到 JSON 报告的结果类型。报告中只出现确定性数据（不含时间戳、进程号），
相同配置与种子得到逐字节相同的输出。
"""

from enum import Enum
from fractions import Fraction
from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .scenario import ThresholdQuery
from .validators import Box

SCHEMA_VERSION = "1.0"


class ReportModel(BaseModel):
    model_config = ConfigDict(frozen=True)


# --- linalg ---
class RankDecision(ReportModel):
    """数值秩判定"""
    rank: int = Field(..., ge=0)
    corank: int = Field(..., ge=0)
    singular_values: list[float] = Field(..., description="降序奇异值")
    tolerance_used: float

    @model_validator(mode="after")
    def validate_rank(self):
        if self.rank + self.corank != len(self.singular_values):
            raise ValueError("rank + corank 必须等于 min(rows, cols)")
        return self


# --- transversality ---
class Classification(str, Enum):
    NOT_ON_Z = "NOT_ON_Z"
    TRANSVERSE = "TRANSVERSE"
    IN_W = "IN_W"
    IN_W_TILDE = "IN_W_TILDE"


class DefectReport(ReportModel):
    """族上一点的横截缺陷"""
    delta_section: int = Field(..., ge=0, description="δ(F_a,x,Z)")
    delta_family: int = Field(..., ge=0, description="δ(F,(x,a),Z)")
    classification: Classification
    witness_x: list[float]
    witness_a: list[float]
    residual: float = Field(..., description="‖h(F(x,a))‖∞")

    @model_validator(mode="after")
    def validate_labels(self):
        if self.delta_section < self.delta_family:
            raise ValueError("截面缺陷不能小于族缺陷")
        if self.classification == Classification.IN_W and not (
                self.delta_section == self.delta_family > 0):
            raise ValueError("IN_W 要求 δ_section = δ_family > 0")
        if self.classification == Classification.IN_W_TILDE and not (
                self.delta_section > self.delta_family):
            raise ValueError("IN_W_TILDE 要求 δ_section > δ_family")
        return self


class DefectSupReport(ReportModel):
    """δ(F,Z) 的采样下界"""
    sup: int = Field(..., ge=0, description="采样得到的 δ(F,Z)（下界）")
    lower_bound: bool = Field(True, description="结果只是上确界的下界")
    samples: int
    intersection_found: bool = Field(..., description="是否找到 F(U)∩Z 中的点")
    argmax_x: Optional[list[float]] = None
    argmax_a: Optional[list[float]] = None
    delta_star: int = Field(..., description="n − c + sup")
    x_box: Box
    a_box: Box


class SigmaSample(ReportModel):
    """Σ(F,Z) 的采样点云"""
    points: list[list[float]]
    witnesses: list[list[float]] = Field(..., description="每个 Σ 点对应的 x 见证")
    budget: int
    refined: bool
    a_box: Box


class ThresholdBound(ReportModel):
    """精确有理数阈值 s ≥ bound 或 s > bound"""
    query: ThresholdQuery
    numerator: int
    denominator: int = Field(..., gt=0)
    strict: bool
    branch: str = Field(..., description="所用的定理分支")
    trivial: bool = Field(False, description="bound 已超过参数空间维数，结论平凡成立")

    @property
    def value(self) -> Fraction:
        return Fraction(self.numerator, self.denominator)

    @property
    def text(self) -> str:
        return f"s {'>' if self.strict else '≥'} {self.value}"

    @classmethod
    def from_fraction(cls, query: ThresholdQuery, bound: Fraction, strict: bool, branch: str,
                      trivial: bool = False) -> "ThresholdBound":
        return cls(query=query, numerator=bound.numerator, denominator=bound.denominator,
                   strict=strict, branch=branch, trivial=trivial)


# --- strata ---
class CriticalPoint(ReportModel):
    x: list[float]
    gradient_norm: float
    hessian_det: float
    hessian_sigma_min: float
    nondegenerate: bool


class MorseReport(ReportModel):
    verdict: Literal["MORSE", "NOT_MORSE"]
    critical_points: list[CriticalPoint]
    degenerate_witnesses: list[CriticalPoint]
    starts: int


class CorankWitness(ReportModel):
    x: list[float]
    corank: int
    sigma_min: float


class ImmersionReport(ReportModel):
    verdict: Literal["IMMERSION", "NOT_IMMERSION"]
    corank_witnesses: list[CorankWitness]
    min_singular_value: float = Field(..., description="搜索到的最小 σ_min(Jf)")
    starts: int


class UmbrellaReport(ReportModel):
    is_umbrella: bool
    x: list[float]
    stratum_defect: int
    codim: int


class CorankSurvey(ReportModel):
    histogram: dict[int, int] = Field(..., description="余秩 → 样本数")
    max_corank: int
    witnesses: list[CorankWitness]
    samples: int


# --- multipoint ---
class TupleWitness(ReportModel):
    points: list[list[float]]
    image_gap: float = Field(..., description="max_i ‖f(q_i) − f(q_1)‖∞")
    defect: Optional[int] = None


class CrossingLevel(ReportModel):
    d: int
    tuples: list[TupleWitness]
    all_transverse: bool


class NormalCrossingsReport(ReportModel):
    verdict: Literal["NORMAL_CROSSINGS", "NOT_NORMAL_CROSSINGS"]
    levels: list[CrossingLevel]


class InjectivityReport(ReportModel):
    verdict: Literal["INJECTIVE", "NOT_INJECTIVE"]
    double_points: list[TupleWitness]
    budget: int


class DfEstimate(ReportModel):
    d_hat: int
    violating_tuple: Optional[list[list[float]]] = None
    budget_per_d: int
    tested: list[int] = Field(..., description="检验过的 d")


# --- dimension ---
class ScalePoint(ReportModel):
    epsilon: float
    count: int


class BoxCountEstimate(ReportModel):
    """盒计数（Minkowski）维数，作为 Hausdorff 维数的数值替代"""
    dimension: float
    scales: list[ScalePoint]
    fit_r2: float
    ambient_dim: int
    points: int
    method: str = "box-counting (Minkowski) dimension, Hausdorff proxy"


class ProbeResult(ReportModel):
    trials: int
    hit_count: int
    hit_fraction: float


class SigmaDimensionReport(ReportModel):
    estimate: Optional[BoxCountEstimate] = Field(..., description="Σ 采样为空时为 None")
    threshold: ThresholdBound
    sample_size: int
    delta_star: int
    note: str = ""


# --- pareto ---
class ConvexityEstimate(ReportModel):
    alpha_hat: float
    strongly_convex: bool
    samples: int


class AtlasNode(ReportModel):
    weights: list[float]
    support: list[int] = Field(..., description="权重为正的目标下标（从0开始）")
    x_star: list[float]
    values: list[float]


class ParetoAtlas(ReportModel):
    ell: int
    resolution: int
    nodes: list[AtlasNode]


class SimplicialityWitness(ReportModel):
    kind: Literal["rank", "face", "injectivity"]
    weights: list[list[float]]
    detail: str


class SimplicialityReport(ReportModel):
    rank_condition_ok: bool
    ranks: list[int] = Field(..., description="各节点处 rank Jf(x*)")
    rank_violations: list[list[float]] = Field(..., description="秩条件不满足的节点权重")
    face_consistency: dict[str, bool]
    injectivity: dict[str, bool]
    non_singleton_faces: list[str]
    verdict: Literal["SIMPLICIAL_EVIDENCE", "WEAKLY_SIMPLICIAL_EVIDENCE", "FAILED"]
    witnesses: list[SimplicialityWitness]

    @model_validator(mode="after")
    def validate_witnesses(self):
        if self.verdict == "FAILED" and not self.witnesses:
            raise ValueError("FAILED 判定必须附带见证")
        return self


class TargetedResult(ReportModel):
    pi: list[list[float]]
    max_corank: int
    verdict: str


class PerturbationStudyReport(ReportModel):
    trials: int
    bad_count: int
    bad_fraction: float
    bad_samples: list[list[float]] = Field(..., description="坏扰动（按行展平）")
    dimension_estimate: Optional[BoxCountEstimate]
    threshold: ThresholdBound
    targeted: list[TargetedResult]


# --- cli ---
class ScenarioReport(ReportModel):
    schema_version: str = SCHEMA_VERSION
    command: str
    problem: Optional[str]
    seed: Optional[int]
    verdict: Optional[str] = None
    result: dict[str, Any]
