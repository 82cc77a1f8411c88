"""
场景配置模型
~~~~~~~~~~~

命令行场景配置（ScenarioConfig）及其子模型。配置文件是单个 JSON 文档，
其 JSON Schema 可通过 `--print-schema` 导出。
"""

import os
from typing import Literal, Optional, Union

from pydantic import BaseModel, Field, field_validator, model_validator

from .validators import Box, ScaleSpec, SearchSpec

Command = Literal[
    "defect", "classify", "sigma-sample", "sigma-dim", "threshold", "morse", "immersion",
    "umbrella", "normal-crossings", "injectivity", "df-estimate", "boxdim", "pareto-atlas",
    "simpliciality", "perturb-study", "measure-zero-probe",
]

# 依赖随机数的命令必须显式给出种子
STOCHASTIC_COMMANDS = frozenset({
    "sigma-sample", "sigma-dim", "morse", "immersion", "normal-crossings", "injectivity",
    "df-estimate", "simpliciality", "perturb-study", "measure-zero-probe",
})

ThresholdKind = Literal[
    "main1", "main2", "jet", "multipoint", "morse", "pareto", "whitney", "immersion",
    "injective", "injective_immersion", "embedding", "corank", "normal_crossings",
]

_REQUIRED_FIELDS: dict[str, tuple[str, ...]] = {
    "main1": ("dim_a", "delta_star"),
    "main2": ("dim_a", "delta_star"),
    "jet": ("m", "ell", "n", "k"),
    "multipoint": ("m", "ell", "n", "d"),
    "morse": ("m",),
    "pareto": ("m", "ell"),
    "whitney": ("m", "n"),
    "immersion": ("m", "ell", "n"),
    "injective": ("m", "ell", "n"),
    "injective_immersion": ("m", "ell", "n"),
    "embedding": ("m", "ell", "n"),
    "corank": ("m", "ell", "n"),
    "normal_crossings": ("m", "ell", "n", "d_f"),
}


class ThresholdQuery(BaseModel):
    """Hausdorff 指数阈值查询，r 为空表示光滑（C^∞）情形"""
    kind: ThresholdKind = Field(..., description="查询类型")
    dim_a: Optional[int] = Field(None, ge=0, description="参数空间维数 dim A")
    delta_star: Optional[int] = Field(None, description="δ*(F,Z)")
    r: Optional[int] = Field(None, ge=1, description="光滑阶 r，空表示 C^∞")
    m: Optional[int] = Field(None, ge=1, description="线性扰动的定义域维数 m")
    ell: Optional[int] = Field(None, ge=1, description="目标维数 ℓ")
    n: Optional[int] = Field(None, ge=1, description="流形维数 n = dim X")
    k: Optional[int] = Field(None, ge=1, description="余秩 k")
    d: Optional[int] = Field(None, ge=2, description="多点个数 d")
    d_f: Optional[int] = Field(None, ge=2, description="d_f")

    @model_validator(mode="after")
    def validate_required(self):
        missing = [name for name in _REQUIRED_FIELDS[self.kind] if getattr(self, name) is None]
        if missing:
            raise ValueError(f"{self.kind} 查询缺少字段: {', '.join(missing)}")
        return self


class InlineProblem(BaseModel):
    """内联问题定义"""
    kind: Literal["family", "map", "multiobjective", "cloud"] = Field(..., description="问题类型")
    source: str = Field("", description="映射源码")
    arity_x: int = Field(1, ge=1, description="状态变量个数 n")
    arity_a: int = Field(0, ge=0, description="参数个数 p")
    z_source: Optional[str] = Field(None, description="Z 的定义映射 h，变量写作 x1..xq")
    z_membership_tol: Optional[float] = Field(None, gt=0, description="Z 成员容差")
    x_box: Optional[Box] = Field(None, description="状态变量搜索盒")
    a_box: Optional[Box] = Field(None, description="参数搜索盒")
    points: Optional[list[list[float]]] = Field(None, description="点云（kind=cloud）")

    @model_validator(mode="after")
    def validate_kind(self):
        if self.kind == "family" and not self.z_source:
            raise ValueError("family 问题必须给出 z_source")
        if self.kind == "cloud" and not self.points:
            raise ValueError("cloud 问题必须给出 points")
        if self.kind != "cloud" and not self.source:
            raise ValueError("必须给出 source")
        return self


class ScenarioConfig(BaseModel):
    """场景配置数据模型"""
    command: Command = Field(..., description="要执行的流水线")
    problem: Optional[Union[str, InlineProblem]] = Field(None, description="注册表名称或内联问题")
    x: Optional[list[float]] = Field(None, description="状态点 x")
    a: Optional[list[float]] = Field(None, description="参数点 a")
    x_box: Optional[Box] = Field(None, description="覆盖问题自带的 x 搜索盒")
    a_box: Optional[Box] = Field(None, description="覆盖问题自带的 a 搜索盒")
    budget: Optional[int] = Field(None, ge=1, description="采样/多起点预算")
    seed: Optional[int] = Field(None, ge=0, lt=2 ** 64, description="64位随机种子")
    membership_tol: Optional[float] = Field(None, gt=0, description="Z 成员容差")
    rank_tol: Optional[float] = Field(None, gt=0, description="相对秩容差 τ")
    search: SearchSpec = Field(default_factory=SearchSpec, description="见证点搜索设置")
    scale_spec: ScaleSpec = Field(default_factory=ScaleSpec, description="盒计数尺度阶梯")
    query: Optional[ThresholdQuery] = Field(None, description="阈值查询（threshold 命令）")
    r: Optional[int] = Field(None, ge=1, description="族的光滑阶，空表示 C^∞")
    corank: int = Field(1, ge=1, description="层 S^k 的余秩 k")
    d_max: int = Field(3, ge=2, description="正规交叉检查的最大 d")
    resolution: int = Field(10, ge=1, description="权重单纯形网格分辨率 k")
    trials: Optional[int] = Field(None, ge=1, description="试验次数")
    perturbation_scale: float = Field(1.0, gt=0, description="扰动矩阵球半径")
    targeted: list[list[list[float]]] = Field(default_factory=list, description="定向检验的扰动矩阵列表")
    refine: bool = Field(True, description="Σ 采样是否投影细化")
    out_dir: str = Field(default_factory=lambda: os.getenv("LAB_OUTPUT_DIR", "reports"),
                         description="报告输出目录")
    format: Literal["json", "csv"] = Field("json", description="输出格式，csv 额外输出点云表")
    workers: Optional[int] = Field(None, ge=1, description="工作线程数，缺省读取 ENGINE_WORKERS")

    @field_validator("problem")
    @classmethod
    def validate_problem_name(cls, v):
        if isinstance(v, str) and not v.strip():
            raise ValueError("问题名称不能为空")
        return v

    @model_validator(mode="after")
    def validate_command(self):
        if self.command in STOCHASTIC_COMMANDS and self.seed is None:
            raise ValueError(f"命令 {self.command} 需要随机种子 seed")
        if self.command == "threshold":
            if self.query is None:
                raise ValueError("threshold 命令需要 query")
        elif self.problem is None:
            raise ValueError(f"命令 {self.command} 需要 problem")
        return self
